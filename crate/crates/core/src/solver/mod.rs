//! Iterative solvers for the periodic and Bloch-mapped element operators.

mod lobpcg;
mod multigrid;
mod operator;
mod scalar;

pub use lobpcg::{lobpcg_largest, EigenSettings, Eigenpairs};
pub use multigrid::{Hierarchy, Multigrid};
pub use operator::{
    phase_table, project_translations, to_row_major, BlochOperator, ElementMatrices, LinearOperator,
};
pub use scalar::{axpy, dot, norm, Scalar};

use crate::error::{Error, Result};

/// Approximate inverse used by [`pcg`] and [`lobpcg_largest`].
pub trait Preconditioner<T: Scalar> {
    /// `z ~ A^{-1} r`; `z` is overwritten.
    fn precondition(&self, r: &[T], z: &mut [T]);
}

pub struct Identity;

impl<T: Scalar> Preconditioner<T> for Identity {
    fn precondition(&self, r: &[T], z: &mut [T]) {
        z.copy_from_slice(r);
    }
}

/// Outcome of a converged [`pcg`] solve.
#[derive(Debug, Clone, Copy)]
pub struct PcgInfo {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for Hermitian positive
/// (semi-)definite systems. `x` holds the initial guess on entry.
///
/// With `deflate_translations` the right-hand side, the iterates and the
/// preconditioned residuals are kept orthogonal to the rigid translations,
/// which makes the singular zone-center system solvable.
pub fn pcg<T: Scalar>(
    a: &dyn LinearOperator<T>,
    m: &dyn Preconditioner<T>,
    b: &[T],
    x: &mut [T],
    tol: f64,
    max_iter: usize,
    deflate_translations: bool,
) -> Result<PcgInfo> {
    let n = a.dim();
    let mut rhs = b.to_vec();
    if deflate_translations {
        project_translations(&mut rhs);
        project_translations(x);
    }
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(PcgInfo {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![T::zero(); n];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&rhs) {
        *ri = *bi - *ri;
    }
    if deflate_translations {
        project_translations(&mut r);
    }
    let mut res = norm(&r) / bnorm;
    if res <= tol {
        return Ok(PcgInfo {
            iterations: 0,
            residual: res,
        });
    }
    let mut z = vec![T::zero(); n];
    m.precondition(&r, &mut z);
    if deflate_translations {
        project_translations(&mut z);
    }
    let mut p = z.clone();
    let mut q = vec![T::zero(); n];
    let mut rz = dot(&r, &z).real();
    for it in 1..=max_iter {
        a.apply(&p, &mut q);
        let pq = dot(&p, &q).real();
        if !(pq > 0.0) {
            return Err(Error::NotConverged {
                solver: "pcg",
                iterations: it,
                residual: res,
            });
        }
        let alpha = T::from_re(rz / pq);
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        res = norm(&r) / bnorm;
        if res <= tol {
            if deflate_translations {
                project_translations(x);
            }
            return Ok(PcgInfo {
                iterations: it,
                residual: res,
            });
        }
        m.precondition(&r, &mut z);
        if deflate_translations {
            project_translations(&mut z);
        }
        let rz_new = dot(&r, &z).real();
        let beta = T::from_re(rz_new / rz);
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = *zi + beta * *pi;
        }
    }
    Err(Error::NotConverged {
        solver: "pcg",
        iterations: max_iter,
        residual: res,
    })
}
