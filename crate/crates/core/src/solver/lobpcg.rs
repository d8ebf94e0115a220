//! Block preconditioned conjugate gradient eigensolver (LOBPCG) for the
//! largest eigenvalues of a Hermitian pencil `A x = tau B x` with `B`
//! positive definite on the working subspace.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::operator::{project_translations, LinearOperator};
use super::scalar::{dot, norm, Scalar};
use super::Preconditioner;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct EigenSettings {
    /// Relative residual `|A x - tau B x| / (|A x| + |tau| |B x|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block vectors beyond the requested count.
    pub guard: usize,
    pub seed: u64,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 300,
            guard: 3,
            seed: 0x5eed,
        }
    }
}

/// Eigenpairs in descending order, vectors `B`-orthonormal.
#[derive(Debug, Clone)]
pub struct Eigenpairs<T> {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<T>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Remaining (unconverged) block vectors; useful as a warm start.
    pub guard: Vec<Vec<T>>,
}

type Block<T> = Vec<Vec<T>>;

fn refs<T>(v: &Block<T>) -> Vec<&Vec<T>> {
    v.iter().collect()
}

fn apply_block<T: Scalar>(op: &dyn LinearOperator<T>, x: &Block<T>) -> Block<T> {
    x.iter()
        .map(|v| {
            let mut y = vec![T::zero(); v.len()];
            op.apply(v, &mut y);
            y
        })
        .collect()
}

fn gram<T: Scalar>(s: &[&Vec<T>], t: &[&Vec<T>]) -> DMatrix<T> {
    let k = s.len();
    let mut g = DMatrix::<T>::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = dot(s[i], t[j]);
            g[(i, j)] = v;
            g[(j, i)] = v.conjugate();
        }
    }
    g
}

/// `sum_j c[(j, col)] * s[j]` for each selected column.
fn combine<T: Scalar>(s: &[&Vec<T>], c: &DMatrix<T>, rows: std::ops::Range<usize>) -> Block<T> {
    let n = s[0].len();
    (0..c.ncols())
        .map(|col| {
            let mut out = vec![T::zero(); n];
            for j in rows.clone() {
                let w = c[(j, col)];
                if w == T::zero() {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(s[j].iter()) {
                    *o += w * *v;
                }
            }
            out
        })
        .collect()
}

/// Rayleigh-Ritz on the span of `s`. Returns Ritz values (descending) and
/// coefficient columns for the `keep` largest, `B`-orthonormal.
fn rayleigh_ritz<T: Scalar>(
    ga: &DMatrix<T>,
    gb: &DMatrix<T>,
    keep: usize,
) -> Result<(Vec<f64>, DMatrix<T>)> {
    let k = gb.nrows();
    let d: Vec<f64> = (0..k)
        .map(|i| {
            let v = gb[(i, i)].real();
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let scale = |g: &DMatrix<T>| {
        DMatrix::from_fn(k, k, |i, j| g[(i, j)].scale_re(d[i] * d[j]))
    };
    let gbs = scale(gb);
    let gas = scale(ga);
    let eb = SymmetricEigen::new(gbs);
    let lmax = eb.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..k)
        .filter(|&i| eb.eigenvalues[i] > 1e-14 * lmax.max(1e-300))
        .collect();
    if kept.len() < keep {
        return Err(Error::NotConverged {
            solver: "lobpcg (subspace collapsed)",
            iterations: 0,
            residual: f64::NAN,
        });
    }
    let z = DMatrix::from_fn(k, kept.len(), |i, j| {
        let c = kept[j];
        eb.eigenvectors[(i, c)].scale_re(1.0 / eb.eigenvalues[c].sqrt())
    });
    let h = z.adjoint() * gas * &z;
    let h = (&h + h.adjoint()).map(|v| v.scale_re(0.5));
    let eh = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| eh.eigenvalues[b].total_cmp(&eh.eigenvalues[a]));
    let vals: Vec<f64> = order[..keep].iter().map(|&i| eh.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(kept.len(), keep, |i, j| eh.eigenvectors[(i, order[j])]);
    let mut c = z * y;
    for i in 0..k {
        for j in 0..keep {
            c[(i, j)] = c[(i, j)].scale_re(d[i]);
        }
    }
    Ok((vals, c))
}

/// Largest `m` eigenpairs of `A x = tau B x`.
///
/// `start` supplies warm-start vectors (any count); the block is filled up
/// with seeded random vectors. `deflate_translations` keeps every search
/// direction free of rigid translations.
pub fn lobpcg_largest<T: Scalar>(
    a: &dyn LinearOperator<T>,
    b: &dyn LinearOperator<T>,
    prec: &dyn Preconditioner<T>,
    m: usize,
    start: &[Vec<T>],
    deflate_translations: bool,
    settings: &EigenSettings,
) -> Result<Eigenpairs<T>> {
    let n = a.dim();
    let bs = (m + settings.guard).min(n / 3).max(m);
    if m == 0 || bs > n {
        return Err(Error::InvalidInput(format!(
            "cannot compute {m} eigenpairs of a {n}-dimensional problem"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut x: Block<T> = Vec::with_capacity(bs);
    for v in start.iter().take(bs) {
        if v.len() == n {
            x.push(v.clone());
        }
    }
    while x.len() < bs {
        x.push((0..n).map(|_| T::from_re(rng.gen::<f64>() - 0.5)).collect());
    }
    if deflate_translations {
        x.iter_mut().for_each(|v| project_translations(v));
    }

    let mut ax = apply_block(a, &x);
    let mut bx = apply_block(b, &x);
    let (mut tau, c) = rayleigh_ritz(&gram(&refs(&x), &refs(&ax)), &gram(&refs(&x), &refs(&bx)), bs)?;
    x = combine(&refs(&x), &c, 0..bs);
    ax = combine(&refs(&ax), &c, 0..bs);
    bx = combine(&refs(&bx), &c, 0..bs);

    let mut p: Block<T> = Vec::new();
    let mut ap: Block<T> = Vec::new();
    let mut bp: Block<T> = Vec::new();
    let mut res = vec![f64::INFINITY; bs];

    for it in 0..=settings.max_iter {
        let mut r: Block<T> = Vec::with_capacity(bs);
        for j in 0..bs {
            let mut rj = ax[j].clone();
            let t = T::from_re(-tau[j]);
            for (ri, bi) in rj.iter_mut().zip(&bx[j]) {
                *ri += t * *bi;
            }
            let den = norm(&ax[j]) + tau[j].abs() * norm(&bx[j]);
            res[j] = if den > 0.0 { norm(&rj) / den } else { 0.0 };
            r.push(rj);
        }
        if res[..m].iter().all(|&e| e <= settings.tol) {
            let guard = x.split_off(m);
            return Ok(Eigenpairs {
                values: tau[..m].to_vec(),
                vectors: x,
                residuals: res[..m].to_vec(),
                iterations: it,
                guard,
            });
        }
        if it == settings.max_iter {
            break;
        }
        let active: Vec<usize> = (0..bs).filter(|&j| res[j] > settings.tol).collect();
        let mut w: Block<T> = active
            .iter()
            .map(|&j| {
                let mut z = vec![T::zero(); n];
                prec.precondition(&r[j], &mut z);
                z
            })
            .collect();
        if deflate_translations {
            w.iter_mut().for_each(|v| project_translations(v));
        }
        // Normalize the new directions to keep the Gram matrices balanced.
        for v in w.iter_mut() {
            let s = norm(v);
            if s > 0.0 {
                v.iter_mut().for_each(|e| *e = e.scale_re(1.0 / s));
            }
        }
        let aw = apply_block(a, &w);
        let bw = apply_block(b, &w);

        let nx = x.len();
        let nw = w.len();
        let s: Vec<&Vec<T>> = x.iter().chain(w.iter()).chain(p.iter()).collect();
        let sa: Vec<&Vec<T>> = ax.iter().chain(aw.iter()).chain(ap.iter()).collect();
        let sb: Vec<&Vec<T>> = bx.iter().chain(bw.iter()).chain(bp.iter()).collect();
        let ga = gram(&s, &sa);
        let gb = gram(&s, &sb);
        let (vals, c) = match rayleigh_ritz(&ga, &gb, bs) {
            Ok(v) => v,
            Err(_) if !p.is_empty() => {
                // Drop the conjugate directions and retry once.
                let k = nx + nw;
                let ga = ga.view((0, 0), (k, k)).into_owned();
                let gb = gb.view((0, 0), (k, k)).into_owned();
                rayleigh_ritz(&ga, &gb, bs)?
            }
            Err(e) => return Err(e),
        };
        let total = c.nrows();
        let s = &s[..total];
        let sa = &sa[..total];
        let sb = &sb[..total];
        let new_x = combine(s, &c, 0..total);
        let new_ax = combine(sa, &c, 0..total);
        let new_bx = combine(sb, &c, 0..total);
        p = combine(s, &c, nx..total);
        ap = combine(sa, &c, nx..total);
        bp = combine(sb, &c, nx..total);
        x = new_x;
        ax = new_ax;
        bx = new_bx;
        tau = vals;
    }
    Err(Error::NotConverged {
        solver: "lobpcg",
        iterations: settings.max_iter,
        residual: res[..m].iter().cloned().fold(0.0, f64::max),
    })
}
