//! Design sensitivities with respect to the physical densities.
//!
//! For an eigenpair with `phi^H K0 phi = 1` the load-factor inverse obeys
//! `tau = -phi^H K_sigma phi`, and `K_sigma` depends on the densities
//! directly, through the macroscopic strain `eps0 = S sigma0` and through
//! the cell solutions `chi`. The last dependence is removed with a single
//! adjoint solve because `K_sigma` is linear in `X_e eps0`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::bloch::{bloch_map, BucklingSetup, WaveVector};
use crate::element::{interpolate_material_derivative, Matrix6, Vector6};
use crate::error::{Error, Result};
use crate::homogenize::{element_energy_matrix, Homogenization, SolveSettings};
use crate::grid::Connectivity;
use crate::solver::{pcg, Multigrid};

pub use crate::design::chain_to_raw;

/// Per-element derivative of the effective matrix, `E'_e c_e`.
pub fn dc_drho(hom: &Homogenization) -> Vec<Matrix6> {
    (0..hom.grid.num_elements())
        .map(|e| {
            let (dk0, _) = interpolate_material_derivative(hom.rho_bar[e], &hom.material);
            element_energy_matrix(&hom.element, &hom.element_chi(e)) * dk0
        })
        .collect()
}

/// Gradients of the homogenized scalars with respect to `rho_bar`.
#[derive(Debug, Clone)]
pub struct PropertyGradients {
    pub d_e: Vec<f64>,
    pub d_kappa: Vec<f64>,
    pub d_ar: Vec<f64>,
    pub d_f: Vec<f64>,
}

pub fn property_gradients(hom: &Homogenization) -> PropertyGradients {
    let p = &hom.props;
    let c = &p.c_bar;
    let s1: Vector6 = p.s_bar.column(0).into_owned();
    let e2 = p.e_bar * p.e_bar;
    let den = c[(0, 0)] - c[(0, 1)];
    let ne = hom.grid.num_elements();
    let mut out = PropertyGradients {
        d_e: Vec::with_capacity(ne),
        d_kappa: Vec::with_capacity(ne),
        d_ar: Vec::with_capacity(ne),
        d_f: vec![1.0 / ne as f64; ne],
    };
    for dc in dc_drho(hom) {
        out.d_e.push(e2 * (s1.transpose() * dc * s1)[(0, 0)]);
        out.d_kappa.push((dc[(0, 0)] + 2.0 * dc[(0, 1)]) / 3.0);
        out.d_ar.push(2.0 * dc[(5, 5)] / den - 2.0 * c[(5, 5)] * (dc[(0, 0)] - dc[(0, 1)]) / (den * den));
    }
    out
}

/// One eigenpair entering an aggregated buckling measure.
#[derive(Debug, Clone, Copy)]
pub struct WeightedMode<'a> {
    pub k: WaveVector,
    pub tau: f64,
    /// `K0`-normalized mode.
    pub mode: &'a [Complex64],
    pub weight: f64,
}

/// Gradient of `sum_i w_i tau_i` with respect to `rho_bar`.
///
/// The weighted modes are folded into one Gauss-point tensor field before
/// the adjoint solve, so the cost is one linear solve regardless of the
/// number of modes; the result is invariant under unitary mixing of modes
/// that share a wave vector, eigenvalue and weight.
pub fn weighted_tau_gradient(
    setup: &BucklingSetup<'_>,
    modes: &[WeightedMode<'_>],
    settings: &SolveSettings,
) -> Result<Vec<f64>> {
    let hom = setup.hom;
    let ne = hom.grid.num_elements();
    let elem = &hom.element;
    let conn = hom.connectivity();

    // m[e][g]: weighted Voigt form of Re sum_c conj(G phi_c) (G phi_c)^T;
    // ek[e]: weighted tau * phi_e^H k0 phi_e.
    let mut m = vec![[Vector6::zeros(); 8]; ne];
    let mut ek = vec![0.0; ne];
    for wm in modes {
        if wm.mode.len() != hom.grid.num_dofs() {
            return Err(Error::InvalidInput("mode length does not match the grid".into()));
        }
        let ph = bloch_map(&wm.k);
        for e in 0..ne {
            let pe = gather(conn, &ph, e, wm.mode);
            let mut kphi = 0.0;
            for r in 0..24 {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..24 {
                    acc += pe[c] * elem.k0[(r, c)];
                }
                kphi += (pe[r].conj() * acc).re;
            }
            ek[e] += wm.weight * wm.tau * kphi;
            for g in 0..8 {
                let grad = &elem.grad[g];
                let mut mm = Matrix3::<f64>::zeros();
                for c in 0..3 {
                    let mut v = Vector3::<Complex64>::zeros();
                    for a in 0..8 {
                        for i in 0..3 {
                            v[i] += pe[3 * a + c] * grad[(i, a)];
                        }
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            mm[(i, j)] += (v[i].conj() * v[j]).re;
                        }
                    }
                }
                let mv = Vector6::new(
                    mm[(0, 0)],
                    mm[(1, 1)],
                    mm[(2, 2)],
                    mm[(1, 2)] + mm[(2, 1)],
                    mm[(0, 2)] + mm[(2, 0)],
                    mm[(0, 1)] + mm[(1, 0)],
                );
                m[e][g] += mv * wm.weight;
            }
        }
    }

    let eps0 = setup.eps0;
    let cu = elem.c;
    let w = elem.weight;
    let mut grad = vec![0.0; ne];
    let mut g_eps = Vector6::zeros();
    let mut q = vec![0.0; hom.grid.num_dofs()];
    let mut sig_b = Vec::with_capacity(ne);
    let mut xes = Vec::with_capacity(ne);
    for e in 0..ne {
        let xe = hom.element_chi(e);
        let u = xe * eps0;
        let s_e = hom.e_ks[e];
        let (dk0, dks) = interpolate_material_derivative(hom.rho_bar[e], &hom.material);
        let mut qe = 0.0;
        let mut bts = nalgebra::SVector::<f64, 24>::zeros();
        let mut bcm = nalgebra::SVector::<f64, 24>::zeros();
        for g in 0..8 {
            let sig = cu * (eps0 - elem.b[g] * u);
            let cm = cu * m[e][g];
            qe += w * m[e][g].dot(&sig);
            bts += elem.b[g].transpose() * sig * w;
            bcm += elem.b[g].transpose() * cm * w;
            // (I - B X)^T C m
            g_eps += (cm - xe.transpose() * (elem.b[g].transpose() * cm)) * (w * s_e);
        }
        grad[e] = -dk0 * ek[e] - dks * qe;
        for (a, &n) in conn.nodes[e].iter().enumerate() {
            for i in 0..3 {
                q[3 * n as usize + i] -= s_e * bcm[3 * a + i];
            }
        }
        sig_b.push(bts);
        xes.push(xe);
    }

    // Macroscopic-strain coupling.
    let sg = hom.props.s_bar * g_eps;
    for e in 0..ne {
        let (dk0, _) = interpolate_material_derivative(hom.rho_bar[e], &hom.material);
        if dk0 != 0.0 {
            let ce = element_energy_matrix(elem, &xes[e]);
            grad[e] += dk0 * (sg.transpose() * ce * eps0)[(0, 0)];
        }
    }

    // Adjoint for the cell-solution dependence: K0 psi = q.
    let h = &hom.hierarchy;
    let op = h.operator::<f64>([1.0; 8]);
    let mg = Multigrid::new(h, [1.0; 8], true);
    let mut psi = vec![0.0; q.len()];
    pcg(&op, &mg, &q, &mut psi, settings.pcg_tol, settings.pcg_max_iter, true)?;
    for e in 0..ne {
        let (dk0, _) = interpolate_material_derivative(hom.rho_bar[e], &hom.material);
        let mut acc = 0.0;
        for (a, &n) in conn.nodes[e].iter().enumerate() {
            for i in 0..3 {
                acc += psi[3 * n as usize + i] * sig_b[e][3 * a + i];
            }
        }
        grad[e] -= dk0 * acc;
    }
    Ok(grad)
}

fn gather(conn: &Connectivity, ph: &[Complex64; 8], e: usize, x: &[Complex64]) -> [Complex64; 24] {
    let mut out = [Complex64::new(0.0, 0.0); 24];
    for a in 0..8 {
        let n = 3 * conn.nodes[e][a] as usize;
        let p = ph[conn.wraps[e][a] as usize];
        for c in 0..3 {
            out[3 * a + c] = x[n + c] * p;
        }
    }
    out
}

/// Gradient of a single `K0`-normalized eigenpair.
pub fn dtau_drho(
    setup: &BucklingSetup<'_>,
    k: &WaveVector,
    tau: f64,
    mode: &[Complex64],
    settings: &SolveSettings,
) -> Result<Vec<f64>> {
    weighted_tau_gradient(
        setup,
        &[WeightedMode {
            k: *k,
            tau,
            mode,
            weight: 1.0,
        }],
        settings,
    )
}

/// Central difference of `f` along coordinate `i`.
pub fn central_difference<F>(f: &mut F, x: &[f64], i: usize, step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut xp = x.to_vec();
    xp[i] += step;
    let fp = f(&xp)?;
    xp[i] = x[i] - step;
    let fm = f(&xp)?;
    Ok((fp - fm) / (2.0 * step))
}

/// Result of checking one gradient entry against central differences.
#[derive(Debug, Clone, Copy)]
pub struct FdCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub step: f64,
    pub rel_err: f64,
}

/// Compares `analytic[i]` with central differences over a sweep of steps
/// (`1e-4 .. 1e-7` by default) and keeps the step with the smallest error.
/// The error is relative to `scale`, usually the gradient's max norm.
pub fn fd_check<F>(
    f: &mut F,
    x: &[f64],
    analytic: &[f64],
    indices: &[usize],
    steps: &[f64],
    scale: f64,
) -> Result<Vec<FdCheck>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let steps = if steps.is_empty() {
        &[1e-4, 1e-5, 1e-6, 1e-7][..]
    } else {
        steps
    };
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let mut best: Option<FdCheck> = None;
        for &h in steps {
            let num = central_difference(f, x, i, h)?;
            let err = (num - analytic[i]).abs() / scale.max(analytic[i].abs()).max(1e-300);
            if best.is_none_or(|b| err < b.rel_err) {
                best = Some(FdCheck {
                    index: i,
                    analytic: analytic[i],
                    numeric: num,
                    step: h,
                    rel_err: err,
                });
            }
        }
        out.push(best.expect("at least one step"));
    }
    Ok(out)
}
