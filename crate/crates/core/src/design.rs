//! Density chain on the periodic voxel grid: raw design variables, Helmholtz
//! (PDE) filtered field and tanh-projected physical field, plus the
//! eroded/intermediate/dilated realizations of the robust formulation.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

/// Periodic Helmholtz filter `-(r / (2 sqrt 3))^2 lap(u) + u = rho`.
///
/// The Laplacian is the 7-point stencil on element centers. With periodic
/// boundaries the operator is diagonal in the discrete Fourier basis, so
/// the solve is a forward FFT, a pointwise division and an inverse FFT.
pub struct HelmholtzFilter {
    grid: VoxelGrid,
    radius: f64,
    symbol: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for HelmholtzFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HelmholtzFilter")
            .field("n", &self.grid.n())
            .field("radius", &self.radius)
            .finish()
    }
}

impl HelmholtzFilter {
    pub fn new(grid: VoxelGrid, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("filter radius {radius}")));
        }
        let n = grid.n();
        let len = radius / (2.0 * 3f64.sqrt());
        let c = (len / grid.h()).powi(2);
        let eig1: Vec<f64> = (0..n)
            .map(|m| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * m as f64 / n as f64).cos())
            .collect();
        let mut symbol = Vec::with_capacity(grid.num_elements());
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    symbol.push(1.0 + c * (eig1[i] + eig1[j] + eig1[k]));
                }
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid,
            radius,
            symbol,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid(&self) -> VoxelGrid {
        self.grid
    }

    /// Filters an element field. Values outside `[0, 1]` are clamped first.
    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        assert_eq!(rho.len(), self.grid.num_elements());
        let mut clamped = 0usize;
        let input: Vec<f64> = rho
            .iter()
            .map(|&v| {
                if (0.0..=1.0).contains(&v) {
                    v
                } else {
                    clamped += 1;
                    v.clamp(0.0, 1.0)
                }
            })
            .collect();
        if clamped > 0 {
            log::warn!("filter input: clamped {clamped} values outside [0, 1]");
        }
        self.apply_linear(&input)
    }

    /// The bare linear operator, used for the adjoint (the filter is
    /// self-adjoint) and for sensitivities, which must not be clamped.
    pub fn apply_linear(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.grid.num_elements());
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut buf, &self.fwd);
        for (b, s) in buf.iter_mut().zip(&self.symbol) {
            *b /= *s;
        }
        self.transform(&mut buf, &self.inv);
        let scale = 1.0 / self.grid.num_elements() as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        // x lines are contiguous
        plan.process(buf);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    line[j] = buf[i + n * (j + n * k)];
                }
                plan.process(&mut line);
                for j in 0..n {
                    buf[i + n * (j + n * k)] = line[j];
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                for k in 0..n {
                    line[k] = buf[i + n * (j + n * k)];
                }
                plan.process(&mut line);
                for k in 0..n {
                    buf[i + n * (j + n * k)] = line[k];
                }
            }
        }
    }
}

/// Tanh threshold projection of a single filtered density.
#[inline]
pub fn project_value(rho_tilde: f64, eta: f64, beta: f64) -> f64 {
    let a = (beta * eta).tanh();
    (a + (beta * (rho_tilde - eta)).tanh()) / (a + (beta * (1.0 - eta)).tanh())
}

/// Derivative of [`project_value`] with respect to the filtered density.
#[inline]
pub fn project_derivative(rho_tilde: f64, eta: f64, beta: f64) -> f64 {
    let a = (beta * eta).tanh();
    let t = (beta * (rho_tilde - eta)).tanh();
    beta * (1.0 - t * t) / (a + (beta * (1.0 - eta)).tanh())
}

pub fn project(rho_tilde: &[f64], eta: f64, beta: f64) -> Vec<f64> {
    assert!(beta > 0.0 && eta > 0.0 && eta < 1.0);
    rho_tilde
        .iter()
        .map(|&r| project_value(r, eta, beta))
        .collect()
}

pub fn project_derivatives(rho_tilde: &[f64], eta: f64, beta: f64) -> Vec<f64> {
    rho_tilde
        .iter()
        .map(|&r| project_derivative(r, eta, beta))
        .collect()
}

/// Volume fraction of an element field on a uniform grid.
pub fn volume_fraction(rho_bar: &[f64]) -> f64 {
    rho_bar.iter().sum::<f64>() / rho_bar.len() as f64
}

/// Mean of `4 rho (1 - rho)`; zero for a black-and-white design.
pub fn grayness(rho_bar: &[f64]) -> f64 {
    rho_bar.iter().map(|&r| 4.0 * r * (1.0 - r)).sum::<f64>() / rho_bar.len() as f64
}

/// Thresholds of the eroded/intermediate/dilated realizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustTriple {
    pub delta_eta: f64,
}

impl RobustTriple {
    pub fn new(delta_eta: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&delta_eta) {
            return Err(Error::InvalidInput(format!(
                "threshold offset must lie in [0, 0.5), got {delta_eta}"
            )));
        }
        Ok(Self { delta_eta })
    }

    pub fn eta_eroded(&self) -> f64 {
        0.5 + self.delta_eta
    }

    pub fn eta_intermediate(&self) -> f64 {
        0.5
    }

    pub fn eta_dilated(&self) -> f64 {
        0.5 - self.delta_eta
    }

    pub fn thresholds(&self) -> [f64; 3] {
        [self.eta_eroded(), self.eta_intermediate(), self.eta_dilated()]
    }
}

/// Which physical realization fed an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realization {
    Eroded,
    Intermediate,
    Dilated,
}

impl Realization {
    pub const ALL: [Realization; 3] = [
        Realization::Eroded,
        Realization::Intermediate,
        Realization::Dilated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Realization::Eroded => "eroded",
            Realization::Intermediate => "intermediate",
            Realization::Dilated => "dilated",
        }
    }
}

/// Raw, filtered and projected fields of one design.
#[derive(Debug, Clone)]
pub struct DesignField {
    pub rho: Vec<f64>,
    pub rho_tilde: Vec<f64>,
    pub eta: f64,
    pub beta1: f64,
    pub radius: f64,
    pub rho_bar: Vec<f64>,
}

impl DesignField {
    pub fn new(filter: &HelmholtzFilter, rho: Vec<f64>, eta: f64, beta1: f64) -> Result<Self> {
        check_projection(eta, beta1)?;
        let rho_tilde = filter.apply(&rho);
        let rho_bar = project(&rho_tilde, eta, beta1);
        Ok(Self {
            rho,
            rho_tilde,
            eta,
            beta1,
            radius: filter.radius(),
            rho_bar,
        })
    }
}

fn check_projection(eta: f64, beta: f64) -> Result<()> {
    if !(beta > 0.0) || !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "projection needs beta > 0 and 0 < eta < 1 (beta = {beta}, eta = {eta})"
        )));
    }
    Ok(())
}

/// The three projected realizations of one filtered design.
#[derive(Debug, Clone)]
pub struct RobustRealizations {
    pub rho_tilde: Vec<f64>,
    pub eroded: Vec<f64>,
    pub intermediate: Vec<f64>,
    pub dilated: Vec<f64>,
}

impl RobustRealizations {
    pub fn get(&self, r: Realization) -> &[f64] {
        match r {
            Realization::Eroded => &self.eroded,
            Realization::Intermediate => &self.intermediate,
            Realization::Dilated => &self.dilated,
        }
    }
}

pub fn realize_robust(
    filter: &HelmholtzFilter,
    rho: &[f64],
    beta1: f64,
    triple: RobustTriple,
) -> Result<RobustRealizations> {
    check_projection(0.5, beta1)?;
    let rho_tilde = filter.apply(rho);
    let [te, ti, td] = triple.thresholds();
    Ok(RobustRealizations {
        eroded: project(&rho_tilde, te, beta1),
        intermediate: project(&rho_tilde, ti, beta1),
        dilated: project(&rho_tilde, td, beta1),
        rho_tilde,
    })
}

/// Chain rule from a physical-field gradient to the raw variables:
/// projection derivative, then the (self-adjoint) filter.
pub fn chain_to_raw(
    filter: &HelmholtzFilter,
    rho_tilde: &[f64],
    eta: f64,
    beta1: f64,
    d_phys: &[f64],
) -> Vec<f64> {
    let scaled: Vec<f64> = rho_tilde
        .iter()
        .zip(d_phys)
        .map(|(&r, &g)| project_derivative(r, eta, beta1) * g)
        .collect();
    filter.apply_linear(&scaled)
}

/// Fixed-point update of the dilated volume bound so that the
/// intermediate design meets the prescribed volume fraction.
pub fn rescale_dilated_bound(current: f64, f_star: f64, f_intermediate: f64) -> f64 {
    if f_intermediate <= 0.0 {
        return 1.0;
    }
    (current * f_star / f_intermediate).clamp(f_star, 1.0)
}

/// Hollow sphere centered in the cell, voxelized by centroid membership.
pub fn hollow_sphere(grid: &VoxelGrid, r_inner: f64, r_outer: f64) -> Vec<f64> {
    (0..grid.num_elements())
        .map(|e| {
            let c = grid.centroid(e);
            let d = ((c[0] - 0.5).powi(2) + (c[1] - 0.5).powi(2) + (c[2] - 0.5).powi(2)).sqrt();
            if d >= r_inner && d <= r_outer {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Radii of the reference hollow-sphere cell.
pub const HOLLOW_SPHERE_RADII: (f64, f64) = (0.474, 0.541);

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_helmholtz(grid: &VoxelGrid, radius: f64) -> DMatrix<f64> {
        let n = grid.n();
        let ne = grid.num_elements();
        let c = (radius / (2.0 * 3f64.sqrt()) / grid.h()).powi(2);
        let mut a = DMatrix::<f64>::zeros(ne, ne);
        for e in 0..ne {
            let [i, j, k] = grid.coords(e);
            a[(e, e)] += 1.0 + 6.0 * c;
            let nb = [
                grid.index((i + 1) % n, j, k),
                grid.index((i + n - 1) % n, j, k),
                grid.index(i, (j + 1) % n, k),
                grid.index(i, (j + n - 1) % n, k),
                grid.index(i, j, (k + 1) % n),
                grid.index(i, j, (k + n - 1) % n),
            ];
            for m in nb {
                a[(e, m)] -= c;
            }
        }
        a
    }

    #[test]
    fn constant_field_is_preserved() {
        let g = VoxelGrid::new(6).unwrap();
        let f = HelmholtzFilter::new(g, 0.2).unwrap();
        let out = f.apply(&vec![0.37; g.num_elements()]);
        assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-14));
    }

    #[test]
    fn impulse_matches_dense_solve() {
        let g = VoxelGrid::new(8).unwrap();
        let r = 0.3;
        let f = HelmholtzFilter::new(g, r).unwrap();
        let mut rho = vec![0.0; g.num_elements()];
        let e0 = g.index(2, 5, 1);
        rho[e0] = 1.0;
        let fast = f.apply(&rho);
        let dense = dense_helmholtz(&g, r)
            .lu()
            .solve(&DVector::from_vec(rho.clone()))
            .unwrap();
        for e in 0..g.num_elements() {
            assert!((fast[e] - dense[e]).abs() < 1e-12);
        }
        let mass: f64 = fast.iter().sum();
        assert!((mass - 1.0).abs() < 1e-10);
        // symmetric decay about the impulse
        let a = fast[g.index(3, 5, 1)];
        let b = fast[g.index(1, 5, 1)];
        let c = fast[g.index(2, 6, 1)];
        assert!((a - b).abs() < 1e-14 && (a - c).abs() < 1e-14);
        assert!(fast[e0] > a && a > fast[g.index(4, 5, 1)]);
    }

    #[test]
    fn filter_is_self_adjoint() {
        let g = VoxelGrid::new(7).unwrap();
        let f = HelmholtzFilter::new(g, 0.15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..g.num_elements()).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..g.num_elements()).map(|_| rng.gen()).collect();
        let fa = f.apply(&a);
        let fb = f.apply(&b);
        let lhs: f64 = fa.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(&fb).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn projection_reference_values() {
        assert!((project_value(0.5, 0.5, 7.0) - 0.5).abs() < 1e-15);
        assert!((project_value(0.9, 0.5, 50.0) - 1.0).abs() < 1e-8);
        // beta = 1, rho_tilde = 0.3, eta = 0.5 evaluated by hand
        let expect = (0.5f64.tanh() + (-0.2f64).tanh()) / (0.5f64.tanh() + 0.5f64.tanh());
        assert!((project_value(0.3, 0.5, 1.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn projection_derivative_matches_central_differences() {
        for &beta in &[1.0, 2.0, 8.0] {
            for &eta in &[0.45, 0.5, 0.55] {
                for i in 0..=20 {
                    let x = i as f64 / 20.0;
                    let h = 1e-6;
                    let fd = (project_value(x + h, eta, beta) - project_value(x - h, eta, beta))
                        / (2.0 * h);
                    let an = project_derivative(x, eta, beta);
                    assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{beta} {eta} {x}");
                }
            }
        }
    }

    #[test]
    fn robust_triple_validation_and_identity() {
        assert!(RobustTriple::new(0.5).is_err());
        assert!(RobustTriple::new(-0.1).is_err());
        let g = VoxelGrid::new(6).unwrap();
        let f = HelmholtzFilter::new(g, 0.2).unwrap();
        let ones = vec![1.0; g.num_elements()];
        let r = realize_robust(&f, &ones, 50.0, RobustTriple::new(0.05).unwrap()).unwrap();
        for v in r.eroded.iter().chain(&r.intermediate).chain(&r.dilated) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho: Vec<f64> = (0..g.num_elements()).map(|_| rng.gen()).collect();
        let z = realize_robust(&f, &rho, 8.0, RobustTriple::new(0.0).unwrap()).unwrap();
        assert_eq!(z.eroded, z.dilated);
        assert_eq!(z.eroded, z.intermediate);
    }

    #[test]
    fn hollow_sphere_seed_orders_realization_volumes() {
        // r = 0.05 only smooths across neighbours once h is well below r.
        let g = VoxelGrid::new(64).unwrap();
        let f = HelmholtzFilter::new(g, 0.05).unwrap();
        let (ri, ro) = HOLLOW_SPHERE_RADII;
        let seed = hollow_sphere(&g, ri, ro);
        let r = realize_robust(&f, &seed, 50.0, RobustTriple::new(0.05).unwrap()).unwrap();
        let (ve, vi, vd) = (
            volume_fraction(&r.eroded),
            volume_fraction(&r.intermediate),
            volume_fraction(&r.dilated),
        );
        assert!(ve < vi && vi < vd, "{ve} {vi} {vd}");
        for e in 0..g.num_elements() {
            assert!(r.eroded[e] <= r.intermediate[e] && r.intermediate[e] <= r.dilated[e]);
        }
    }

    #[test]
    fn volume_fraction_examples() {
        assert_eq!(volume_fraction(&[1.0; 27]), 1.0);
        let half: Vec<f64> = (0..64).map(|i| if i < 32 { 1.0 } else { 0.0 }).collect();
        assert_eq!(volume_fraction(&half), 0.5);
        let g = VoxelGrid::new(64).unwrap();
        let (ri, ro) = HOLLOW_SPHERE_RADII;
        let f = volume_fraction(&hollow_sphere(&g, ri, ro));
        assert!((f - 0.2).abs() < 0.005, "{f}");
    }

    #[test]
    fn grayness_of_black_white_is_zero() {
        assert_eq!(grayness(&[0.0, 1.0, 1.0, 0.0]), 0.0);
        assert!((grayness(&[0.5; 4]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dilated_bound_rescaling_is_clamped() {
        assert!((rescale_dilated_bound(0.2, 0.2, 0.1) - 0.4).abs() < 1e-15);
        assert_eq!(rescale_dilated_bound(0.2, 0.2, 0.4), 0.2);
        assert_eq!(rescale_dilated_bound(0.9, 0.2, 0.1), 1.0);
    }

    #[test]
    fn filter_radius_sets_feature_length() {
        // smoothing length of the impulse response ~ r/(2 sqrt 3) in cell units
        let g = VoxelGrid::new(64).unwrap();
        let f = HelmholtzFilter::new(g, 0.05).unwrap();
        let mut rho = vec![0.0; g.num_elements()];
        rho[g.index(32, 32, 32)] = 1.0;
        let out = f.apply_linear(&rho);
        let peak = out[g.index(32, 32, 32)];
        let mut w = 0;
        while out[g.index(32 + w, 32, 32)] > 0.5 * peak {
            w += 1;
        }
        // the half-width of the kernel stays around one to two voxels
        assert!((1..=3).contains(&w), "{w}");
    }

    #[test]
    fn clamps_out_of_range_input() {
        let g = VoxelGrid::new(4).unwrap();
        let f = HelmholtzFilter::new(g, 0.1).unwrap();
        let out = f.apply(&vec![1.5; g.num_elements()]);
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }
}
