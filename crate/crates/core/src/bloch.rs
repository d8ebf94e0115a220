//! Linear buckling of the periodic cell under Bloch-Floquet conditions.
//!
//! For a wave vector `k` the displacement satisfies `u(x + e_i) =
//! exp(i k_i) u(x)`. The pencil `-K_sigma(k) phi = tau K0(k) phi` is solved
//! for its largest `tau`; the critical load factor is `1 / tau`.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::element::{element_stress_stiffness, ElementStress, Vector6};
use crate::error::{Error, Result};
use crate::homogenize::{Homogenization, LoadCase, SolveSettings, StressModulus};
use crate::solver::{
    lobpcg_largest, phase_table, BlochOperator, ElementMatrices, LinearOperator, Multigrid, Scalar,
};

/// Wave vector with components in `[-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveVector(pub [f64; 3]);

impl WaveVector {
    pub const GAMMA: WaveVector = WaveVector([0.0; 3]);

    pub fn new(k: [f64; 3]) -> Result<Self> {
        if k.iter().any(|v| !v.is_finite() || v.abs() > PI + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "wave vector {k:?} outside the first Brillouin zone"
            )));
        }
        Ok(Self(k))
    }

    pub fn is_gamma(&self) -> bool {
        self.0.iter().all(|v| v.abs() < 1e-14)
    }

    /// True when the Bloch map is real (every component `0` or `+-pi`).
    pub fn is_real(&self) -> bool {
        phase_table::<f64>(self.0).is_some()
    }

    pub fn neg(&self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Phase factors per wrap code of the Bloch map at `k`; the zone center
/// gives the periodic map used for homogenization.
pub fn bloch_map(k: &WaveVector) -> [Complex64; 8] {
    phase_table::<Complex64>(k.0).expect("complex phases always exist")
}

/// One sample of a path through the Brillouin zone.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub arclength: f64,
    pub k: WaveVector,
    pub label: Option<String>,
}

/// Piecewise-linear path made of connected legs; consecutive legs may be
/// disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct IbzPath {
    pub legs: Vec<Vec<(String, WaveVector)>>,
    pub samples_per_segment: usize,
}

fn named(name: &str, k: [f64; 3]) -> (String, WaveVector) {
    (name.to_string(), WaveVector(k))
}

impl IbzPath {
    /// Boundary of the irreducible zone of a cubic cell under hydrostatic
    /// load: Gamma-X-M-Gamma-R-X | M-R.
    pub fn cubic(samples_per_segment: usize) -> Self {
        let g = named("G", [0.0; 3]);
        let x = named("X", [PI, 0.0, 0.0]);
        let m = named("M", [PI, PI, 0.0]);
        let r = named("R", [PI, PI, PI]);
        Self {
            legs: vec![
                vec![g.clone(), x.clone(), m.clone(), g, r.clone(), x],
                vec![m, r],
            ],
            samples_per_segment,
        }
    }

    /// Boundary of the irreducible zone for uniaxial load along x, where
    /// the y and z axes stay equivalent.
    pub fn tetragonal(samples_per_segment: usize) -> Self {
        let g = named("G", [0.0; 3]);
        let x = named("X", [PI, 0.0, 0.0]);
        let y = named("Y", [0.0, PI, 0.0]);
        let m = named("M", [PI, PI, 0.0]);
        let h = named("H", [0.0, PI, PI]);
        let r = named("R", [PI, PI, PI]);
        Self {
            legs: vec![
                vec![g.clone(), y.clone(), h.clone(), g, x.clone(), m.clone(), r.clone(), x],
                vec![y, m],
                vec![h, r],
            ],
            samples_per_segment,
        }
    }

    pub fn for_load(load: &LoadCase, samples_per_segment: usize) -> Self {
        match load {
            LoadCase::Hydrostatic => Self::cubic(samples_per_segment),
            _ => Self::tetragonal(samples_per_segment),
        }
    }

    pub fn reversed(&self) -> Self {
        let mut legs: Vec<_> = self.legs.iter().rev().cloned().collect();
        legs.iter_mut().for_each(|l| l.reverse());
        Self {
            legs,
            samples_per_segment: self.samples_per_segment,
        }
    }

    pub fn samples(&self) -> Vec<PathSample> {
        let nseg = self.samples_per_segment.max(1);
        let mut out = Vec::new();
        let mut s = 0.0;
        for leg in &self.legs {
            for w in leg.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let len = (0..3).map(|i| (b.1 .0[i] - a.1 .0[i]).powi(2)).sum::<f64>().sqrt();
                for j in 0..nseg {
                    let t = j as f64 / nseg as f64;
                    let k = [0, 1, 2].map(|i| a.1 .0[i] + t * (b.1 .0[i] - a.1 .0[i]));
                    out.push(PathSample {
                        arclength: s + t * len,
                        k: WaveVector(k),
                        label: (j == 0).then(|| a.0.clone()),
                    });
                }
                s += len;
            }
            if let Some(last) = leg.last() {
                out.push(PathSample {
                    arclength: s,
                    k: last.1,
                    label: Some(last.0.clone()),
                });
            }
        }
        out
    }
}

/// Target wave vectors used during optimization.
pub fn ibz_targets(load: &LoadCase) -> Vec<WaveVector> {
    let long = WaveVector([PI / 20.0, 0.0, 0.0]);
    match load {
        LoadCase::Hydrostatic => vec![
            WaveVector::GAMMA,
            WaveVector([PI, 0.0, 0.0]),
            WaveVector([PI, PI, 0.0]),
            WaveVector([PI, PI, PI]),
            long,
        ],
        _ => vec![
            WaveVector::GAMMA,
            WaveVector([PI, 0.0, 0.0]),
            WaveVector([0.0, PI, 0.0]),
            WaveVector([PI, PI, 0.0]),
            WaveVector([0.0, PI, PI]),
            WaveVector([PI, PI, PI]),
            long,
        ],
    }
}

/// Pre-stressed cell ready for eigenvalue solves at any wave vector.
pub struct BucklingSetup<'a> {
    pub hom: &'a Homogenization,
    pub sigma0: Vector6,
    pub eps0: Vector6,
    /// Buckling-modulus stress per element and Gauss point.
    pub stress: Vec<ElementStress>,
    /// Nodal blocks of the element stress stiffness.
    pub k_sigma: ElementMatrices,
}

impl<'a> BucklingSetup<'a> {
    pub fn new(hom: &'a Homogenization, sigma0: Vector6) -> Result<Self> {
        if sigma0.norm() == 0.0 || !sigma0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("macroscopic stress must be nonzero".into()));
        }
        let eps0 = hom.props.macro_strain(&sigma0);
        let stress = hom.stresses(&eps0, StressModulus::Buckling);
        let blocks = stress
            .iter()
            .map(|s| {
                let m = element_stress_stiffness(&hom.element, s);
                let mut out = [0.0; 64];
                for a in 0..8 {
                    for b in 0..8 {
                        out[a * 8 + b] = m[(a, b)];
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            hom,
            sigma0,
            eps0,
            stress,
            k_sigma: ElementMatrices::Nodal(blocks),
        })
    }

    /// Solves for the `m` largest load-factor inverses at `k`, warm-started
    /// from `start` when given.
    pub fn solve_at(
        &self,
        k: &WaveVector,
        m: usize,
        start: &[Vec<Complex64>],
        settings: &SolveSettings,
    ) -> Result<KPointResult> {
        let deflate = k.is_gamma();
        match phase_table::<f64>(k.0) {
            Some(ph) => {
                let start: Vec<Vec<f64>> = start.iter().map(|v| v.iter().map(|c| c.re).collect()).collect();
                let (taus, vecs, guard, its) = self.solve_generic(ph, m, &start, deflate, settings)?;
                let lift = |b: Vec<Vec<f64>>| -> Vec<Vec<Complex64>> {
                    b.into_iter()
                        .map(|v| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
                        .collect()
                };
                Ok(KPointResult {
                    k: *k,
                    taus,
                    modes: lift(vecs),
                    guard: lift(guard),
                    iterations: its,
                })
            }
            None => {
                let ph = bloch_map(k);
                let (taus, modes, guard, its) = self.solve_generic(ph, m, start, deflate, settings)?;
                Ok(KPointResult {
                    k: *k,
                    taus,
                    modes,
                    guard,
                    iterations: its,
                })
            }
        }
    }

    fn solve_generic<T: Scalar>(
        &self,
        phases: [T; 8],
        m: usize,
        start: &[Vec<T>],
        deflate: bool,
        settings: &SolveSettings,
    ) -> Result<(Vec<f64>, Vec<Vec<T>>, Vec<Vec<T>>, usize)> {
        let h = &self.hom.hierarchy;
        let k0 = h.operator(phases);
        let ks = Negated(BlochOperator::new(h.fine_connectivity(), &self.k_sigma, phases));
        let mg = Multigrid::new(h, phases, deflate);
        let res = lobpcg_largest(&ks, &k0, &mg, m, start, deflate, &settings.eigen)?;
        Ok((res.values, res.vectors, res.guard, res.iterations))
    }

    /// Dense `K0(k)` and `K_sigma(k)`; small grids only.
    pub fn dense_pencil(&self, k: &WaveVector) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let ph = bloch_map(k);
        let h = &self.hom.hierarchy;
        let k0 = h.operator(ph).to_dense();
        let ks = BlochOperator::new(h.fine_connectivity(), &self.k_sigma, ph).to_dense();
        (k0, ks)
    }

    /// Dense reference solve of the same pencil; small grids only.
    pub fn dense_solve(&self, k: &WaveVector, m: usize) -> Result<Vec<f64>> {
        let (mut k0, ks) = self.dense_pencil(k);
        let nd = k0.nrows();
        if k.is_gamma() {
            // Translations get tau = 0 once K0 is shifted on them.
            let nn = nd / 3;
            let s = Complex64::new(k0.diagonal().iter().map(|v| v.re).sum::<f64>() / nd as f64 / nn as f64, 0.0);
            for i in 0..nn {
                for j in 0..nn {
                    for c in 0..3 {
                        k0[(3 * i + c, 3 * j + c)] += s;
                    }
                }
            }
        }
        let ch = Cholesky::new(k0).ok_or_else(|| Error::Singular("dense K0(k)".into()))?;
        let l = ch.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
        let a = &linv * (-ks) * linv.adjoint();
        let a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
        let mut vals: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        vals.truncate(m);
        Ok(vals)
    }
}

struct Negated<'a, T: Scalar>(BlochOperator<'a, T>);

impl<'a, T: Scalar> LinearOperator<T> for Negated<'a, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.0.apply(x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Eigenpairs at one wave vector, `taus` descending, modes `K0`-normalized.
#[derive(Debug, Clone)]
pub struct KPointResult {
    pub k: WaveVector,
    pub taus: Vec<f64>,
    pub modes: Vec<Vec<Complex64>>,
    /// Unconverged block vectors beyond the modes.
    pub guard: Vec<Vec<Complex64>>,
    pub iterations: usize,
}

impl KPointResult {
    pub fn tau_max(&self) -> f64 {
        self.taus.first().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Modes followed by guard vectors, for warm-starting a nearby solve.
    pub fn warm_start(&self) -> Vec<Vec<Complex64>> {
        self.modes.iter().chain(&self.guard).cloned().collect()
    }
}

/// Largest `m` buckling eigenpairs at `k`; fails when no positive load
/// factor exists under this load direction.
pub fn buckling_eigensolve(
    setup: &BucklingSetup<'_>,
    k: &WaveVector,
    m: usize,
    settings: &SolveSettings,
) -> Result<KPointResult> {
    let r = setup.solve_at(k, m, &[], settings)?;
    if !(r.tau_max() > 0.0) {
        return Err(Error::NoBuckling {
            k: k.0,
            tau_max: r.tau_max(),
        });
    }
    Ok(r)
}

/// Band diagram along a path.
#[derive(Debug, Clone)]
pub struct BucklingResult {
    pub samples: Vec<PathSample>,
    /// Per sample, `tau_h` descending.
    pub taus: Vec<Vec<f64>>,
    /// Critical multiplier `1 / tau_max` of the load vector over the path.
    pub sigma_cri: f64,
    pub critical_index: usize,
    pub critical_mode: Vec<Complex64>,
}

impl BucklingResult {
    pub fn critical_k(&self) -> WaveVector {
        self.samples[self.critical_index].k
    }

    /// Load factors `1 / tau` per sample (infinite where `tau <= 0`).
    pub fn lambdas(&self) -> Vec<Vec<f64>> {
        self.taus
            .iter()
            .map(|t| t.iter().map(|&v| if v > 0.0 { 1.0 / v } else { f64::INFINITY }).collect())
            .collect()
    }
}

/// Sweeps `path`, warm-starting each sample from the previous one.
pub fn sweep_band_diagram(
    setup: &BucklingSetup<'_>,
    path: &IbzPath,
    bands: usize,
    settings: &SolveSettings,
) -> Result<BucklingResult> {
    let samples = path.samples();
    let mut taus = Vec::with_capacity(samples.len());
    let mut best: Option<(usize, f64, Vec<Complex64>)> = None;
    let mut prev: Vec<Vec<Complex64>> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let r = setup.solve_at(&s.k, bands, &prev, settings)?;
        log::debug!("k = {:?}: tau = {:?} ({} iterations)", s.k.0, r.taus, r.iterations);
        let t = r.tau_max();
        if best.as_ref().is_none_or(|b| t > b.1) {
            best = Some((i, t, r.modes[0].clone()));
        }
        taus.push(r.taus.clone());
        prev = r.warm_start();
    }
    let (ci, tmax, mode) = best.expect("path has samples");
    if !(tmax > 0.0) {
        return Err(Error::NoBuckling {
            k: samples[ci].k.0,
            tau_max: tmax,
        });
    }
    Ok(BucklingResult {
        samples,
        taus,
        sigma_cri: 1.0 / tmax,
        critical_index: ci,
        critical_mode: mode,
    })
}

/// Evaluates a list of wave vectors; returns per-k results.
pub fn solve_targets(
    setup: &BucklingSetup<'_>,
    targets: &[WaveVector],
    bands: &[usize],
    warm: &[Vec<Vec<Complex64>>],
    settings: &SolveSettings,
) -> Result<Vec<KPointResult>> {
    targets
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let start = warm.get(i).map(|v| v.as_slice()).unwrap_or(&[]);
            setup.solve_at(k, bands[i].max(1), start, settings)
        })
        .collect()
}
