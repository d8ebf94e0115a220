//! Robust density-based optimization of buckling strength and stiffness.
//!
//! Each iteration realizes the eroded, intermediate and dilated designs,
//! analyses the eroded one (stiffness, isotropy, buckling at a set of wave
//! vectors), measures the volume on the dilated one and takes an MMA step.
//! The design is kept cubic-symmetric by optimizing one variable per orbit
//! of the 48 cube symmetries.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{ibz_targets, sweep_band_diagram, BucklingSetup, IbzPath, WaveVector};
use crate::design::{
    chain_to_raw, grayness, realize_robust, rescale_dilated_bound, volume_fraction, HelmholtzFilter,
    Realization, RobustRealizations, RobustTriple,
};
use crate::element::BaseMaterial;
use crate::error::{Error, Result};
use crate::grid::{SymmetryOrbits, VoxelGrid};
use crate::homogenize::{Homogenization, LoadCase, SolveSettings};
use crate::mma::{Mma, MmaSettings};
use crate::sensitivity::{property_gradients, weighted_tau_gradient, WeightedMode};
use crate::solver::EigenSettings;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub n: usize,
    pub load: LoadCase,
    pub gamma1: f64,
    pub f_star: f64,
    pub delta: f64,
    pub delta_eta: f64,
    pub filter_radius: f64,
    pub beta_start: f64,
    pub beta_max: f64,
    pub beta_period: usize,
    pub band_period: usize,
    pub band_window: f64,
    pub max_bands: usize,
    pub zeta_factor: f64,
    pub zeta_period: usize,
    pub volume_period: usize,
    pub max_iter: usize,
    pub change_tol: f64,
    pub cubic_symmetry: bool,
    pub checkpoint_period: usize,
    /// Path resolution of the final band-diagram sweep.
    pub report_samples: usize,
    pub material: BaseMaterial,
    pub pcg_tol: f64,
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    pub seed: u64,
    pub move_limit: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            n: 32,
            load: LoadCase::Uniaxial,
            gamma1: 1.0,
            f_star: 0.2,
            delta: 0.05,
            delta_eta: 0.05,
            filter_radius: 0.05,
            beta_start: 1.0,
            beta_max: 50.0,
            beta_period: 40,
            band_period: 20,
            band_window: 0.05,
            max_bands: 6,
            zeta_factor: 100.0,
            zeta_period: 100,
            volume_period: 20,
            max_iter: 400,
            change_tol: 1e-3,
            cubic_symmetry: true,
            checkpoint_period: 20,
            report_samples: 4,
            material: BaseMaterial::default(),
            pcg_tol: 1e-8,
            eigen_tol: 1e-6,
            eigen_max_iter: 300,
            seed: 0x5eed,
            move_limit: 0.1,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.n < 2 {
            return bad("grid size must be at least 2");
        }
        self.load.validate()?;
        self.material.validate()?;
        if !(0.0..=1.0).contains(&self.gamma1) {
            return bad("gamma1 must lie in [0, 1]");
        }
        if !(self.f_star > 0.0 && self.f_star < 1.0) {
            return bad("f_star must lie in (0, 1)");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        RobustTriple::new(self.delta_eta)?;
        if !(self.filter_radius > 0.0) {
            return bad("filter radius must be positive");
        }
        if !(self.beta_start > 0.0 && self.beta_max >= self.beta_start) {
            return bad("need 0 < beta_start <= beta_max");
        }
        if [self.beta_period, self.band_period, self.zeta_period, self.volume_period, self.checkpoint_period]
            .contains(&0)
        {
            return bad("schedule periods must be positive");
        }
        if self.max_bands == 0 || !(self.band_window >= 0.0) || !(self.zeta_factor > 0.0) {
            return bad("band and aggregation settings must be positive");
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return bad("move limit must lie in (0, 1]");
        }
        if !(self.pcg_tol > 0.0 && self.eigen_tol > 0.0) {
            return bad("solver tolerances must be positive");
        }
        Ok(())
    }

    pub fn solve_settings(&self) -> SolveSettings {
        SolveSettings {
            pcg_tol: self.pcg_tol,
            pcg_max_iter: 4000,
            eigen: EigenSettings {
                tol: self.eigen_tol,
                max_iter: self.eigen_max_iter,
                seed: self.seed,
                ..EigenSettings::default()
            },
        }
    }

    /// Wave vectors where buckling is aggregated.
    pub fn targets(&self) -> Vec<WaveVector> {
        ibz_targets(&self.load)
    }
}

/// Kreisselmeier-Steinhauser aggregate and its weights `d KS / d tau_i`.
pub fn ks_aggregate(taus: &[f64], zeta: f64) -> Result<(f64, Vec<f64>)> {
    if taus.is_empty() {
        return Err(Error::InvalidInput("nothing to aggregate".into()));
    }
    if !(zeta > 0.0) || taus.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("aggregation needs zeta > 0 and finite values".into()));
    }
    let max = taus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = taus.iter().map(|t| (zeta * (t - max)).exp()).collect();
    let sum: f64 = e.iter().sum();
    Ok((max + sum.ln() / zeta, e.iter().map(|v| v / sum).collect()))
}

/// Per wave vector, the number of values within `window` (relative) of the
/// overall maximum, at least one.
pub fn select_bands(taus: &[Vec<f64>], window: f64) -> Vec<usize> {
    let max = taus
        .iter()
        .flatten()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let cut = max - window * max.abs();
    taus.iter()
        .map(|t| t.iter().filter(|&&v| v >= cut).count().max(1))
        .collect()
}

/// Element-to-variable map; identity without symmetry.
#[derive(Debug, Clone)]
pub struct SymmetryReduction {
    pub orbit: Vec<usize>,
    pub size: Vec<usize>,
}

impl SymmetryReduction {
    pub fn cubic(grid: &VoxelGrid) -> Self {
        let o = SymmetryOrbits::new(grid);
        Self {
            size: o.members.iter().map(|m| m.len()).collect(),
            orbit: o.element_orbit,
        }
    }

    pub fn identity(ne: usize) -> Self {
        Self {
            orbit: (0..ne).collect(),
            size: vec![1; ne],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.size.len()
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.orbit.iter().map(|&o| x[o]).collect()
    }

    /// Orbit means of an element field.
    pub fn reduce_mean(&self, rho: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.num_vars()];
        for (e, &o) in self.orbit.iter().enumerate() {
            x[o] += rho[e];
        }
        x.iter().zip(&self.size).map(|(v, &s)| v / s as f64).collect()
    }

    /// Gradient with respect to the variables (sum over each orbit).
    pub fn reduce_gradient(&self, g: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.num_vars()];
        for (e, &o) in self.orbit.iter().enumerate() {
            x[o] += g[e];
        }
        x
    }
}

/// One line of the optimization history.
#[derive(Debug, Clone, Serialize)]
pub struct IterationLog {
    pub iter: usize,
    pub beta: f64,
    pub objective: f64,
    pub ks: f64,
    pub max_tau: f64,
    pub zeta: f64,
    pub n_tau: usize,
    pub e_bar: f64,
    pub kappa_bar: f64,
    pub zener: f64,
    pub f_eroded: f64,
    pub f_intermediate: f64,
    pub f_dilated: f64,
    pub f_dilated_bound: f64,
    pub g_isotropy: f64,
    pub g_volume: f64,
    pub change: f64,
    pub grayness: f64,
    pub max_tau_per_k: Vec<f64>,
    pub bands: Vec<usize>,
    /// Realization used for the objective and isotropy analyses.
    pub objective_on: Realization,
    /// Realization used for the volume constraint.
    pub volume_on: Realization,
    pub infeasible_subproblem: bool,
}

/// Optimizer state; enough to resume a run.
#[derive(Debug, Clone)]
pub struct OptState {
    pub iter: usize,
    pub x: Vec<f64>,
    pub beta: f64,
    pub zeta: Option<f64>,
    pub f_dilated_bound: f64,
    pub bands: Vec<usize>,
    pub history: Vec<IterationLog>,
    pub mma: Mma,
    pub objective_scale: Option<f64>,
    warm_chi: Option<[Vec<f64>; 6]>,
    warm_modes: Vec<Vec<Vec<Complex64>>>,
}

impl OptState {
    /// Raw element densities of the current design.
    pub fn rho(&self, sym: &SymmetryReduction) -> Vec<f64> {
        sym.expand(&self.x)
    }
}

/// Called after every iteration; `checkpoint` is set on checkpoint
/// iterations. Returning an error aborts the run.
pub trait Observer {
    fn on_iteration(&mut self, state: &OptState, log: &IterationLog, checkpoint: bool) -> Result<()>;
}

impl Observer for () {
    fn on_iteration(&mut self, _: &OptState, _: &IterationLog, _: bool) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&OptState, &IterationLog, bool) -> Result<()>> Observer for F {
    fn on_iteration(&mut self, s: &OptState, l: &IterationLog, c: bool) -> Result<()> {
        self(s, l, c)
    }
}

/// Properties of the final design.
#[derive(Debug, Clone, Serialize)]
pub struct FinalReport {
    pub iterations: usize,
    pub e_bar: f64,
    pub kappa_bar: f64,
    pub zener: f64,
    pub f_eroded: f64,
    pub f_intermediate: f64,
    pub f_dilated: f64,
    pub grayness: f64,
    pub sigma_cri: f64,
    pub critical_k: [f64; 3],
    pub eroded_e_bar: f64,
    pub eroded_zener: f64,
}

pub struct OptResult {
    pub state: OptState,
    pub realizations: RobustRealizations,
    pub report: FinalReport,
    pub bands: Option<crate::bloch::BucklingResult>,
}

pub struct Optimizer {
    pub config: OptConfig,
    pub grid: VoxelGrid,
    pub filter: HelmholtzFilter,
    pub triple: RobustTriple,
    pub sym: SymmetryReduction,
    targets: Vec<WaveVector>,
}

struct Evaluation {
    df0: Vec<f64>,
    g: [f64; 2],
    dg: [Vec<f64>; 2],
    log: IterationLog,
}

impl Optimizer {
    pub fn new(config: OptConfig) -> Result<Self> {
        config.validate()?;
        let grid = VoxelGrid::new(config.n)?;
        let filter = HelmholtzFilter::new(grid, config.filter_radius)?;
        let triple = RobustTriple::new(config.delta_eta)?;
        let sym = if config.cubic_symmetry {
            SymmetryReduction::cubic(&grid)
        } else {
            SymmetryReduction::identity(grid.num_elements())
        };
        let targets = config.targets();
        Ok(Self {
            config,
            grid,
            filter,
            triple,
            sym,
            targets,
        })
    }

    /// Fresh state from a raw seed field (orbit-averaged when symmetric).
    pub fn initial_state(&self, seed: &[f64]) -> Result<OptState> {
        if seed.len() != self.grid.num_elements() {
            return Err(Error::InvalidInput(format!(
                "seed has {} values, grid needs {}",
                seed.len(),
                self.grid.num_elements()
            )));
        }
        let x: Vec<f64> = self.sym.reduce_mean(seed).iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let nv = x.len();
        Ok(OptState {
            iter: 0,
            x,
            beta: self.config.beta_start,
            zeta: None,
            f_dilated_bound: self.config.f_star,
            bands: vec![1; self.targets.len()],
            history: Vec::new(),
            mma: Mma::new(
                nv,
                2,
                MmaSettings {
                    move_limit: self.config.move_limit,
                    ..MmaSettings::default()
                },
            ),
            objective_scale: None,
            warm_chi: None,
            warm_modes: vec![Vec::new(); self.targets.len()],
        })
    }

    fn evaluate(&self, st: &mut OptState, refresh_bands: bool) -> Result<Evaluation> {
        let cfg = &self.config;
        let settings = cfg.solve_settings();
        let rho = self.sym.expand(&st.x);
        let real = realize_robust(&self.filter, &rho, st.beta, self.triple)?;
        let hom = Homogenization::with_start(
            self.grid,
            cfg.material,
            &real.eroded,
            &settings,
            st.warm_chi.as_ref(),
        )?;
        let pg = property_gradients(&hom);
        let p = &hom.props;
        let ne = self.grid.num_elements();

        let mut d_obj = vec![0.0; ne];
        let mut ks = 0.0;
        let mut max_tau = f64::NAN;
        let mut n_tau = 0;
        let mut max_per_k = Vec::new();
        if cfg.gamma1 > 0.0 {
            let setup = BucklingSetup::new(&hom, cfg.load.stress())?;
            let mut results = Vec::with_capacity(self.targets.len());
            for (l, k) in self.targets.iter().enumerate() {
                let m = if refresh_bands {
                    (st.bands[l] + 2).min(cfg.max_bands)
                } else {
                    st.bands[l]
                };
                let r = setup.solve_at(k, m, &st.warm_modes[l], &settings)?;
                results.push(r);
            }
            if refresh_bands {
                let all: Vec<Vec<f64>> = results.iter().map(|r| r.taus.clone()).collect();
                st.bands = select_bands(&all, cfg.band_window);
            }
            for (l, r) in results.iter_mut().enumerate() {
                st.warm_modes[l] = r.warm_start();
                r.taus.truncate(st.bands[l]);
                r.modes.truncate(st.bands[l]);
            }
            let taus: Vec<f64> = results.iter().flat_map(|r| r.taus.iter().cloned()).collect();
            max_tau = taus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(max_tau > 0.0) {
                return Err(Error::NoBuckling {
                    k: [0.0; 3],
                    tau_max: max_tau,
                });
            }
            if st.zeta.is_none() || st.iter.is_multiple_of(cfg.zeta_period) {
                st.zeta = Some(cfg.zeta_factor / max_tau);
            }
            let (v, w) = ks_aggregate(&taus, st.zeta.unwrap())?;
            ks = v;
            n_tau = taus.len();
            max_per_k = results.iter().map(|r| r.tau_max()).collect();
            let mut modes = Vec::with_capacity(n_tau);
            let mut i = 0;
            for r in &results {
                for (t, mode) in r.taus.iter().zip(&r.modes) {
                    modes.push(WeightedMode {
                        k: r.k,
                        tau: *t,
                        mode,
                        weight: w[i],
                    });
                    i += 1;
                }
            }
            let g = weighted_tau_gradient(&setup, &modes, &settings)?;
            for e in 0..ne {
                d_obj[e] += cfg.gamma1 * g[e];
            }
        }
        let inv_e = 1.0 / p.e_bar;
        for e in 0..ne {
            d_obj[e] -= (1.0 - cfg.gamma1) * pg.d_e[e] * inv_e * inv_e;
        }
        let objective = cfg.gamma1 * ks + (1.0 - cfg.gamma1) * inv_e;
        let scale = *st.objective_scale.get_or_insert(1.0 / objective.abs().max(1e-300));

        let delta2 = cfg.delta * cfg.delta;
        let ar1 = p.zener - 1.0;
        let g_iso = ar1 * ar1 - delta2;
        let d_iso: Vec<f64> = pg.d_ar.iter().map(|d| 2.0 * ar1 * d).collect();

        let f_dil = volume_fraction(&real.dilated);
        let g_vol = f_dil / st.f_dilated_bound - 1.0;
        let d_vol = vec![1.0 / (ne as f64 * st.f_dilated_bound); ne];

        let [te, _, td] = self.triple.thresholds();
        let to_vars = |d: &[f64], eta: f64| {
            self.sym
                .reduce_gradient(&chain_to_raw(&self.filter, &real.rho_tilde, eta, st.beta, d))
        };
        let df0: Vec<f64> = to_vars(&d_obj, te).iter().map(|v| v * scale).collect();
        let dg = [to_vars(&d_iso, te), to_vars(&d_vol, td)];

        st.warm_chi = Some(hom.chi.clone());
        let log = IterationLog {
            iter: st.iter,
            beta: st.beta,
            objective,
            ks,
            max_tau,
            zeta: st.zeta.unwrap_or(f64::NAN),
            n_tau,
            e_bar: p.e_bar,
            kappa_bar: p.kappa_bar,
            zener: p.zener,
            f_eroded: volume_fraction(&real.eroded),
            f_intermediate: volume_fraction(&real.intermediate),
            f_dilated: f_dil,
            f_dilated_bound: st.f_dilated_bound,
            g_isotropy: g_iso,
            g_volume: g_vol,
            change: 0.0,
            grayness: grayness(&real.intermediate),
            max_tau_per_k: max_per_k,
            bands: st.bands.clone(),
            objective_on: Realization::Eroded,
            volume_on: Realization::Dilated,
            infeasible_subproblem: false,
        };
        Ok(Evaluation {
            df0,
            g: [g_iso, g_vol],
            dg,
            log,
        })
    }

    /// One analysis and design update.
    pub fn step(&self, st: &mut OptState) -> Result<IterationLog> {
        let cfg = &self.config;
        let refresh = st.iter.is_multiple_of(cfg.band_period) && cfg.gamma1 > 0.0;
        let ev = self
            .evaluate(st, refresh)
            .map_err(|e| Error::Iteration {
                iteration: st.iter,
                source: Box::new(e),
            })?;
        let nv = st.x.len();
        let lo = vec![0.0; nv];
        let hi = vec![1.0; nv];
        let step = st.mma.update(&st.x, &ev.df0, &ev.g, &ev.dg, &lo, &hi);
        let mut log = ev.log;
        if step.y.iter().any(|&y| y > 1e-6) {
            log::warn!(
                "iteration {}: linearized constraints infeasible, relaxed (y = {:?})",
                st.iter,
                step.y
            );
            log.infeasible_subproblem = true;
        }
        let xnew: Vec<f64> = step.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        log.change = xnew
            .iter()
            .zip(&st.x)
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        st.x = xnew;
        st.iter += 1;

        if st.iter.is_multiple_of(cfg.beta_period) && st.beta < cfg.beta_max {
            st.beta = (2.0 * st.beta).min(cfg.beta_max);
        }
        if st.iter.is_multiple_of(cfg.volume_period) {
            st.f_dilated_bound = rescale_dilated_bound(st.f_dilated_bound, cfg.f_star, log.f_intermediate);
        }
        st.history.push(log.clone());
        Ok(log)
    }

    /// Runs until `max_iter` or until the design settles at the final sharpness.
    pub fn run(&self, st: &mut OptState, observer: &mut dyn Observer) -> Result<()> {
        while st.iter < self.config.max_iter {
            let log = self.step(st)?;
            let cp = st.iter.is_multiple_of(self.config.checkpoint_period);
            observer.on_iteration(st, &log, cp)?;
            if log.change < self.config.change_tol && st.beta >= self.config.beta_max {
                break;
            }
        }
        Ok(())
    }

    /// Properties of the current intermediate design, including a band
    /// sweep along the boundary of the irreducible zone.
    pub fn report(&self, st: &OptState, with_bands: bool) -> Result<(RobustRealizations, FinalReport, Option<crate::bloch::BucklingResult>)> {
        let cfg = &self.config;
        let settings = cfg.solve_settings();
        let rho = self.sym.expand(&st.x);
        let real = realize_robust(&self.filter, &rho, st.beta, self.triple)?;
        let hi = Homogenization::new(self.grid, cfg.material, &real.intermediate, &settings)?;
        let he = Homogenization::new(self.grid, cfg.material, &real.eroded, &settings)?;
        let (sigma_cri, critical_k, bands) = if with_bands {
            let setup = BucklingSetup::new(&hi, cfg.load.stress())?;
            let path = IbzPath::for_load(&cfg.load, cfg.report_samples);
            let b = sweep_band_diagram(&setup, &path, 1, &settings)?;
            (b.sigma_cri, b.critical_k().0, Some(b))
        } else {
            (f64::NAN, [f64::NAN; 3], None)
        };
        let report = FinalReport {
            iterations: st.iter,
            e_bar: hi.props.e_bar,
            kappa_bar: hi.props.kappa_bar,
            zener: hi.props.zener,
            f_eroded: volume_fraction(&real.eroded),
            f_intermediate: volume_fraction(&real.intermediate),
            f_dilated: volume_fraction(&real.dilated),
            grayness: grayness(&real.intermediate),
            sigma_cri,
            critical_k,
            eroded_e_bar: he.props.e_bar,
            eroded_zener: he.props.zener,
        };
        Ok((real, report, bands))
    }
}

/// Convenience wrapper: seed, run, report.
pub fn run_robust_optimization(
    seed: &[f64],
    config: OptConfig,
    observer: &mut dyn Observer,
) -> Result<OptResult> {
    let opt = Optimizer::new(config)?;
    let mut st = opt.initial_state(seed)?;
    opt.run(&mut st, observer)?;
    let (realizations, report, bands) = opt.report(&st, true)?;
    Ok(OptResult {
        state: st,
        realizations,
        report,
        bands,
    })
}
