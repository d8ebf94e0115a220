//! Feature-based shape parameterization: four hollow and one solid
//! super-ellipsoid combined by a Boolean product on the fundamental wedge
//! `0 <= z <= y <= x <= 1/2`, extended to the cell by cubic symmetry.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bloch::{ibz_targets, sweep_band_diagram, BucklingSetup, IbzPath};
use crate::design::{chain_to_raw, project, project_derivatives, volume_fraction, HelmholtzFilter};
use crate::element::BaseMaterial;
use crate::error::{Error, Result};
use crate::grid::{fold_to_wedge, VoxelGrid};
use crate::homogenize::{Homogenization, LoadCase, SolveSettings};
use crate::mma::{Mma, MmaSettings};
use crate::sensitivity::{property_gradients, weighted_tau_gradient, WeightedMode};
use crate::solver::EigenSettings;
use crate::topopt::{ks_aggregate, select_bands};

/// Offset added to the center-to-control distance.
pub const DELTA0: f64 = 1e-10;
/// Smoothing of `|a|^p` as `(a^2 + eps^2)^(p/2)`.
pub const ABS_EPS: f64 = 1e-9;
pub const NUM_PARAMS: usize = 14;
pub const PARAM_NAMES: [&str; NUM_PARAMS] = [
    "x1", "y1", "z1", "t1", "p1", "z2", "y3", "t3", "p3", "x4", "t4", "p4", "x5", "p5",
];

/// The fourteen shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeParams {
    pub x1: f64,
    pub y1: f64,
    pub z1: f64,
    pub t1: f64,
    pub p1: f64,
    pub z2: f64,
    pub y3: f64,
    pub t3: f64,
    pub p3: f64,
    pub x4: f64,
    pub t4: f64,
    pub p4: f64,
    pub x5: f64,
    pub p5: f64,
}

impl Default for ShapeParams {
    /// Powers 1.5 and thicknesses 0.05, with locations chosen so that every
    /// feature bounds part of the solid.
    fn default() -> Self {
        Self::from_array([
            0.3, 0.25, 0.2, 0.05, 1.5, 0.22, 0.25, 0.05, 1.5, 0.32, 0.05, 1.5, 0.38, 1.5,
        ])
    }
}

impl ShapeParams {
    pub fn to_array(&self) -> [f64; NUM_PARAMS] {
        [
            self.x1, self.y1, self.z1, self.t1, self.p1, self.z2, self.y3, self.t3, self.p3, self.x4,
            self.t4, self.p4, self.x5, self.p5,
        ]
    }

    pub fn from_array(a: [f64; NUM_PARAMS]) -> Self {
        Self {
            x1: a[0],
            y1: a[1],
            z1: a[2],
            t1: a[3],
            p1: a[4],
            z2: a[5],
            y3: a[6],
            t3: a[7],
            p3: a[8],
            x4: a[9],
            t4: a[10],
            p4: a[11],
            x5: a[12],
            p5: a[13],
        }
    }

    /// Box bounds used by the optimizer.
    pub fn bounds() -> ([f64; NUM_PARAMS], [f64; NUM_PARAMS]) {
        let loc = (0.01, 0.49);
        let t = (0.005, 0.25);
        let p = (1.0, 4.0);
        let v = [loc, loc, loc, t, p, loc, loc, t, p, loc, t, p, loc, p];
        (v.map(|b| b.0), v.map(|b| b.1))
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        for (i, v) in a.iter().enumerate() {
            let name = PARAM_NAMES[i];
            let ok = match name.as_bytes()[0] {
                b'p' => *v > 0.0 && *v <= 4.0,
                b't' => *v >= 0.0,
                _ => (0.0..=0.5).contains(v),
            };
            if !ok || !v.is_finite() {
                return Err(Error::InvalidInput(format!("shape parameter {name} = {v} out of range")));
            }
        }
        Ok(())
    }
}

/// What a parameter changes in a feature.
#[derive(Debug, Clone, Copy)]
enum Dep {
    Control([f64; 3]),
    Thickness,
    Power,
}

/// One super-ellipsoid.
#[derive(Debug, Clone)]
pub struct SuperEllipsoid {
    pub c: [f64; 3],
    pub z: [f64; 3],
    pub t: f64,
    pub p: f64,
    deps: Vec<(usize, Dep)>,
}

/// Value and derivatives of `T(x, c, z, p, 0)` with respect to the
/// control point and the power.
struct TEval {
    v: f64,
    dz: [f64; 3],
    dp: f64,
}

impl SuperEllipsoid {
    pub fn new(c: [f64; 3], z: [f64; 3], t: f64, p: f64) -> Self {
        Self { c, z, t, p, deps: Vec::new() }
    }

    fn geometry(&self, name: &str) -> Result<(f64, f64, [f64; 3])> {
        let dz = [self.z[0] - self.c[0], self.z[1] - self.c[1], self.z[2] - self.c[2]];
        let r = (dz[0] * dz[0] + dz[1] * dz[1] + dz[2] * dz[2]).sqrt();
        if r < 1e-12 {
            return Err(Error::DegenerateFeature(name.into()));
        }
        Ok((r, r + DELTA0, dz))
    }

    /// `T(x, c, z, p, t)`.
    pub fn t_value(&self, x: [f64; 3], t: f64) -> f64 {
        let dz = [self.z[0] - self.c[0], self.z[1] - self.c[1], self.z[2] - self.c[2]];
        let d = (dz[0] * dz[0] + dz[1] * dz[1] + dz[2] * dz[2]).sqrt() + DELTA0;
        let s: f64 = (0..3)
            .map(|k| {
                let a = dz[k] / d * (x[k] - self.c[k]);
                (a * a + ABS_EPS * ABS_EPS).powf(0.5 * self.p)
            })
            .sum();
        s.powf(1.0 / self.p) + t
    }

    /// `H(x, c, z, p, t) = T(x, ., 0) - T(z, ., t)`.
    pub fn h_value(&self, x: [f64; 3], t: f64) -> f64 {
        self.t_value(x, 0.0) - self.t_value(self.z, t)
    }

    /// `T(x, 0)` with derivatives; `at_control` also differentiates the
    /// evaluation point when it is the control point itself.
    fn t_eval(&self, x: [f64; 3], r: f64, d: f64, dz: [f64; 3], at_control: bool) -> TEval {
        let p = self.p;
        let n = [dz[0] / d, dz[1] / d, dz[2] / d];
        let mut a = [0.0; 3];
        let mut q = [0.0; 3];
        let mut u = [0.0; 3];
        for k in 0..3 {
            a[k] = n[k] * (x[k] - self.c[k]);
            q[k] = a[k] * a[k] + ABS_EPS * ABS_EPS;
            u[k] = q[k].powf(0.5 * p);
        }
        let s = u[0] + u[1] + u[2];
        let v = s.powf(1.0 / p);
        // dT/da_k = S^(1/p - 1) q_k^(p/2 - 1) a_k
        let sp = s.powf(1.0 / p - 1.0);
        let dta: Vec<f64> = (0..3).map(|k| sp * q[k].powf(0.5 * p - 1.0) * a[k]).collect();
        let mut dzv = [0.0; 3];
        for m in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                // dn_k/dz_m
                let dn = if k == m { 1.0 / d } else { 0.0 } - dz[k] * dz[m] / (r * d * d);
                let mut da = dn * (x[k] - self.c[k]);
                if at_control && k == m {
                    da += n[k];
                }
                acc += dta[k] * da;
            }
            dzv[m] = acc;
        }
        let sl: f64 = (0..3).map(|k| u[k] * 0.5 * q[k].ln()).sum();
        let dp = v * (-s.ln() / (p * p) + sl / (p * s));
        TEval { v, dz: dzv, dp }
    }

    /// Density `1 / (1 + exp(beta H))` of the inner (`outer = false`) or
    /// outer surface, and its gradient with respect to the parameters.
    fn density(
        &self,
        name: &str,
        x: [f64; 3],
        outer: bool,
        beta: f64,
        grad: &mut [f64; NUM_PARAMS],
    ) -> Result<f64> {
        let (r, d, dz) = self.geometry(name)?;
        let tx = self.t_eval(x, r, d, dz, false);
        let tz = self.t_eval(self.z, r, d, dz, true);
        let t = if outer { self.t } else { 0.0 };
        let h = tx.v - tz.v - t;
        let rho = logistic(beta * h);
        let drho_dh = -beta * rho * (1.0 - rho);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &(i, dep) in &self.deps {
            let dh = match dep {
                Dep::Control(dir) => (0..3).map(|m| (tx.dz[m] - tz.dz[m]) * dir[m]).sum(),
                Dep::Thickness => {
                    if outer {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Dep::Power => tx.dp - tz.dp,
            };
            grad[i] += drho_dh * dh;
        }
        Ok(rho)
    }

    /// Exact membership (no smoothing) of the inner or outer solid.
    pub fn contains(&self, x: [f64; 3], outer: bool) -> bool {
        let dz = [self.z[0] - self.c[0], self.z[1] - self.c[1], self.z[2] - self.c[2]];
        let d = (dz[0] * dz[0] + dz[1] * dz[1] + dz[2] * dz[2]).sqrt() + DELTA0;
        let norm = |y: [f64; 3]| -> f64 {
            (0..3)
                .map(|k| (dz[k] / d * (y[k] - self.c[k])).abs().powf(self.p))
                .sum::<f64>()
                .powf(1.0 / self.p)
        };
        let t = if outer { self.t } else { 0.0 };
        norm(x) < norm(self.z) + t
    }
}

fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        let e = (-s).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + s.exp())
    }
}

/// The five features of a parameter set.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub s: [SuperEllipsoid; 5],
}

impl FeatureSet {
    /// `s2_thickness` is the fixed thickness of the plate feature.
    pub fn new(p: &ShapeParams, s2_thickness: f64) -> Self {
        let h = [0.5; 3];
        let mut s1 = SuperEllipsoid::new([0.0; 3], [p.x1, p.y1, p.z1], p.t1, p.p1);
        s1.deps = vec![
            (0, Dep::Control([1.0, 0.0, 0.0])),
            (1, Dep::Control([0.0, 1.0, 0.0])),
            (2, Dep::Control([0.0, 0.0, 1.0])),
            (3, Dep::Thickness),
            (4, Dep::Power),
        ];
        let mut s2 = SuperEllipsoid::new(h, [0.5, 0.5, p.z2], s2_thickness, 1.0);
        s2.deps = vec![(5, Dep::Control([0.0, 0.0, 1.0]))];
        let mut s3 = SuperEllipsoid::new(h, [0.5, p.y3, p.y3], p.t3, p.p3);
        s3.deps = vec![(6, Dep::Control([0.0, 1.0, 1.0])), (7, Dep::Thickness), (8, Dep::Power)];
        let mut s4 = SuperEllipsoid::new(h, [p.x4; 3], p.t4, p.p4);
        s4.deps = vec![(9, Dep::Control([1.0, 1.0, 1.0])), (10, Dep::Thickness), (11, Dep::Power)];
        let mut s5 = SuperEllipsoid::new([0.5, 0.5, 0.0], [p.x5, p.x5, 0.0], 0.0, p.p5);
        s5.deps = vec![(12, Dep::Control([1.0, 1.0, 0.0])), (13, Dep::Power)];
        Self {
            s: [s1, s2, s3, s4, s5],
        }
    }

    /// Raw density at a point of the cell and its parameter gradient.
    pub fn density(&self, x: [f64; 3], beta2: f64) -> Result<(f64, [f64; NUM_PARAMS])> {
        let w = fold_to_wedge(x);
        let names = ["S1", "S2", "S3", "S4", "S5"];
        let mut g = [[0.0; NUM_PARAMS]; 9];
        // inner i -> slot 2i, outer i -> slot 2i+1 (S5 inner only)
        let mut v = [0.0; 9];
        for i in 0..5 {
            v[2 * i] = self.s[i].density(names[i], w, false, beta2, &mut g[2 * i])?;
            if i < 4 {
                v[2 * i + 1] = self.s[i].density(names[i], w, true, beta2, &mut g[2 * i + 1])?;
            }
        }
        let (r10, r11, r20, r21, r30, r31, r40, r41, r50) = (v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        let a = r21 * r31 * r41;
        let b = r11 * (1.0 - r10);
        let c = r20 * r30 * r40;
        let d = r50;
        let u = 1.0 - (1.0 - a) * (1.0 - b);
        let rho = u * (1.0 - c) * (1.0 - d);
        let da = (1.0 - b) * (1.0 - c) * (1.0 - d);
        let db = (1.0 - a) * (1.0 - c) * (1.0 - d);
        let dc = -u * (1.0 - d);
        let dd = -u * (1.0 - c);
        // d rho / d v_slot
        let mut w8 = [0.0; 9];
        w8[3] = da * r31 * r41;
        w8[5] = da * r21 * r41;
        w8[7] = da * r21 * r31;
        w8[1] = db * (1.0 - r10);
        w8[0] = -db * r11;
        w8[2] = dc * r30 * r40;
        w8[4] = dc * r20 * r40;
        w8[6] = dc * r20 * r30;
        w8[8] = dd;
        let mut grad = [0.0; NUM_PARAMS];
        for s in 0..9 {
            for j in 0..NUM_PARAMS {
                grad[j] += w8[s] * g[s][j];
            }
        }
        Ok((rho, grad))
    }

    /// Exact Boolean membership of the composed solid.
    pub fn contains(&self, x: [f64; 3]) -> bool {
        let w = fold_to_wedge(x);
        let s = &self.s;
        let body = s[1].contains(w, true) && s[2].contains(w, true) && s[3].contains(w, true);
        let arm = s[0].contains(w, true) && !s[0].contains(w, false);
        let cavity = s[1].contains(w, false) && s[2].contains(w, false) && s[3].contains(w, false);
        (body || arm) && !cavity && !s[4].contains(w, false)
    }
}

/// Settings of the composition chain.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeModelConfig {
    pub beta2: f64,
    pub filter_radius: f64,
    pub beta1: f64,
    pub s2_thickness: f64,
}

impl Default for ShapeModelConfig {
    fn default() -> Self {
        Self {
            beta2: 200.0,
            filter_radius: 0.025,
            beta1: 50.0,
            s2_thickness: 0.1,
        }
    }
}

/// Parameters to physical densities on one grid.
pub struct ShapeModel {
    pub grid: VoxelGrid,
    pub config: ShapeModelConfig,
    pub filter: HelmholtzFilter,
}

/// Raw, filtered and physical fields with the raw-field Jacobian.
pub struct Composition {
    pub rho: Vec<f64>,
    pub rho_tilde: Vec<f64>,
    pub rho_bar: Vec<f64>,
    pub jacobian: Vec<[f64; NUM_PARAMS]>,
}

impl ShapeModel {
    pub fn new(grid: VoxelGrid, config: ShapeModelConfig) -> Result<Self> {
        let filter = HelmholtzFilter::new(grid, config.filter_radius)?;
        Ok(Self { grid, config, filter })
    }

    pub fn compose(&self, p: &ShapeParams) -> Result<Composition> {
        self.compose_with(p, self.config.beta2)
    }

    fn compose_with(&self, p: &ShapeParams, beta2: f64) -> Result<Composition> {
        p.validate()?;
        let fs = FeatureSet::new(p, self.config.s2_thickness);
        let ne = self.grid.num_elements();
        let mut rho = Vec::with_capacity(ne);
        let mut jacobian = Vec::with_capacity(ne);
        for e in 0..ne {
            let (r, g) = fs.density(self.grid.centroid(e), beta2)?;
            rho.push(r);
            jacobian.push(g);
        }
        let rho_tilde = self.filter.apply(&rho);
        let rho_bar = project(&rho_tilde, 0.5, self.config.beta1);
        Ok(Composition {
            rho,
            rho_tilde,
            rho_bar,
            jacobian,
        })
    }

    /// Parameter gradient of a functional given its physical-field gradient.
    pub fn chain(&self, c: &Composition, d_phys: &[f64]) -> [f64; NUM_PARAMS] {
        let d_raw = chain_to_raw(&self.filter, &c.rho_tilde, 0.5, self.config.beta1, d_phys);
        let mut g = [0.0; NUM_PARAMS];
        for (e, row) in c.jacobian.iter().enumerate() {
            for j in 0..NUM_PARAMS {
                g[j] += d_raw[e] * row[j];
            }
        }
        g
    }

    /// Physical-field Jacobian, one column per parameter.
    pub fn physical_jacobian(&self, c: &Composition) -> Vec<Vec<f64>> {
        let dp = project_derivatives(&c.rho_tilde, 0.5, self.config.beta1);
        (0..NUM_PARAMS)
            .map(|j| {
                let col: Vec<f64> = c.jacobian.iter().map(|r| r[j]).collect();
                self.filter
                    .apply_linear(&col)
                    .iter()
                    .zip(&dp)
                    .map(|(a, b)| a * b)
                    .collect()
            })
            .collect()
    }
}

/// Least-squares fit of the parameters to a target physical field by
/// projected Levenberg-Marquardt. Returns the fitted parameters and the
/// mean squared misfit.
pub fn fit_to_density(
    model: &ShapeModel,
    target: &[f64],
    init: &ShapeParams,
    iterations: usize,
) -> Result<(ShapeParams, f64)> {
    fit_stage(model, model.config.beta2, target, init, iterations)
}

fn fit_stage(
    model: &ShapeModel,
    beta2: f64,
    target: &[f64],
    init: &ShapeParams,
    iterations: usize,
) -> Result<(ShapeParams, f64)> {
    if target.len() != model.grid.num_elements() {
        return Err(Error::InvalidInput("target field does not match the grid".into()));
    }
    let (lo, hi) = ShapeParams::bounds();
    let clamp = |a: &mut [f64; NUM_PARAMS]| {
        for j in 0..NUM_PARAMS {
            a[j] = a[j].clamp(lo[j], hi[j]);
        }
    };
    let ne = target.len() as f64;
    let misfit = |c: &Composition| -> f64 {
        c.rho_bar.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ne
    };
    let mut x = init.to_array();
    clamp(&mut x);
    let mut comp = model.compose_with(&ShapeParams::from_array(x), beta2)?;
    let mut err = misfit(&comp);
    let mut mu = 1e-3;
    for _ in 0..iterations {
        let jac = model.physical_jacobian(&comp);
        let r: Vec<f64> = comp.rho_bar.iter().zip(target).map(|(a, b)| a - b).collect();
        let mut jtj = DMatrix::<f64>::zeros(NUM_PARAMS, NUM_PARAMS);
        let mut jtr = DVector::<f64>::zeros(NUM_PARAMS);
        for a in 0..NUM_PARAMS {
            jtr[a] = jac[a].iter().zip(&r).map(|(u, v)| u * v).sum();
            for b in a..NUM_PARAMS {
                let v: f64 = jac[a].iter().zip(&jac[b]).map(|(u, v)| u * v).sum();
                jtj[(a, b)] = v;
                jtj[(b, a)] = v;
            }
        }
        let mut accepted = false;
        while mu < 1e12 {
            let mut m = jtj.clone();
            for a in 0..NUM_PARAMS {
                m[(a, a)] += mu * (jtj[(a, a)] + 1e-12);
            }
            let Some(step) = m.cholesky().map(|c| c.solve(&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let mut trial = x;
            for a in 0..NUM_PARAMS {
                trial[a] -= step[a];
            }
            clamp(&mut trial);
            let c = model.compose_with(&ShapeParams::from_array(trial), beta2)?;
            let e = misfit(&c);
            if e < err {
                x = trial;
                comp = c;
                err = e;
                mu = (mu * 0.3).max(1e-9);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok((ShapeParams::from_array(x), err))
}

/// Configuration of a shape optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeOptConfig {
    pub n: usize,
    pub load: LoadCase,
    pub gamma1: f64,
    pub f_star: f64,
    pub delta: f64,
    pub max_iter: usize,
    pub band_period: usize,
    pub band_window: f64,
    pub max_bands: usize,
    pub zeta_factor: f64,
    pub zeta_period: usize,
    pub move_limit: f64,
    pub change_tol: f64,
    pub report_samples: usize,
    pub model: ShapeModelConfig,
    pub material: BaseMaterial,
    pub pcg_tol: f64,
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    pub seed: u64,
}

impl Default for ShapeOptConfig {
    fn default() -> Self {
        Self {
            n: 32,
            load: LoadCase::Uniaxial,
            gamma1: 1.0,
            f_star: 0.2,
            delta: 0.05,
            max_iter: 100,
            band_period: 20,
            band_window: 0.05,
            max_bands: 6,
            zeta_factor: 100.0,
            zeta_period: 100,
            move_limit: 0.02,
            change_tol: 1e-4,
            report_samples: 4,
            model: ShapeModelConfig::default(),
            material: BaseMaterial::default(),
            pcg_tol: 1e-8,
            eigen_tol: 1e-6,
            eigen_max_iter: 600,
            seed: 0x5eed,
        }
    }
}

impl ShapeOptConfig {
    fn solve_settings(&self) -> SolveSettings {
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
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeIterationLog {
    pub iter: usize,
    pub objective: f64,
    pub ks: f64,
    pub max_tau: f64,
    pub e_bar: f64,
    pub kappa_bar: f64,
    pub zener: f64,
    pub volume: f64,
    pub params: [f64; NUM_PARAMS],
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeReport {
    pub params: ShapeParams,
    pub e_bar: f64,
    pub kappa_bar: f64,
    pub zener: f64,
    pub volume: f64,
    pub sigma_cri: f64,
    pub critical_k: [f64; 3],
    pub history: Vec<ShapeIterationLog>,
}

/// MMA over the fourteen parameters on a single (non-robust) realization.
pub fn run_shape_optimization(
    init: &ShapeParams,
    config: &ShapeOptConfig,
    observer: &mut dyn FnMut(&ShapeIterationLog),
) -> Result<(ShapeReport, Vec<f64>)> {
    init.validate()?;
    config.load.validate()?;
    let grid = VoxelGrid::new(config.n)?;
    let model = ShapeModel::new(grid, config.model)?;
    let settings = config.solve_settings();
    let targets = ibz_targets(&config.load);
    let (lo, hi) = ShapeParams::bounds();
    let mut x = init.to_array();
    for j in 0..NUM_PARAMS {
        x[j] = x[j].clamp(lo[j], hi[j]);
    }
    let mut mma = Mma::new(
        NUM_PARAMS,
        2,
        MmaSettings {
            move_limit: config.move_limit,
            ..MmaSettings::default()
        },
    );
    let mut bands = vec![1usize; targets.len()];
    let mut warm: Vec<Vec<Vec<num_complex::Complex64>>> = vec![Vec::new(); targets.len()];
    let mut warm_chi: Option<[Vec<f64>; 6]> = None;
    let mut zeta = None;
    let mut scale = None;
    let mut history = Vec::new();
    let ne = grid.num_elements();
    for it in 0..config.max_iter {
        let p = ShapeParams::from_array(x);
        let comp = model.compose(&p)?;
        let hom = Homogenization::with_start(grid, config.material, &comp.rho_bar, &settings, warm_chi.as_ref())
            .map_err(|e| Error::Iteration { iteration: it, source: Box::new(e) })?;
        let pg = property_gradients(&hom);
        let props = hom.props;
        let mut d_obj = vec![0.0; ne];
        let (mut ks, mut max_tau) = (0.0, f64::NAN);
        if config.gamma1 > 0.0 {
            let setup = BucklingSetup::new(&hom, config.load.stress())?;
            let refresh = it % config.band_period == 0;
            let mut res = Vec::new();
            for (l, k) in targets.iter().enumerate() {
                let m = if refresh { (bands[l] + 2).min(config.max_bands) } else { bands[l] };
                // a stale warm start after a large step can stall; retry cold
                let r = match setup.solve_at(k, m, &warm[l], &settings) {
                    Err(Error::NotConverged { .. }) if !warm[l].is_empty() => setup.solve_at(k, m, &[], &settings),
                    r => r,
                }
                .map_err(|e| Error::Iteration { iteration: it, source: Box::new(e) })?;
                res.push(r);
            }
            if refresh {
                bands = select_bands(&res.iter().map(|r| r.taus.clone()).collect::<Vec<_>>(), config.band_window);
            }
            for (l, r) in res.iter_mut().enumerate() {
                warm[l] = r.warm_start();
                r.taus.truncate(bands[l]);
                r.modes.truncate(bands[l]);
            }
            let taus: Vec<f64> = res.iter().flat_map(|r| r.taus.iter().cloned()).collect();
            max_tau = taus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if zeta.is_none() || it % config.zeta_period == 0 {
                zeta = Some(config.zeta_factor / max_tau.abs().max(1e-300));
            }
            let (v, w) = ks_aggregate(&taus, zeta.unwrap())?;
            ks = v;
            let mut modes = Vec::new();
            let mut i = 0;
            for r in &res {
                for (t, m) in r.taus.iter().zip(&r.modes) {
                    modes.push(WeightedMode { k: r.k, tau: *t, mode: m, weight: w[i] });
                    i += 1;
                }
            }
            let g = weighted_tau_gradient(&setup, &modes, &settings)?;
            for e in 0..ne {
                d_obj[e] += config.gamma1 * g[e];
            }
        }
        let inv_e = 1.0 / props.e_bar;
        for e in 0..ne {
            d_obj[e] -= (1.0 - config.gamma1) * pg.d_e[e] * inv_e * inv_e;
        }
        let objective = config.gamma1 * ks + (1.0 - config.gamma1) * inv_e;
        let sc = *scale.get_or_insert(1.0 / objective.abs().max(1e-300));
        let ar1 = props.zener - 1.0;
        let g_iso = ar1 * ar1 - config.delta * config.delta;
        let d_iso: Vec<f64> = pg.d_ar.iter().map(|d| 2.0 * ar1 * d).collect();
        let vol = volume_fraction(&comp.rho_bar);
        let g_vol = vol / config.f_star - 1.0;
        let d_vol = vec![1.0 / (ne as f64 * config.f_star); ne];

        let df0: Vec<f64> = model.chain(&comp, &d_obj).iter().map(|v| v * sc).collect();
        let dg = vec![model.chain(&comp, &d_iso).to_vec(), model.chain(&comp, &d_vol).to_vec()];
        warm_chi = Some(hom.chi.clone());
        let log = ShapeIterationLog {
            iter: it,
            objective,
            ks,
            max_tau,
            e_bar: props.e_bar,
            kappa_bar: props.kappa_bar,
            zener: props.zener,
            volume: vol,
            params: x,
        };
        observer(&log);
        history.push(log);
        let step = mma.update(&x, &df0, &[g_iso, g_vol], &dg, &lo, &hi);
        let mut change = 0.0f64;
        for j in 0..NUM_PARAMS {
            let v = step.x[j].clamp(lo[j], hi[j]);
            change = change.max((v - x[j]).abs() / (hi[j] - lo[j]));
            x[j] = v;
        }
        if change < config.change_tol {
            break;
        }
    }
    let p = ShapeParams::from_array(x);
    let comp = model.compose(&p)?;
    let hom = Homogenization::new(grid, config.material, &comp.rho_bar, &settings)?;
    let setup = BucklingSetup::new(&hom, config.load.stress())?;
    let path = IbzPath::for_load(&config.load, config.report_samples);
    let b = sweep_band_diagram(&setup, &path, 1, &settings)?;
    Ok((
        ShapeReport {
            params: p,
            e_bar: hom.props.e_bar,
            kappa_bar: hom.props.kappa_bar,
            zener: hom.props.zener,
            volume: volume_fraction(&comp.rho_bar),
            sigma_cri: b.sigma_cri,
            critical_k: b.critical_k().0,
            history,
        },
        comp.rho_bar,
    ))
}
