use cellbuck_core::design::{hollow_sphere, HOLLOW_SPHERE_RADII};
use cellbuck_core::grid::{CubicOp, VoxelGrid};
use cellbuck_core::homogenize::LoadCase;
use cellbuck_core::mma::{Mma, MmaSettings};
use cellbuck_core::topopt::*;

/// min sum c_j / x_j  s.t.  sum x_j <= v; optimum x_j = v sqrt(c_j) / sum sqrt(c).
#[test]
fn mma_solves_separable_convex_problem() {
    let c = [1.0, 4.0, 9.0, 0.25];
    let v = 2.0;
    let n = c.len();
    let mut x = vec![0.5; n];
    let mut mma = Mma::new(n, 1, MmaSettings::default());
    for _ in 0..100 {
        let df: Vec<f64> = (0..n).map(|j| -c[j] / (x[j] * x[j])).collect();
        let g = [x.iter().sum::<f64>() / v - 1.0];
        let dg = [vec![1.0 / v; n]];
        x = mma.update(&x, &df, &g, &dg, &[0.01; 4], &[1.0; 4]).x;
    }
    let s: f64 = c.iter().map(|v| v.sqrt()).sum();
    for j in 0..n {
        let exact = (v * c[j].sqrt() / s).min(1.0);
        assert!((x[j] - exact).abs() < 1e-4, "{x:?}");
    }
}

/// Two-constraint test problem: min x.x subject to two ball constraints.
#[test]
fn mma_two_ball_problem() {
    let mut x = vec![4.0, 3.0, 2.0];
    let mut mma = Mma::new(
        3,
        2,
        MmaSettings {
            move_limit: 0.5,
            ..MmaSettings::default()
        },
    );
    for _ in 0..60 {
        let df: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let c1 = [5.0, 2.0, 1.0];
        let c2 = [3.0, 4.0, 3.0];
        let g = [
            (0..3).map(|j| (x[j] - c1[j]).powi(2)).sum::<f64>() - 9.0,
            (0..3).map(|j| (x[j] - c2[j]).powi(2)).sum::<f64>() - 9.0,
        ];
        let dg = [
            (0..3).map(|j| 2.0 * (x[j] - c1[j])).collect(),
            (0..3).map(|j| 2.0 * (x[j] - c2[j])).collect(),
        ];
        x = mma.update(&x, &df, &g, &dg, &[0.0; 3], &[5.0; 3]).x;
    }
    // reference optimum from an independent SQP solve
    let expect = [2.017519, 1.780011, 1.237507];
    for j in 0..3 {
        assert!((x[j] - expect[j]).abs() < 1e-3, "{x:?}");
    }
}

#[test]
fn mma_keeps_bounds_and_stationary_points() {
    let mut mma = Mma::new(3, 1, MmaSettings::default());
    let x = vec![0.2, 0.5, 0.9];
    let s = mma.update(&x, &[0.0; 3], &[-1.0], &[vec![0.0; 3]], &[0.0; 3], &[1.0; 3]);
    for (a, b) in s.x.iter().zip(&x) {
        assert!((a - b).abs() < 1e-5);
    }
    let mut mma = Mma::new(3, 1, MmaSettings::default());
    let s = mma.update(&x, &[-1.0, 1.0, -1.0], &[2.0], &[vec![1.0; 3]], &[0.0; 3], &[1.0; 3]);
    assert!(s.x.iter().all(|v| (0.0..=1.0).contains(v)));
    // the violated volume constraint pulls the sum down
    assert!(s.x.iter().sum::<f64>() < x.iter().sum::<f64>());
}

#[test]
fn ks_closed_forms() {
    let (v, w) = ks_aggregate(&[0.7], 5.0).unwrap();
    assert!((v - 0.7).abs() < 1e-15 && w == vec![1.0]);
    let z = 100.0 / 0.7;
    let (v, w) = ks_aggregate(&[0.7, 0.7], z).unwrap();
    assert!((v - (0.7 + 0.7 * 2f64.ln() / 100.0)).abs() < 1e-14);
    assert_eq!(w, vec![0.5, 0.5]);
    let (v, _) = ks_aggregate(&[0.7, 0.1], 1e4).unwrap();
    assert!((v - 0.7).abs() < 1e-12);
    // no overflow for large arguments
    let (v, _) = ks_aggregate(&[1e3, 999.0], 1e3).unwrap();
    assert!(v.is_finite() && v >= 1e3);
    assert!(ks_aggregate(&[], 1.0).is_err());
    let t = [3.0, 2.5, 2.9, 1.0];
    for z in [0.1, 1.0, 10.0] {
        let (v, w) = ks_aggregate(&t, z).unwrap();
        assert!(v >= 3.0 && v <= 3.0 + (4f64).ln() / z);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn band_selection() {
    assert_eq!(select_bands(&[vec![10.0, 5.0], vec![3.0]], 0.05), vec![1, 1]);
    assert_eq!(select_bands(&[vec![10.0, 9.8, 9.6, 8.0], vec![9.7, 1.0]], 0.05), vec![3, 1]);
}

#[test]
fn symmetry_reduction_round_trip() {
    let g = VoxelGrid::new(6).unwrap();
    let sym = SymmetryReduction::cubic(&g);
    assert_eq!(sym.size.iter().sum::<usize>(), 216);
    // 6^3 cube: wedge of a 3x3x3 octant holds 10 orbits
    assert_eq!(sym.num_vars(), 10);
    let x: Vec<f64> = (0..sym.num_vars()).map(|i| i as f64 / 10.0).collect();
    let rho = sym.expand(&x);
    for op in CubicOp::all() {
        for e in 0..216 {
            assert_eq!(rho[e], rho[op.apply_element(&g, e)]);
        }
    }
    for (a, b) in sym.reduce_mean(&rho).iter().zip(&x) {
        assert!((a - b).abs() < 1e-15);
    }
    let grad = sym.reduce_gradient(&vec![1.0; 216]);
    assert_eq!(grad.iter().map(|&v| v as usize).collect::<Vec<_>>(), sym.size);
}

#[test]
fn config_validation() {
    assert!(OptConfig::default().validate().is_ok());
    for bad in [
        OptConfig { gamma1: 1.5, ..OptConfig::default() },
        OptConfig { beta_period: 0, ..OptConfig::default() },
        OptConfig { delta_eta: 0.6, ..OptConfig::default() },
        OptConfig { load: LoadCase::Custom([0.0; 6]), ..OptConfig::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn zero_iterations_return_the_seed() {
    let cfg = OptConfig {
        n: 4,
        max_iter: 0,
        ..OptConfig::default()
    };
    let g = VoxelGrid::new(4).unwrap();
    let seed = hollow_sphere(&g, HOLLOW_SPHERE_RADII.0, HOLLOW_SPHERE_RADII.1);
    let opt = Optimizer::new(cfg).unwrap();
    let mut st = opt.initial_state(&seed).unwrap();
    opt.run(&mut st, &mut ()).unwrap();
    assert_eq!(st.rho(&opt.sym), seed);
    assert!(st.history.is_empty());
}

#[test]
fn short_run_logs_consistent_history() {
    let cfg = OptConfig {
        n: 6,
        max_iter: 3,
        load: LoadCase::Hydrostatic,
        ..OptConfig::default()
    };
    let g = VoxelGrid::new(6).unwrap();
    let seed = hollow_sphere(&g, HOLLOW_SPHERE_RADII.0, HOLLOW_SPHERE_RADII.1);
    let opt = Optimizer::new(cfg).unwrap();
    let mut st = opt.initial_state(&seed).unwrap();
    let mut seen = 0;
    let mut obs = |_: &OptState, l: &IterationLog, _: bool| {
        assert_eq!(l.iter, seen);
        seen += 1;
        Ok(())
    };
    opt.run(&mut st, &mut obs).unwrap();
    assert_eq!(st.history.len(), 3);
    for l in &st.history {
        assert!(l.max_tau <= l.ks && l.ks <= l.max_tau + (l.n_tau as f64).ln() / l.zeta + 1e-12);
        assert!(l.f_eroded <= l.f_intermediate && l.f_intermediate <= l.f_dilated);
        assert_eq!(l.bands.len(), 5);
    }
    assert!(st.x.iter().all(|v| (0.0..=1.0).contains(v)));

    // a second identical run is bitwise identical
    let mut st2 = opt.initial_state(&seed).unwrap();
    opt.run(&mut st2, &mut ()).unwrap();
    assert_eq!(st.x, st2.x);
    for (a, b) in st.history.iter().zip(&st2.history) {
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
