use cellbuck_core::bloch::{BucklingSetup, WaveVector};
use cellbuck_core::element::BaseMaterial;
use cellbuck_core::grid::VoxelGrid;
use cellbuck_core::homogenize::{Homogenization, LoadCase, SolveSettings};
use cellbuck_core::sensitivity::*;
use cellbuck_core::solver::EigenSettings;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn tight() -> SolveSettings {
    SolveSettings {
        pcg_tol: 1e-12,
        pcg_max_iter: 4000,
        eigen: EigenSettings {
            tol: 1e-10,
            max_iter: 800,
            ..EigenSettings::default()
        },
    }
}

fn field(g: &VoxelGrid, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..g.num_elements()).map(|_| 0.3 + 0.7 * rng.gen::<f64>()).collect()
}

fn hom(g: VoxelGrid, rho: &[f64]) -> Homogenization {
    Homogenization::new(g, BaseMaterial::default(), rho, &tight()).unwrap()
}

#[test]
fn property_gradients_match_differences() {
    let g = VoxelGrid::new(4).unwrap();
    let rho = field(&g, 11);
    let h = hom(g, &rho);
    let pg = property_gradients(&h);
    let dc = dc_drho(&h);
    let idx = [0, 17, 42, 63];
    let mut fe = |x: &[f64]| Ok(hom(g, x).props.e_bar);
    let scale = pg.d_e.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for c in fd_check(&mut fe, &rho, &pg.d_e, &idx, &[], scale).unwrap() {
        assert!(c.rel_err < 1e-5, "{c:?}");
    }
    let mut fa = |x: &[f64]| Ok(hom(g, x).props.zener);
    let scale = pg.d_ar.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for c in fd_check(&mut fa, &rho, &pg.d_ar, &idx, &[], scale).unwrap() {
        assert!(c.rel_err < 1e-5, "{c:?}");
    }
    let d12: Vec<f64> = dc.iter().map(|m| m[(0, 1)]).collect();
    let mut fc = |x: &[f64]| Ok(hom(g, x).props.c_bar[(0, 1)]);
    let scale = d12.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for c in fd_check(&mut fc, &rho, &d12, &idx, &[], scale).unwrap() {
        assert!(c.rel_err < 1e-5, "{c:?}");
    }
    assert!(pg.d_f.iter().all(|&v| (v - 1.0 / 64.0).abs() < 1e-15));
}

fn top_tau(g: VoxelGrid, x: &[f64], k: &WaveVector, load: &LoadCase) -> f64 {
    let h = hom(g, x);
    let s = BucklingSetup::new(&h, load.stress()).unwrap();
    s.dense_solve(k, 1).unwrap()[0]
}

#[test]
fn eigenvalue_gradient_matches_differences() {
    let g = VoxelGrid::new(4).unwrap();
    let rho = field(&g, 12);
    let h = hom(g, &rho);
    for (load, k) in [
        (LoadCase::Uniaxial, [PI, PI, 0.0]),
        (LoadCase::Hydrostatic, [0.7, -0.2, 1.9]),
    ] {
        let k = WaveVector::new(k).unwrap();
        let s = BucklingSetup::new(&h, load.stress()).unwrap();
        let r = s.solve_at(&k, 1, &[], &tight()).unwrap();
        let grad = dtau_drho(&s, &k, r.taus[0], &r.modes[0], &tight()).unwrap();
        let scale = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut f = |x: &[f64]| Ok(top_tau(g, x, &k, &load));
        for c in fd_check(&mut f, &rho, &grad, &[3, 20, 45], &[1e-4, 1e-5], scale).unwrap() {
            assert!(c.rel_err < 1e-4, "{c:?}");
        }
    }
}

#[test]
fn weighted_gradient_is_linear_and_basis_invariant() {
    let g = VoxelGrid::new(3).unwrap();
    let rho = field(&g, 13);
    let h = hom(g, &rho);
    let s = BucklingSetup::new(&h, LoadCase::Uniaxial.stress()).unwrap();
    let k = WaveVector::new([0.5, 0.0, 0.0]).unwrap();
    let r = s.solve_at(&k, 2, &[], &tight()).unwrap();
    let g0 = dtau_drho(&s, &k, r.taus[0], &r.modes[0], &tight()).unwrap();
    let g1 = dtau_drho(&s, &k, r.taus[1], &r.modes[1], &tight()).unwrap();
    let wm = |i: usize, w: f64| WeightedMode {
        k,
        tau: r.taus[i],
        mode: &r.modes[i],
        weight: w,
    };
    let gw = weighted_tau_gradient(&s, &[wm(0, 0.3), wm(1, 0.7)], &tight()).unwrap();
    for e in 0..g0.len() {
        assert!((gw[e] - 0.3 * g0[e] - 0.7 * g1[e]).abs() < 1e-9 * g0[e].abs().max(1.0));
    }

    // Pretend the pair is degenerate: a unitary mix with equal weights and
    // equal eigenvalue gives the same aggregated gradient.
    let tau = 0.5 * (r.taus[0] + r.taus[1]);
    let (c, sn) = (0.6f64, 0.8f64);
    let ph = Complex64::from_polar(1.0, 0.9);
    let a: Vec<Complex64> = r.modes[0].iter().zip(&r.modes[1]).map(|(x, y)| x * c + y * sn * ph).collect();
    let b: Vec<Complex64> = r.modes[0].iter().zip(&r.modes[1]).map(|(x, y)| -x * sn * ph.conj() + y * c).collect();
    fn half(k: WaveVector, tau: f64, mode: &[Complex64]) -> WeightedMode<'_> {
        WeightedMode { k, tau, mode, weight: 0.5 }
    }
    let orig = weighted_tau_gradient(&s, &[half(k, tau, &r.modes[0]), half(k, tau, &r.modes[1])], &tight()).unwrap();
    let rot = weighted_tau_gradient(&s, &[half(k, tau, &a), half(k, tau, &b)], &tight()).unwrap();
    let scale = orig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, y) in orig.iter().zip(&rot) {
        assert!((x - y).abs() < 1e-10 * scale);
    }
}

#[test]
fn rejects_mismatched_mode() {
    let g = VoxelGrid::new(2).unwrap();
    let h = hom(g, &[0.5; 8]);
    let s = BucklingSetup::new(&h, LoadCase::Hydrostatic.stress()).unwrap();
    let short = vec![Complex64::new(0.0, 0.0); 3];
    assert!(dtau_drho(&s, &WaveVector::GAMMA, 1.0, &short, &tight()).is_err());
}
