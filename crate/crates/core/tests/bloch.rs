use cellbuck_core::bloch::*;
use cellbuck_core::element::BaseMaterial;
use cellbuck_core::grid::VoxelGrid;
use cellbuck_core::homogenize::{Homogenization, LoadCase, SolveSettings};
use cellbuck_core::solver::{phase_table, EigenSettings};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn tight() -> SolveSettings {
    SolveSettings {
        pcg_tol: 1e-12,
        pcg_max_iter: 4000,
        eigen: EigenSettings {
            tol: 1e-9,
            max_iter: 600,
            ..EigenSettings::default()
        },
    }
}

fn random_cell(n: usize, seed: u64) -> Homogenization {
    let g = VoxelGrid::new(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho: Vec<f64> = (0..g.num_elements()).map(|_| 0.2 + 0.8 * rng.gen::<f64>()).collect();
    Homogenization::new(g, BaseMaterial::default(), &rho, &tight()).unwrap()
}

#[test]
fn zone_center_map_is_periodic_map() {
    let m = bloch_map(&WaveVector::GAMMA);
    assert!(m.iter().all(|p| *p == Complex64::new(1.0, 0.0)));
    assert_eq!(phase_table::<f64>([0.0; 3]).unwrap(), [1.0; 8]);
}

#[test]
fn m_point_map_is_real_and_antiperiodic_in_plane() {
    let k = WaveVector::new([PI, PI, 0.0]).unwrap();
    assert!(k.is_real());
    let m = phase_table::<f64>(k.0).unwrap();
    // wrap code bit 0 = x, bit 1 = y, bit 2 = z
    assert_eq!(m, [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0]);
    assert!(!WaveVector::new([PI / 20.0, 0.0, 0.0]).unwrap().is_real());
    assert!(WaveVector::new([4.0, 0.0, 0.0]).is_err());
}

#[test]
fn bloch_pencil_is_hermitian() {
    let h = random_cell(3, 1);
    let s = BucklingSetup::new(&h, LoadCase::Uniaxial.stress()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..3 {
        let k = WaveVector::new([0, 1, 2].map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * PI)).unwrap();
        let (k0, ks) = s.dense_pencil(&k);
        for m in [k0, ks] {
            let d = (&m - m.adjoint()).norm() / m.norm();
            assert!(d < 1e-12, "{d}");
        }
    }
}

#[test]
fn iterative_solver_matches_dense_reference() {
    let h = random_cell(4, 2);
    let s = BucklingSetup::new(&h, LoadCase::Uniaxial.stress()).unwrap();
    for k in [[0.0; 3], [PI, PI, 0.0], [PI / 20.0, 0.3, -1.1]] {
        let k = WaveVector::new(k).unwrap();
        let dense = s.dense_solve(&k, 3).unwrap();
        let it = s.solve_at(&k, 3, &[], &tight()).unwrap();
        for (a, b) in it.taus.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-7 * b.abs().max(1.0), "k = {:?}: {a} vs {b}", k.0);
        }
    }
}

#[test]
fn band_values_are_even_in_k_and_linear_in_load() {
    let h = random_cell(3, 3);
    let s1 = BucklingSetup::new(&h, LoadCase::Hydrostatic.stress()).unwrap();
    let s2 = BucklingSetup::new(&h, LoadCase::Hydrostatic.stress() * 2.0).unwrap();
    let k = WaveVector::new([0.4, -1.3, 2.2]).unwrap();
    let a = s1.dense_solve(&k, 4).unwrap();
    let b = s1.dense_solve(&k.neg(), 4).unwrap();
    let c = s2.dense_solve(&k, 4).unwrap();
    for i in 0..4 {
        assert!((a[i] - b[i]).abs() < 1e-10 * a[i].abs().max(1.0));
        assert!((c[i] - 2.0 * a[i]).abs() < 1e-10 * a[i].abs().max(1.0));
    }
}

#[test]
fn paths_and_targets() {
    let p = IbzPath::cubic(4);
    let s = p.samples();
    assert_eq!(s.first().unwrap().label.as_deref(), Some("G"));
    assert!(s.windows(2).all(|w| w[1].arclength >= w[0].arclength));
    let r = p.reversed().samples();
    assert_eq!(r.len(), s.len());
    let mut ks: Vec<_> = s.iter().map(|x| x.k.0).collect();
    let mut kr: Vec<_> = r.iter().map(|x| x.k.0).collect();
    let key = |v: &[f64; 3]| v.map(|c| (c * 1e9).round() as i64);
    ks.sort_by_key(key);
    kr.sort_by_key(key);
    assert_eq!(ks, kr);

    assert_eq!(ibz_targets(&LoadCase::Hydrostatic).len(), 5);
    let uni = ibz_targets(&LoadCase::Uniaxial);
    assert_eq!(uni.len(), 7);
    for k in uni {
        assert!(k.0.iter().all(|c| c.abs() <= PI));
    }
    let t = IbzPath::for_load(&LoadCase::Uniaxial, 2).samples();
    assert!(t.iter().any(|x| x.label.as_deref() == Some("H")));
}

#[test]
fn solid_cell_buckles_only_at_large_load() {
    let g = VoxelGrid::new(4).unwrap();
    let h = Homogenization::new(g, BaseMaterial::default(), &vec![1.0; 64], &tight()).unwrap();
    let s = BucklingSetup::new(&h, LoadCase::Uniaxial.stress()).unwrap();
    let lam = 1.0 / s.dense_solve(&WaveVector::new([PI, PI, 0.0]).unwrap(), 1).unwrap()[0];
    assert!(lam > 0.01, "{lam}");
}

#[test]
fn rejects_zero_load() {
    let h = random_cell(2, 4);
    assert!(BucklingSetup::new(&h, cellbuck_core::element::Vector6::zeros()).is_err());
}
