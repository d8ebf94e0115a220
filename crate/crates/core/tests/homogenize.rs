use cellbuck_core::design::{hollow_sphere, HOLLOW_SPHERE_RADII};
use cellbuck_core::element::{interpolate_material, isotropic_elasticity, BaseMaterial, Matrix6, Vector6};
use cellbuck_core::grid::{CubicOp, VoxelGrid};
use cellbuck_core::homogenize::*;
use cellbuck_core::solver::{phase_table, LinearOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight() -> SolveSettings {
    SolveSettings {
        pcg_tol: 1e-12,
        ..SolveSettings::default()
    }
}

fn rel(a: &Matrix6, b: &Matrix6) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn all_solid_cell_reproduces_base_material() {
    let g = VoxelGrid::new(4).unwrap();
    let mat = BaseMaterial::default();
    let h = Homogenization::new(g, mat, &vec![1.0; 64], &tight()).unwrap();
    let c = isotropic_elasticity(1.0, 1.0 / 3.0);
    assert!(rel(&h.props.c_bar, &c) < 1e-10);
    assert!((h.props.e_bar - 1.0).abs() < 1e-10);
    assert!((h.props.zener - 1.0).abs() < 1e-10);
    for chi in &h.chi {
        assert!(chi.iter().all(|v| v.abs() < 1e-10));
    }
}

#[test]
fn all_void_stiffness_is_scaled_solid() {
    let g = VoxelGrid::new(3).unwrap();
    let mat = BaseMaterial::default();
    let solid = Homogenization::new(g, mat, &vec![1.0; 27], &tight()).unwrap();
    let void = Homogenization::new(g, mat, &vec![0.0; 27], &tight()).unwrap();
    let ks = assemble_k0(&solid.element, &solid.e_k0, solid.connectivity());
    let kv = assemble_k0(&void.element, &void.e_k0, void.connectivity());
    for (a, b) in ks.values.iter().zip(&kv.values) {
        assert!((b - mat.e0 * a).abs() <= 1e-14 * a.abs().max(1.0));
    }
}

fn random_field(g: &VoxelGrid, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..g.num_elements()).map(|_| rng.gen::<f64>()).collect()
}

#[test]
fn assembled_k0_is_psd_with_translation_null_space() {
    let g = VoxelGrid::new(4).unwrap();
    let mat = BaseMaterial::default();
    let rho = random_field(&g, 1);
    let e_k0: Vec<f64> = rho.iter().map(|&r| interpolate_material(r, &mat).0).collect();
    let el = cellbuck_core::element::build_h11_element(g.h(), &mat.unit_elasticity()).unwrap();
    let conn = g.connectivity();
    let k = assemble_k0(&el, &e_k0, &conn);
    let nd = g.num_dofs();
    for c in 0..3 {
        let t: Vec<f64> = (0..nd).map(|i| if i % 3 == c { 1.0 } else { 0.0 }).collect();
        let kt = k.mul_vec(&t);
        let n: f64 = kt.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n / k.frobenius_norm() < 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let u: Vec<f64> = (0..nd).map(|_| rng.gen::<f64>() - 0.5).collect();
        let ku = k.mul_vec(&u);
        assert!(u.iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>() >= 0.0);
    }
    // symmetric and equal to the matrix-free operator at the zone center
    let mats = cellbuck_core::solver::ElementMatrices::Scaled {
        template: Box::new(cellbuck_core::solver::to_row_major(&el.k0)),
        scale: e_k0.clone(),
    };
    let op = cellbuck_core::solver::BlochOperator::new(&conn, &mats, phase_table::<f64>([0.0; 3]).unwrap());
    let u: Vec<f64> = (0..nd).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mut y = vec![0.0; nd];
    op.apply(&u, &mut y);
    let ku = k.mul_vec(&u);
    for (a, b) in y.iter().zip(&ku) {
        assert!((a - b).abs() < 1e-12);
    }
    for r in 0..nd {
        for c in 0..nd {
            assert!((k.get(r, c) - k.get(c, r)).abs() < 1e-15);
        }
    }
}

#[test]
fn two_effective_matrix_routes_agree() {
    let g = VoxelGrid::new(8).unwrap();
    let rho = random_field(&g, 3);
    let h = Homogenization::new(g, BaseMaterial::default(), &rho, &tight()).unwrap();
    let mutual = effective_matrix_mutual(&h.element, &h.e_k0, &h.chi, &h.loads);
    assert!(rel(&mutual, &h.props.c_bar) < 1e-10, "{}", rel(&mutual, &h.props.c_bar));
}

#[test]
fn average_stress_equals_macroscopic_stress() {
    let g = VoxelGrid::new(8).unwrap();
    let (ri, ro) = HOLLOW_SPHERE_RADII;
    let rho = hollow_sphere(&g, ri, ro);
    let h = Homogenization::new(g, BaseMaterial::default(), &rho, &tight()).unwrap();
    for load in [LoadCase::Uniaxial, LoadCase::Hydrostatic] {
        let s0 = load.stress();
        let eps0 = h.props.macro_strain(&s0);
        let avg = h.average_stress(&eps0);
        assert!((avg - s0).norm() < 1e-8 * s0.norm(), "{avg} vs {s0}");
    }
    assert_eq!(h.props.macro_strain(&Vector6::zeros()), Vector6::zeros());
}

#[test]
fn cubic_symmetric_field_gives_cubic_matrix() {
    let g = VoxelGrid::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let raw: Vec<f64> = (0..g.num_elements()).map(|_| rng.gen::<f64>()).collect();
    // symmetrize by averaging over the cube group
    let ops = CubicOp::all();
    let rho: Vec<f64> = (0..g.num_elements())
        .map(|e| ops.iter().map(|op| raw[op.apply_element(&g, e)]).sum::<f64>() / 48.0)
        .collect();
    let h = Homogenization::new(g, BaseMaterial::default(), &rho, &tight()).unwrap();
    let c = h.props.c_bar;
    let tol = 1e-8 * c.norm();
    for (a, b) in [((0, 0), (1, 1)), ((0, 0), (2, 2)), ((3, 3), (4, 4)), ((3, 3), (5, 5)), ((0, 1), (0, 2)), ((0, 1), (1, 2))] {
        assert!((c[a] - c[b]).abs() < tol);
    }
    for i in 0..3 {
        for j in 3..6 {
            assert!(c[(i, j)].abs() < tol);
        }
    }
}

/// Exact effective matrix of a laminate of isotropic layers normal to z.
fn laminate(layers: &[(f64, f64, f64)]) -> Matrix6 {
    // (fraction, lambda, mu)
    let m = |l: f64, u: f64| l + 2.0 * u;
    let c33 = 1.0 / layers.iter().map(|&(f, l, u)| f / m(l, u)).sum::<f64>();
    let a: f64 = layers.iter().map(|&(f, l, u)| f * l / m(l, u)).sum();
    let c44 = 1.0 / layers.iter().map(|&(f, _, u)| f / u).sum::<f64>();
    let c66: f64 = layers.iter().map(|&(f, _, u)| f * u).sum();
    let c11 = layers.iter().map(|&(f, l, u)| f * (m(l, u) - l * l / m(l, u))).sum::<f64>() + c33 * a * a;
    let c12 = layers.iter().map(|&(f, l, u)| f * (l - l * l / m(l, u))).sum::<f64>() + c33 * a * a;
    let mut c = Matrix6::zeros();
    c[(0, 0)] = c11;
    c[(1, 1)] = c11;
    c[(2, 2)] = c33;
    c[(0, 1)] = c12;
    c[(1, 0)] = c12;
    c[(0, 2)] = c33 * a;
    c[(2, 0)] = c33 * a;
    c[(1, 2)] = c33 * a;
    c[(2, 1)] = c33 * a;
    c[(3, 3)] = c44;
    c[(4, 4)] = c44;
    c[(5, 5)] = c66;
    c
}

#[test]
fn laminate_matches_closed_form() {
    let g = VoxelGrid::new(8).unwrap();
    let mat = BaseMaterial::default();
    // three slabs of 3, 2 and 3 layers
    let dens = [1.0, 1.0, 1.0, 0.5, 0.5, 0.2, 0.2, 0.2];
    let rho: Vec<f64> = (0..g.num_elements()).map(|e| dens[g.coords(e)[2]]).collect();
    let h = Homogenization::new(g, mat, &rho, &tight()).unwrap();
    let nu = mat.nu;
    let layers: Vec<(f64, f64, f64)> = [(3.0, 1.0), (2.0, 0.5), (3.0, 0.2)]
        .iter()
        .map(|&(k, r)| {
            let e = interpolate_material(r, &mat).0;
            let lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
            let mu = e / (2.0 * (1.0 + nu));
            (k / 8.0, lam, mu)
        })
        .collect();
    let exact = laminate(&layers);
    assert!(rel(&h.props.c_bar, &exact) < 1e-8, "{}\n{}", h.props.c_bar, exact);
}

#[test]
fn adding_material_never_softens() {
    let g = VoxelGrid::new(8).unwrap();
    let base = random_field(&g, 5);
    let mut prev = 0.0;
    for add in [0.0, 0.1, 0.3] {
        let rho: Vec<f64> = base.iter().map(|r| (r + add).min(1.0)).collect();
        let h = Homogenization::new(g, BaseMaterial::default(), &rho, &SolveSettings::default()).unwrap();
        assert!(h.props.e_bar >= prev);
        prev = h.props.e_bar;
    }
}

#[test]
fn macro_strain_examples() {
    let c = isotropic_elasticity(2.0, 0.25);
    let p = EffectiveProperties::from_c(&c).unwrap();
    let eps = p.macro_strain(&LoadCase::Uniaxial.stress());
    let expect = Vector6::new(-0.5, 0.125, 0.125, 0.0, 0.0, 0.0);
    assert!((eps - expect).norm() < 1e-14);
    let eps = p.macro_strain(&LoadCase::Hydrostatic.stress());
    let kappa = p.kappa_bar;
    for i in 0..3 {
        assert!((eps[i] + 1.0 / (3.0 * kappa)).abs() < 1e-14);
    }
    assert!(LoadCase::Custom([0.0; 6]).validate().is_err());
}

#[test]
fn homogeneous_loads_self_equilibrate() {
    let g = VoxelGrid::new(4).unwrap();
    let h = Homogenization::new(g, BaseMaterial::default(), &vec![0.7; 64], &tight()).unwrap();
    for f in &h.loads {
        assert!(f.iter().all(|v| v.abs() < 1e-14));
    }
    // f(2 eps) = 2 f(eps) by linearity of the columns
    let twice = unit_strain_loads(&h.element, &h.e_k0.iter().map(|e| 2.0 * e).collect::<Vec<_>>(), h.connectivity());
    for (a, b) in twice.iter().zip(&h.loads) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(*x, 2.0 * y);
        }
    }
}

#[test]
fn rejects_bad_density() {
    let g = VoxelGrid::new(2).unwrap();
    assert!(Homogenization::new(g, BaseMaterial::default(), &[1.5; 8], &tight()).is_err());
    assert!(Homogenization::new(g, BaseMaterial::default(), &[0.5; 7], &tight()).is_err());
}
