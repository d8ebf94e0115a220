//! Element kernels for the cubic voxel: the Wilson incompatible-mode
//! hexahedron (H11) with its three bubble modes condensed out, the plain
//! trilinear hexahedron for comparison, SIMP interpolation, Gauss-point
//! stress recovery and the geometric (stress) stiffness.
//!
//! Voigt order is `[11, 22, 33, 23, 13, 12]` with engineering shear strains.
//! Element DOFs are node-major: `3 * local_node + component`.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::grid::HEX_NODE_OFFSETS;

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Vector6 = SVector<f64, 6>;
pub type Matrix24 = SMatrix<f64, 24, 24>;
pub type Matrix6x24 = SMatrix<f64, 6, 24>;
pub type Matrix24x6 = SMatrix<f64, 24, 6>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Matrix3x8 = SMatrix<f64, 3, 8>;
type Matrix6x9 = SMatrix<f64, 6, 9>;
type Matrix9 = SMatrix<f64, 9, 9>;
type Matrix9x24 = SMatrix<f64, 9, 24>;

const GAUSS: f64 = 0.577_350_269_189_625_8;

/// Base material with the SIMP parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseMaterial {
    pub e1: f64,
    pub nu: f64,
    /// Void stiffness, `1e-4 * e1` by default.
    pub e0: f64,
    pub penal: f64,
}

impl Default for BaseMaterial {
    fn default() -> Self {
        Self::new(1.0, 1.0 / 3.0)
    }
}

impl BaseMaterial {
    pub fn new(e1: f64, nu: f64) -> Self {
        Self {
            e1,
            nu,
            e0: 1e-4 * e1,
            penal: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e1 > 0.0) || !(self.e0 > 0.0) || self.e0 >= self.e1 {
            return Err(Error::InvalidInput(format!(
                "need 0 < e0 < e1 (e0 = {}, e1 = {})",
                self.e0, self.e1
            )));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(Error::InvalidInput(format!(
                "Poisson ratio must lie in (0, 0.5), got {}",
                self.nu
            )));
        }
        if !(self.penal >= 1.0) {
            return Err(Error::InvalidInput(format!("SIMP exponent {}", self.penal)));
        }
        Ok(())
    }

    /// Isotropic elasticity matrix of the solid phase with unit modulus.
    pub fn unit_elasticity(&self) -> Matrix6 {
        isotropic_elasticity(1.0, self.nu)
    }
}

/// Isotropic elasticity in Voigt form with engineering shear.
pub fn isotropic_elasticity(e: f64, nu: f64) -> Matrix6 {
    let lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    let mut c = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lam;
        }
        c[(i, i)] = lam + 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    c
}

/// SIMP moduli of one element: `(for K0 and loads, for K_sigma)`.
#[inline]
pub fn interpolate_material(rho_bar: f64, mat: &BaseMaterial) -> (f64, f64) {
    let rp = rho_bar.powf(mat.penal);
    (rp * (mat.e1 - mat.e0) + mat.e0, rp * mat.e1)
}

/// Derivatives of [`interpolate_material`] with respect to the density.
#[inline]
pub fn interpolate_material_derivative(rho_bar: f64, mat: &BaseMaterial) -> (f64, f64) {
    let d = if rho_bar > 0.0 {
        mat.penal * rho_bar.powf(mat.penal - 1.0)
    } else if mat.penal == 1.0 {
        1.0
    } else {
        0.0
    };
    (d * (mat.e1 - mat.e0), d * mat.e1)
}

/// Natural coordinates of the 8 Gauss points, x fastest.
pub fn gauss_points() -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (q, gp) in g.iter_mut().enumerate() {
        let s = |b: usize| if (q >> b) & 1 == 1 { GAUSS } else { -GAUSS };
        *gp = [s(0), s(1), s(2)];
    }
    g
}

/// Gradients of the trilinear shape functions at a natural point, in
/// physical coordinates of a cube with edge `h`.
pub fn shape_gradients(xi: [f64; 3], h: f64) -> Matrix3x8 {
    let mut g = Matrix3x8::zeros();
    for (a, off) in HEX_NODE_OFFSETS.iter().enumerate() {
        let s = [
            2.0 * off[0] as f64 - 1.0,
            2.0 * off[1] as f64 - 1.0,
            2.0 * off[2] as f64 - 1.0,
        ];
        let f = [
            1.0 + s[0] * xi[0],
            1.0 + s[1] * xi[1],
            1.0 + s[2] * xi[2],
        ];
        g[(0, a)] = 0.125 * s[0] * f[1] * f[2] * 2.0 / h;
        g[(1, a)] = 0.125 * f[0] * s[1] * f[2] * 2.0 / h;
        g[(2, a)] = 0.125 * f[0] * f[1] * s[2] * 2.0 / h;
    }
    g
}

/// Strain rows produced by the scalar gradient `g` acting on displacement
/// component `comp`.
#[inline]
fn strain_rows(g: [f64; 3], comp: usize) -> [f64; 6] {
    match comp {
        0 => [g[0], 0.0, 0.0, 0.0, g[2], g[1]],
        1 => [0.0, g[1], 0.0, g[2], 0.0, g[0]],
        _ => [0.0, 0.0, g[2], g[1], g[0], 0.0],
    }
}

fn compatible_b(grad: &Matrix3x8) -> Matrix6x24 {
    let mut b = Matrix6x24::zeros();
    for a in 0..8 {
        let g = [grad[(0, a)], grad[(1, a)], grad[(2, a)]];
        for c in 0..3 {
            let rows = strain_rows(g, c);
            for r in 0..6 {
                b[(r, 3 * a + c)] = rows[r];
            }
        }
    }
    b
}

/// Strain operator of the bubble modes `1 - xi_m^2`, DOF `3 m + c`.
fn incompatible_b(xi: [f64; 3], h: f64) -> Matrix6x9 {
    let mut b = Matrix6x9::zeros();
    for m in 0..3 {
        let mut g = [0.0; 3];
        g[m] = -2.0 * xi[m] * 2.0 / h;
        for c in 0..3 {
            let rows = strain_rows(g, c);
            for r in 0..6 {
                b[(r, 3 * m + c)] = rows[r];
            }
        }
    }
    b
}

/// Condensed H11 element on a cube of edge `h` for a unit-modulus
/// elasticity matrix `c`. All quantities scale linearly with the modulus.
#[derive(Debug, Clone)]
pub struct CondensedElement {
    pub h: f64,
    pub c: Matrix6,
    /// Condensed elastic stiffness.
    pub k0: Matrix24,
    /// Condensed strain-displacement operator per Gauss point.
    pub b: [Matrix6x24; 8],
    /// Trilinear shape-function gradients per Gauss point.
    pub grad: [Matrix3x8; 8],
    /// Quadrature weight times Jacobian determinant (same for all points).
    pub weight: f64,
    /// Unit-strain load columns `sum_g w B^T C`.
    pub f_cols: Matrix24x6,
    /// Map from nodal DOFs to the condensed incompatible amplitudes,
    /// `a = -recover * u`.
    pub recover: Matrix9x24,
}

impl CondensedElement {
    #[inline]
    pub fn volume(&self) -> f64 {
        self.h.powi(3)
    }

    /// Strain at every Gauss point for element nodal displacements `u`
    /// superposed on a uniform strain `eps`.
    pub fn strains(&self, u: &SVector<f64, 24>, eps: &Vector6) -> [Vector6; 8] {
        let mut out = [Vector6::zeros(); 8];
        for (q, s) in out.iter_mut().enumerate() {
            *s = eps + self.b[q] * u;
        }
        out
    }
}

/// Builds the H11 element with Wilson bubble modes and static condensation.
pub fn build_h11_element(h: f64, c: &Matrix6) -> Result<CondensedElement> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("element size {h}")));
    }
    let gps = gauss_points();
    let weight = (0.5 * h).powi(3);
    let mut bd = [Matrix6x24::zeros(); 8];
    let mut ba = [Matrix6x9::zeros(); 8];
    let mut grad = [Matrix3x8::zeros(); 8];
    let mut ba_mean = Matrix6x9::zeros();
    for (q, &xi) in gps.iter().enumerate() {
        grad[q] = shape_gradients(xi, h);
        bd[q] = compatible_b(&grad[q]);
        ba[q] = incompatible_b(xi, h);
        ba_mean += ba[q] * weight;
    }
    // Taylor correction: the bubble strains integrate to zero so that the
    // element passes the constant-strain patch test.
    ba_mean /= h.powi(3);
    for b in ba.iter_mut() {
        *b -= ba_mean;
    }

    let mut kdd = Matrix24::zeros();
    let mut kad = Matrix9x24::zeros();
    let mut kaa = Matrix9::zeros();
    for q in 0..8 {
        let cbd = c * bd[q];
        kdd += bd[q].transpose() * cbd * weight;
        kad += ba[q].transpose() * cbd * weight;
        kaa += ba[q].transpose() * c * ba[q] * weight;
    }
    let kaa_inv = kaa
        .cholesky()
        .ok_or_else(|| Error::Singular("incompatible-mode block of the H11 element".into()))?
        .inverse();
    let recover = kaa_inv * kad;
    let mut b = [Matrix6x24::zeros(); 8];
    let mut k0 = Matrix24::zeros();
    let mut f_cols = Matrix24x6::zeros();
    for q in 0..8 {
        b[q] = bd[q] - ba[q] * recover;
        k0 += b[q].transpose() * c * b[q] * weight;
        f_cols += b[q].transpose() * c * weight;
    }
    k0 = (k0 + k0.transpose()) * 0.5;
    Ok(CondensedElement {
        h,
        c: *c,
        k0,
        b,
        grad,
        weight,
        f_cols,
        recover,
    })
}

/// Plain trilinear hexahedron with full integration, packaged like the
/// condensed element (no bubble modes).
pub fn build_h8_element(h: f64, c: &Matrix6) -> Result<CondensedElement> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("element size {h}")));
    }
    let gps = gauss_points();
    let weight = (0.5 * h).powi(3);
    let mut b = [Matrix6x24::zeros(); 8];
    let mut grad = [Matrix3x8::zeros(); 8];
    let mut k0 = Matrix24::zeros();
    let mut f_cols = Matrix24x6::zeros();
    for (q, &xi) in gps.iter().enumerate() {
        grad[q] = shape_gradients(xi, h);
        b[q] = compatible_b(&grad[q]);
        k0 += b[q].transpose() * c * b[q] * weight;
        f_cols += b[q].transpose() * c * weight;
    }
    Ok(CondensedElement {
        h,
        c: *c,
        k0,
        b,
        grad,
        weight,
        f_cols,
        recover: Matrix9x24::zeros(),
    })
}

/// Stress per Gauss point of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementStress {
    pub gauss: [Vector6; 8],
}

impl ElementStress {
    pub fn zero() -> Self {
        Self {
            gauss: [Vector6::zeros(); 8],
        }
    }

    pub fn average(&self) -> Vector6 {
        self.gauss.iter().fold(Vector6::zeros(), |a, s| a + s) / 8.0
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut g = self.gauss;
        for s in g.iter_mut() {
            *s *= a;
        }
        Self { gauss: g }
    }
}

/// Gauss-point stresses `C_e (I - B X_e) eps0` of one element, where
/// `xe` holds the element values of the six perturbation fields.
pub fn element_stress(
    elem: &CondensedElement,
    xe: &Matrix24x6,
    eps0: &Vector6,
    c_e: &Matrix6,
) -> ElementStress {
    let u = xe * eps0;
    let mut gauss = [Vector6::zeros(); 8];
    for (q, s) in gauss.iter_mut().enumerate() {
        *s = c_e * (eps0 - elem.b[q] * u);
    }
    ElementStress { gauss }
}

/// Symmetric 3x3 tensor from a Voigt stress vector.
#[inline]
pub fn stress_tensor(s: &Vector6) -> [[f64; 3]; 3] {
    [[s[0], s[5], s[4]], [s[5], s[1], s[3]], [s[4], s[3], s[2]]]
}

/// Nodal block of the geometric stiffness, `sum_g w G^T sigma_g G`.
/// The full 24x24 matrix is this 8x8 block replicated on each
/// displacement component (see [`expand_scalar_block`]).
pub fn element_stress_stiffness(elem: &CondensedElement, stress: &ElementStress) -> Matrix8 {
    let mut s8 = Matrix8::zeros();
    for q in 0..8 {
        let t = stress_tensor(&stress.gauss[q]);
        let g = &elem.grad[q];
        // sigma * G, 3x8
        let mut sg = Matrix3x8::zeros();
        for i in 0..3 {
            for a in 0..8 {
                sg[(i, a)] = t[i][0] * g[(0, a)] + t[i][1] * g[(1, a)] + t[i][2] * g[(2, a)];
            }
        }
        s8 += g.transpose() * sg * elem.weight;
    }
    (s8 + s8.transpose()) * 0.5
}

pub fn expand_scalar_block(s8: &Matrix8) -> Matrix24 {
    let mut k = Matrix24::zeros();
    for a in 0..8 {
        for b in 0..8 {
            for c in 0..3 {
                k[(3 * a + c, 3 * b + c)] = s8[(a, b)];
            }
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> CondensedElement {
        build_h11_element(0.25, &isotropic_elasticity(1.0, 1.0 / 3.0)).unwrap()
    }

    fn node_positions(h: f64) -> [[f64; 3]; 8] {
        let mut p = [[0.0; 3]; 8];
        for a in 0..8 {
            for d in 0..3 {
                p[a][d] = HEX_NODE_OFFSETS[a][d] as f64 * h;
            }
        }
        p
    }

    #[test]
    fn interpolation_endpoints() {
        let m = BaseMaterial::default();
        assert_eq!(interpolate_material(1.0, &m), (1.0, 1.0));
        let (a, b) = interpolate_material(0.0, &m);
        assert!((a - 1e-4).abs() < 1e-18 && b == 0.0);
        let (a, b) = interpolate_material(0.5, &m);
        assert!((a - (0.125 * (1.0 - 1e-4) + 1e-4)).abs() < 1e-15);
        assert!((b - 0.125).abs() < 1e-15);
        assert_eq!(interpolate_material_derivative(0.0, &m).1, 0.0);
    }

    #[test]
    fn rigid_translation_has_zero_energy() {
        let el = unit();
        for c in 0..3 {
            let mut u = SVector::<f64, 24>::zeros();
            for a in 0..8 {
                u[3 * a + c] = 1.0;
            }
            assert!((el.k0 * u).norm() < 1e-12);
            for q in 0..8 {
                assert!((el.b[q] * u).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn condensed_stiffness_has_six_rigid_modes() {
        let el = unit();
        let eig = SymmetricEigen::new(DMatrix::from_column_slice(24, 24, el.k0.as_slice()));
        let max = eig.eigenvalues.max();
        let zero = eig
            .eigenvalues
            .iter()
            .filter(|&&l| l.abs() < 1e-9 * max)
            .count();
        assert_eq!(zero, 6);
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12 * max));
    }

    #[test]
    fn uniform_axial_strain_energy() {
        let h = 0.5;
        let c = isotropic_elasticity(1.0, 1.0 / 3.0);
        let el = build_h11_element(h, &c).unwrap();
        let mut u = SVector::<f64, 24>::zeros();
        for (a, p) in node_positions(h).iter().enumerate() {
            u[3 * a] = p[0];
        }
        let energy = 0.5 * (u.transpose() * el.k0 * u)[(0, 0)];
        assert!((energy - 0.5 * c[(0, 0)] * h.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn linear_fields_pass_the_patch_test() {
        let h = 0.3;
        let el = unit();
        let el = build_h11_element(h, &el.c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a: [[f64; 3]; 3] = [[rng.gen(), rng.gen(), rng.gen()], [rng.gen(), rng.gen(), rng.gen()], [rng.gen(), rng.gen(), rng.gen()]];
            let mut u = SVector::<f64, 24>::zeros();
            for (n, p) in node_positions(h).iter().enumerate() {
                for i in 0..3 {
                    u[3 * n + i] = (0..3).map(|j| a[i][j] * p[j]).sum();
                }
            }
            let exact = Vector6::new(
                a[0][0],
                a[1][1],
                a[2][2],
                a[1][2] + a[2][1],
                a[0][2] + a[2][0],
                a[0][1] + a[1][0],
            );
            for q in 0..8 {
                assert!((el.b[q] * u - exact).norm() < 1e-12);
            }
            // no force from the bubble modes for constant strain
            assert!((el.recover * u).norm() < 1e-12);
        }
    }

    #[test]
    fn condensation_matches_schur_complement_form() {
        let el = unit();
        let mut k = Matrix24::zeros();
        for q in 0..8 {
            k += el.b[q].transpose() * el.c * el.b[q] * el.weight;
        }
        assert!((k - el.k0).norm() < 1e-12 * el.k0.norm());
    }

    #[test]
    fn single_element_pure_bending_is_exact() {
        // nu = 0 removes anticlastic curvature so the exact field is
        // u = kappa x z, w = -kappa x^2 / 2 with z measured from mid-plane.
        let h = 1.0;
        let c = isotropic_elasticity(1.0, 1e-12);
        let h11 = build_h11_element(h, &c).unwrap();
        let h8 = build_h8_element(h, &c).unwrap();
        let kappa = 0.01;
        let mut u = SVector::<f64, 24>::zeros();
        for (a, p) in node_positions(h).iter().enumerate() {
            let (x, z) = (p[0] - 0.5, p[2] - 0.5);
            u[3 * a] = kappa * x * z;
            u[3 * a + 2] = -0.5 * kappa * x * x;
        }
        let exact = 0.5 * kappa * kappa * h.powi(4) / 12.0 * h;
        let e11 = 0.5 * (u.transpose() * h11.k0 * u)[(0, 0)];
        let e8 = 0.5 * (u.transpose() * h8.k0 * u)[(0, 0)];
        assert!((e11 - exact).abs() < 1e-9 * exact, "{e11} vs {exact}");
        // Parasitic shear of the trilinear element adds exactly half the
        // bending energy at the Gauss points.
        assert!((e8 / exact - 1.5).abs() < 1e-9, "{e8} vs {exact}");
    }

    fn cantilever_tip_deflection(el: &CondensedElement, len: usize) -> f64 {
        // beam of `len` unit cubes along x, clamped at x = 0, tip load -z
        let nn = 4 * (len + 1);
        let node = |i: usize, j: usize, k: usize| 4 * i + 2 * k + j;
        let mut k = DMatrix::<f64>::zeros(3 * nn, 3 * nn);
        for e in 0..len {
            let mut dofs = [0usize; 24];
            for (a, off) in HEX_NODE_OFFSETS.iter().enumerate() {
                let m = node(e + off[0], off[1], off[2]);
                for c in 0..3 {
                    dofs[3 * a + c] = 3 * m + c;
                }
            }
            for r in 0..24 {
                for s in 0..24 {
                    k[(dofs[r], dofs[s])] += el.k0[(r, s)];
                }
            }
        }
        let mut f = DVector::<f64>::zeros(3 * nn);
        for j in 0..2 {
            for kk in 0..2 {
                f[3 * node(len, j, kk) + 2] = -0.25;
            }
        }
        let free: Vec<usize> = (12..3 * nn).collect();
        let kf = DMatrix::from_fn(free.len(), free.len(), |r, s| k[(free[r], free[s])]);
        let ff = DVector::from_fn(free.len(), |r, _| f[free[r]]);
        let u = kf.cholesky().unwrap().solve(&ff);
        let mut tip = 0.0;
        for j in 0..2 {
            for kk in 0..2 {
                tip += u[3 * node(len, j, kk) + 2 - 12];
            }
        }
        -tip / 4.0
    }

    #[test]
    fn cantilever_bending_beats_trilinear_element() {
        let c = isotropic_elasticity(1.0, 1e-12);
        let len = 8;
        let beam = (len as f64).powi(3) / (3.0 * (1.0 / 12.0)) + len as f64 / (5.0 / 6.0 * 0.5);
        let d11 = cantilever_tip_deflection(&build_h11_element(1.0, &c).unwrap(), len);
        let d8 = cantilever_tip_deflection(&build_h8_element(1.0, &c).unwrap(), len);
        let err11 = (d11 / beam - 1.0).abs();
        let err8 = (d8 / beam - 1.0).abs();
        assert!(err11 < 0.05, "H11 deflection {d11} vs beam {beam}");
        assert!(err8 > 4.0 * err11, "H8 {d8}, H11 {d11}, beam {beam}");
    }

    #[test]
    fn voigt_energy_consistency() {
        let el = unit();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let u = SVector::<f64, 24>::from_fn(|_, _| rng.gen::<f64>() - 0.5);
            let via_k = (u.transpose() * el.k0 * u)[(0, 0)];
            let strains = el.strains(&u, &Vector6::zeros());
            let via_stress: f64 = strains
                .iter()
                .map(|s| (el.c * s).dot(s) * el.weight)
                .sum();
            assert!((via_k - via_stress).abs() < 1e-12 * via_k.abs().max(1.0));
        }
    }

    #[test]
    fn homogeneous_stress_recovery() {
        let el = unit();
        let eps = Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let s = element_stress(&el, &Matrix24x6::zeros(), &eps, &el.c);
        for g in s.gauss {
            assert!((g - el.c * eps).norm() < 1e-15);
        }
        let z = element_stress(&el, &Matrix24x6::zeros(), &Vector6::zeros(), &el.c);
        assert_eq!(z, ElementStress::zero());
    }

    #[test]
    fn stress_stiffness_is_linear_and_symmetric() {
        let el = unit();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut st = ElementStress::zero();
        for g in st.gauss.iter_mut() {
            *g = Vector6::from_fn(|_, _| rng.gen::<f64>() - 0.5);
        }
        let k1 = element_stress_stiffness(&el, &st);
        let k2 = element_stress_stiffness(&el, &st.scaled(2.0));
        assert!((k2 - 2.0 * k1).norm() < 1e-14);
        assert!((k1 - k1.transpose()).norm() < 1e-15);
        assert_eq!(element_stress_stiffness(&el, &ElementStress::zero()), Matrix8::zeros());
    }

    #[test]
    fn compressive_stress_softens_transverse_patterns() {
        let el = unit();
        let mut st = ElementStress::zero();
        for g in st.gauss.iter_mut() {
            g[0] = -1.0;
        }
        let k = expand_scalar_block(&element_stress_stiffness(&el, &st));
        let eig = SymmetricEigen::new(DMatrix::from_column_slice(24, 24, k.as_slice()));
        assert!(eig.eigenvalues.iter().all(|&l| l <= 1e-14));
        // transverse displacement varying along the load axis
        let mut u = SVector::<f64, 24>::zeros();
        for (a, off) in HEX_NODE_OFFSETS.iter().enumerate() {
            u[3 * a + 2] = off[0] as f64;
        }
        assert!((u.transpose() * k * u)[(0, 0)] < 0.0);
    }

    #[test]
    fn material_validation() {
        assert!(BaseMaterial::default().validate().is_ok());
        assert!(BaseMaterial::new(1.0, 0.5).validate().is_err());
        let mut m = BaseMaterial::default();
        m.e0 = 0.0;
        assert!(m.validate().is_err());
    }
}
