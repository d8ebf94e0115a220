//! Periodic homogenization: the six unit-strain cell problems, the
//! effective elasticity matrix and the pre-stress state of a macroscopic
//! load.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::element::{
    build_h11_element, element_stress, interpolate_material, BaseMaterial, CondensedElement,
    ElementStress, Matrix24x6, Matrix6, Vector6,
};
use crate::error::{Error, Result};
use crate::grid::{Connectivity, VoxelGrid};
use crate::solver::{pcg, to_row_major, ElementMatrices, EigenSettings, Hierarchy, Multigrid};

/// Node-to-master-DOF map of the periodic grid. Slave faces are folded
/// onto their masters by construction, so this is the connectivity table.
pub type PeriodicDofMap = Connectivity;

/// Tolerances shared by the linear and eigenvalue solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolveSettings {
    pub pcg_tol: f64,
    pub pcg_max_iter: usize,
    pub eigen: EigenSettings,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            pcg_tol: 1e-8,
            pcg_max_iter: 2000,
            eigen: EigenSettings::default(),
        }
    }
}

/// Macroscopic stress direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadCase {
    Hydrostatic,
    /// Compression along x.
    Uniaxial,
    Custom([f64; 6]),
}

impl LoadCase {
    pub fn stress(&self) -> Vector6 {
        match self {
            LoadCase::Hydrostatic => Vector6::new(-1.0, -1.0, -1.0, 0.0, 0.0, 0.0),
            LoadCase::Uniaxial => Vector6::new(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            LoadCase::Custom(v) => Vector6::from_column_slice(v),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stress();
        if !s.iter().all(|v| v.is_finite()) || s.norm() == 0.0 {
            return Err(Error::InvalidInput(
                "load vector must be finite and nonzero".into(),
            ));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            LoadCase::Hydrostatic => "hydrostatic",
            LoadCase::Uniaxial => "uniaxial",
            LoadCase::Custom(_) => "custom",
        }
    }
}

/// Effective elasticity and the scalar measures derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveProperties {
    pub c_bar: Matrix6,
    pub s_bar: Matrix6,
    /// `1 / S11`.
    pub e_bar: f64,
    /// `(C11 + 2 C12) / 3`.
    pub kappa_bar: f64,
    /// Zener ratio `2 C66 / (C11 - C12)`.
    pub zener: f64,
}

impl EffectiveProperties {
    pub fn from_c(c: &Matrix6) -> Result<Self> {
        let c_bar = (c + c.transpose()) * 0.5;
        let s_bar = c_bar
            .try_inverse()
            .ok_or_else(|| Error::Singular("effective elasticity matrix".into()))?;
        Ok(Self {
            c_bar,
            s_bar,
            e_bar: 1.0 / s_bar[(0, 0)],
            kappa_bar: (c_bar[(0, 0)] + 2.0 * c_bar[(0, 1)]) / 3.0,
            zener: 2.0 * c_bar[(5, 5)] / (c_bar[(0, 0)] - c_bar[(0, 1)]),
        })
    }

    /// Macroscopic strain `S sigma0` produced by a macroscopic stress.
    pub fn macro_strain(&self, sigma0: &Vector6) -> Vector6 {
        self.s_bar * sigma0
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries.
    pub fn from_triplets(nrows: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len() / 4);
        let mut values: Vec<f64> = Vec::with_capacity(t.len() / 4);
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Sparse assembled `K0` under the periodic map; for inspection and tests.
pub fn assemble_k0(elem: &CondensedElement, e_k0: &[f64], map: &PeriodicDofMap) -> CsrMatrix {
    let nd = map.grid.num_dofs();
    let mut t = Vec::with_capacity(576 * map.nodes.len());
    for (e, nodes) in map.nodes.iter().enumerate() {
        for a in 0..8 {
            for b in 0..8 {
                for i in 0..3 {
                    for j in 0..3 {
                        let v = e_k0[e] * elem.k0[(3 * a + i, 3 * b + j)];
                        t.push((3 * nodes[a] as usize + i, 3 * nodes[b] as usize + j, v));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(nd, t)
}

/// Load vectors `f_alpha = sum_e E_e int B^T C eps_alpha`.
pub fn unit_strain_loads(
    elem: &CondensedElement,
    e_k0: &[f64],
    map: &PeriodicDofMap,
) -> [Vec<f64>; 6] {
    let nd = map.grid.num_dofs();
    let mut f: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; nd]);
    for (e, nodes) in map.nodes.iter().enumerate() {
        for a in 0..8 {
            let base = 3 * nodes[a] as usize;
            for i in 0..3 {
                for (alpha, fa) in f.iter_mut().enumerate() {
                    fa[base + i] += e_k0[e] * elem.f_cols[(3 * a + i, alpha)];
                }
            }
        }
    }
    f
}

/// Element values of six global periodic fields.
pub fn gather_columns(map: &PeriodicDofMap, e: usize, fields: &[Vec<f64>; 6]) -> Matrix24x6 {
    let mut x = Matrix24x6::zeros();
    for (a, &n) in map.nodes[e].iter().enumerate() {
        let base = 3 * n as usize;
        for i in 0..3 {
            for (alpha, fa) in fields.iter().enumerate() {
                x[(3 * a + i, alpha)] = fa[base + i];
            }
        }
    }
    x
}

/// Effective matrix by the energy form
/// `sum_e E_e int (I - B X_e)^T C (I - B X_e)`.
pub fn effective_matrix(
    elem: &CondensedElement,
    e_k0: &[f64],
    map: &PeriodicDofMap,
    chi: &[Vec<f64>; 6],
) -> Result<EffectiveProperties> {
    let mut c = Matrix6::zeros();
    for e in 0..map.nodes.len() {
        let x = gather_columns(map, e, chi);
        c += element_energy_matrix(elem, &x) * e_k0[e];
    }
    EffectiveProperties::from_c(&c)
}

/// Unit-modulus element matrix `int (I - B X)^T C (I - B X)`.
pub fn element_energy_matrix(elem: &CondensedElement, x: &Matrix24x6) -> Matrix6 {
    let fx = elem.f_cols.transpose() * x;
    elem.c * elem.volume() - fx - fx.transpose() + x.transpose() * elem.k0 * x
}

/// Effective matrix by the mutual-energy form `sum_e E_e V C - chi^T f`,
/// equal to [`effective_matrix`] when the cell problems are solved exactly.
pub fn effective_matrix_mutual(
    elem: &CondensedElement,
    e_k0: &[f64],
    chi: &[Vec<f64>; 6],
    loads: &[Vec<f64>; 6],
) -> Matrix6 {
    let total: f64 = e_k0.iter().sum();
    let mut c = elem.c * (elem.volume() * total);
    for a in 0..6 {
        for b in 0..6 {
            c[(a, b)] -= chi[a].iter().zip(&loads[b]).map(|(x, f)| x * f).sum::<f64>();
        }
    }
    c
}

/// Which SIMP modulus scales a stress field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressModulus {
    /// The stiffness modulus; its volume average is the macroscopic stress.
    Stiffness,
    /// The stress-stiffness modulus (no void floor) used in `K_sigma`.
    Buckling,
}

/// Homogenized state of one physical density field.
pub struct Homogenization {
    pub grid: VoxelGrid,
    pub material: BaseMaterial,
    pub element: CondensedElement,
    pub rho_bar: Vec<f64>,
    pub e_k0: Vec<f64>,
    pub e_ks: Vec<f64>,
    pub hierarchy: Hierarchy,
    pub loads: [Vec<f64>; 6],
    pub chi: [Vec<f64>; 6],
    pub props: EffectiveProperties,
}

impl Homogenization {
    pub fn new(
        grid: VoxelGrid,
        material: BaseMaterial,
        rho_bar: &[f64],
        settings: &SolveSettings,
    ) -> Result<Self> {
        Self::with_start(grid, material, rho_bar, settings, None)
    }

    /// As [`Homogenization::new`], starting the cell solves from `start`.
    pub fn with_start(
        grid: VoxelGrid,
        material: BaseMaterial,
        rho_bar: &[f64],
        settings: &SolveSettings,
        start: Option<&[Vec<f64>; 6]>,
    ) -> Result<Self> {
        material.validate()?;
        if rho_bar.len() != grid.num_elements() {
            return Err(Error::InvalidInput(format!(
                "density field has {} values, grid needs {}",
                rho_bar.len(),
                grid.num_elements()
            )));
        }
        if let Some(bad) = rho_bar.iter().position(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidInput(format!(
                "physical density {} at element {bad} outside [0, 1]",
                rho_bar[bad]
            )));
        }
        let element = build_h11_element(grid.h(), &material.unit_elasticity())?;
        let (e_k0, e_ks): (Vec<f64>, Vec<f64>) = rho_bar
            .iter()
            .map(|&r| interpolate_material(r, &material))
            .unzip();
        let conn = grid.connectivity();
        let loads = unit_strain_loads(&element, &e_k0, &conn);
        let mats = ElementMatrices::Scaled {
            template: Box::new(to_row_major(&element.k0)),
            scale: e_k0.clone(),
        };
        let hierarchy = Hierarchy::new(conn, mats);
        let chi = solve_unit_cells(&hierarchy, &loads, settings, start)?;
        let props = effective_matrix(&element, &e_k0, hierarchy.fine_connectivity(), &chi)?;
        Ok(Self {
            grid,
            material,
            element,
            rho_bar: rho_bar.to_vec(),
            e_k0,
            e_ks,
            hierarchy,
            loads,
            chi,
            props,
        })
    }

    pub fn connectivity(&self) -> &Connectivity {
        self.hierarchy.fine_connectivity()
    }

    pub fn element_chi(&self, e: usize) -> Matrix24x6 {
        gather_columns(self.connectivity(), e, &self.chi)
    }

    pub fn volume_fraction(&self) -> f64 {
        crate::design::volume_fraction(&self.rho_bar)
    }

    /// Gauss-point stresses of every element under macroscopic strain `eps0`.
    pub fn stresses(&self, eps0: &Vector6, modulus: StressModulus) -> Vec<ElementStress> {
        let unit = self.element.c;
        (0..self.grid.num_elements())
            .map(|e| {
                let s = match modulus {
                    StressModulus::Stiffness => self.e_k0[e],
                    StressModulus::Buckling => self.e_ks[e],
                };
                element_stress(&self.element, &self.element_chi(e), eps0, &(unit * s))
            })
            .collect()
    }

    /// Volume average of the stiffness-modulus stress.
    pub fn average_stress(&self, eps0: &Vector6) -> Vector6 {
        let st = self.stresses(eps0, StressModulus::Stiffness);
        let ne = st.len() as f64;
        st.iter().fold(Vector6::zeros(), |a, s| a + s.average()) / ne
    }

    /// Element displacement of field `alpha`.
    pub fn element_field(&self, e: usize, alpha: usize) -> SVector<f64, 24> {
        self.element_chi(e).column(alpha).into_owned()
    }
}

/// Solves `K0 chi_alpha = f_alpha` for the six unit strains with the
/// translations deflated.
pub fn solve_unit_cells(
    hierarchy: &Hierarchy,
    loads: &[Vec<f64>; 6],
    settings: &SolveSettings,
    start: Option<&[Vec<f64>; 6]>,
) -> Result<[Vec<f64>; 6]> {
    let op = hierarchy.operator::<f64>([1.0; 8]);
    let mg = Multigrid::new(hierarchy, [1.0; 8], true);
    let nd = loads[0].len();
    let mut out: [Vec<f64>; 6] = std::array::from_fn(|a| match start {
        Some(s) if s[a].len() == nd => s[a].clone(),
        _ => vec![0.0; nd],
    });
    for (alpha, x) in out.iter_mut().enumerate() {
        let info = pcg(
            &op,
            &mg,
            &loads[alpha],
            x,
            settings.pcg_tol,
            settings.pcg_max_iter,
            true,
        )?;
        log::debug!(
            "unit strain {alpha}: {} iterations, residual {:.2e}",
            info.iterations,
            info.residual
        );
    }
    Ok(out)
}
