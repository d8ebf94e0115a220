//! Matrix-free element-by-element operators on the periodic grid.
//!
//! Global vectors are node-major (`3 * node + component`) over master
//! nodes. A local node reached by wrapping across the cell boundary picks
//! up the Bloch phase of its wrap code on gather and the conjugate phase
//! on scatter, so every operator is Hermitian for any wave vector.

use nalgebra::DMatrix;

use super::scalar::Scalar;
use crate::grid::Connectivity;

pub trait LinearOperator<T: Scalar> {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[T], y: &mut [T]);
}

/// Element matrices of one operator.
#[derive(Debug, Clone)]
pub enum ElementMatrices {
    /// A shared 24x24 template (row-major) scaled per element.
    Scaled { template: Box<[f64; 576]>, scale: Vec<f64> },
    /// One dense 24x24 matrix per element.
    Dense(Vec<[f64; 576]>),
    /// One 8x8 nodal block per element acting identically on the three
    /// displacement components.
    Nodal(Vec<[f64; 64]>),
}

impl ElementMatrices {
    pub fn num_elements(&self) -> usize {
        match self {
            ElementMatrices::Scaled { scale, .. } => scale.len(),
            ElementMatrices::Dense(m) => m.len(),
            ElementMatrices::Nodal(m) => m.len(),
        }
    }

    /// Dense 24x24 matrix of element `e` (row-major).
    pub fn element(&self, e: usize) -> [f64; 576] {
        match self {
            ElementMatrices::Scaled { template, scale } => {
                let mut m = **template;
                for v in m.iter_mut() {
                    *v *= scale[e];
                }
                m
            }
            ElementMatrices::Dense(ms) => ms[e],
            ElementMatrices::Nodal(ms) => {
                let mut m = [0.0; 576];
                for a in 0..8 {
                    for b in 0..8 {
                        for c in 0..3 {
                            m[(3 * a + c) * 24 + 3 * b + c] = ms[e][a * 8 + b];
                        }
                    }
                }
                m
            }
        }
    }

    /// Diagonal of the assembled operator (phase independent).
    pub fn diagonal(&self, conn: &Connectivity) -> Vec<f64> {
        let mut d = vec![0.0; 3 * conn.grid.num_nodes()];
        for e in 0..self.num_elements() {
            let nodes = &conn.nodes[e];
            for a in 0..8 {
                for c in 0..3 {
                    let r = 3 * a + c;
                    let v = match self {
                        ElementMatrices::Scaled { template, scale } => template[r * 24 + r] * scale[e],
                        ElementMatrices::Dense(ms) => ms[e][r * 24 + r],
                        ElementMatrices::Nodal(ms) => ms[e][a * 8 + a],
                    };
                    d[3 * nodes[a] as usize + c] += v;
                }
            }
        }
        d
    }
}

/// Phase factors indexed by wrap code.
pub fn phase_table<T: Scalar>(k: [f64; 3]) -> Option<[T; 8]> {
    let mut t = [T::one(); 8];
    for (code, p) in t.iter_mut().enumerate() {
        let mut theta = 0.0;
        for ax in 0..3 {
            if code & (1 << ax) != 0 {
                theta += k[ax];
            }
        }
        *p = T::from_phase(theta)?;
    }
    Some(t)
}

/// An element operator together with a Bloch phase table.
pub struct BlochOperator<'a, T: Scalar> {
    pub conn: &'a Connectivity,
    pub mats: &'a ElementMatrices,
    pub phases: [T; 8],
}

impl<'a, T: Scalar> BlochOperator<'a, T> {
    pub fn new(conn: &'a Connectivity, mats: &'a ElementMatrices, phases: [T; 8]) -> Self {
        debug_assert_eq!(conn.nodes.len(), mats.num_elements());
        Self { conn, mats, phases }
    }

    #[inline(always)]
    fn gather(&self, e: usize, x: &[T], xl: &mut [T; 24]) {
        let nodes = &self.conn.nodes[e];
        let wraps = &self.conn.wraps[e];
        for a in 0..8 {
            let base = 3 * nodes[a] as usize;
            if wraps[a] == 0 {
                xl[3 * a] = x[base];
                xl[3 * a + 1] = x[base + 1];
                xl[3 * a + 2] = x[base + 2];
            } else {
                let p = self.phases[wraps[a] as usize];
                xl[3 * a] = x[base] * p;
                xl[3 * a + 1] = x[base + 1] * p;
                xl[3 * a + 2] = x[base + 2] * p;
            }
        }
    }

    #[inline(always)]
    fn scatter(&self, e: usize, yl: &[T; 24], y: &mut [T]) {
        let nodes = &self.conn.nodes[e];
        let wraps = &self.conn.wraps[e];
        for a in 0..8 {
            let base = 3 * nodes[a] as usize;
            if wraps[a] == 0 {
                y[base] += yl[3 * a];
                y[base + 1] += yl[3 * a + 1];
                y[base + 2] += yl[3 * a + 2];
            } else {
                let p = self.phases[wraps[a] as usize].conjugate();
                y[base] += yl[3 * a] * p;
                y[base + 1] += yl[3 * a + 1] * p;
                y[base + 2] += yl[3 * a + 2] * p;
            }
        }
    }

    /// Element-local vector (with phases) of a global vector.
    pub fn local(&self, e: usize, x: &[T]) -> [T; 24] {
        let mut xl = [T::zero(); 24];
        self.gather(e, x, &mut xl);
        xl
    }

    /// Dense assembled matrix; only for small grids and tests.
    pub fn to_dense(&self) -> DMatrix<T> {
        let nd = 3 * self.conn.grid.num_nodes();
        let mut a = DMatrix::<T>::zeros(nd, nd);
        for e in 0..self.mats.num_elements() {
            let k = self.mats.element(e);
            let nodes = &self.conn.nodes[e];
            let wraps = &self.conn.wraps[e];
            for ra in 0..8 {
                let pa = self.phases[wraps[ra] as usize].conjugate();
                for sb in 0..8 {
                    let pb = self.phases[wraps[sb] as usize];
                    let p = pa * pb;
                    for c in 0..3 {
                        for d in 0..3 {
                            let v = k[(3 * ra + c) * 24 + 3 * sb + d];
                            if v != 0.0 {
                                a[(3 * nodes[ra] as usize + c, 3 * nodes[sb] as usize + d)] +=
                                    p.scale_re(v);
                            }
                        }
                    }
                }
            }
        }
        a
    }
}

#[inline(always)]
fn matvec24<T: Scalar>(k: &[f64; 576], xl: &[T; 24], s: f64) -> [T; 24] {
    let mut yl = [T::zero(); 24];
    for r in 0..24 {
        let row = &k[r * 24..r * 24 + 24];
        let mut acc = T::zero();
        for c in 0..24 {
            acc += xl[c].scale_re(row[c]);
        }
        yl[r] = acc.scale_re(s);
    }
    yl
}

impl<'a, T: Scalar> LinearOperator<T> for BlochOperator<'a, T> {
    fn dim(&self) -> usize {
        3 * self.conn.grid.num_nodes()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        let mut xl = [T::zero(); 24];
        match self.mats {
            ElementMatrices::Scaled { template, scale } => {
                for e in 0..scale.len() {
                    self.gather(e, x, &mut xl);
                    let yl = matvec24(template, &xl, scale[e]);
                    self.scatter(e, &yl, y);
                }
            }
            ElementMatrices::Dense(ms) => {
                for (e, m) in ms.iter().enumerate() {
                    self.gather(e, x, &mut xl);
                    let yl = matvec24(m, &xl, 1.0);
                    self.scatter(e, &yl, y);
                }
            }
            ElementMatrices::Nodal(ms) => {
                for (e, m) in ms.iter().enumerate() {
                    self.gather(e, x, &mut xl);
                    let mut yl = [T::zero(); 24];
                    for a in 0..8 {
                        let (mut y0, mut y1, mut y2) = (T::zero(), T::zero(), T::zero());
                        for b in 0..8 {
                            let v = m[a * 8 + b];
                            y0 += xl[3 * b].scale_re(v);
                            y1 += xl[3 * b + 1].scale_re(v);
                            y2 += xl[3 * b + 2].scale_re(v);
                        }
                        yl[3 * a] = y0;
                        yl[3 * a + 1] = y1;
                        yl[3 * a + 2] = y2;
                    }
                    self.scatter(e, &yl, y);
                }
            }
        }
    }
}

/// Removes the rigid translations (per-component means) from a node-major
/// vector. Needed only at the zone center where they span the null space.
pub fn project_translations<T: Scalar>(x: &mut [T]) {
    let nn = x.len() / 3;
    for c in 0..3 {
        let mut m = T::zero();
        for i in 0..nn {
            m += x[3 * i + c];
        }
        let m = m.scale_re(1.0 / nn as f64);
        for i in 0..nn {
            x[3 * i + c] -= m;
        }
    }
}

/// Row-major copy of a 24x24 nalgebra matrix.
pub fn to_row_major(m: &crate::element::Matrix24) -> [f64; 576] {
    let mut out = [0.0; 576];
    for r in 0..24 {
        for c in 0..24 {
            out[r * 24 + c] = m[(r, c)];
        }
    }
    out
}
