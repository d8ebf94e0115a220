//! Geometric multigrid for the elastic stiffness on nested periodic grids.
//!
//! Coarse operators are Galerkin products formed element by element: a
//! coarse element owns the eight fine elements it contains, and its matrix
//! is the sum of the trilinearly interpolated fine matrices. Interpolation
//! commutes with the Bloch phases, so the hierarchy is built once per
//! design and only the phase table changes between wave vectors.

use nalgebra::{Cholesky, Dyn};

use super::operator::{BlochOperator, ElementMatrices, LinearOperator};
use super::scalar::Scalar;
use super::Preconditioner;
use crate::grid::{Connectivity, VoxelGrid, HEX_NODE_OFFSETS};

const MAX_DIRECT_DOFS: usize = 3000;
const CHEBYSHEV_DEGREE: usize = 3;
const POWER_ITERATIONS: usize = 15;

struct Level {
    conn: Connectivity,
    mats: ElementMatrices,
    inv_diag: Vec<f64>,
}

/// Fine-to-coarse transfer between two grids with `n_fine = 2 n_coarse`.
struct Transfer {
    /// Per fine node: up to eight (coarse node, wrap code, weight).
    stencil: Vec<Vec<(u32, u8, f64)>>,
    n_coarse_nodes: usize,
}

impl Transfer {
    fn new(fine: &VoxelGrid, coarse: &VoxelGrid) -> Self {
        let nc = coarse.n();
        let axis = |i: usize| -> Vec<(usize, bool, f64)> {
            if i.is_multiple_of(2) {
                vec![(i / 2, false, 1.0)]
            } else {
                let hi = i.div_ceil(2);
                vec![((i - 1) / 2, false, 0.5), (hi % nc, hi == nc, 0.5)]
            }
        };
        let stencil = (0..fine.num_nodes())
            .map(|f| {
                let [i, j, k] = fine.coords(f);
                let mut out = Vec::with_capacity(8);
                for &(ci, wi, w0) in &axis(i) {
                    for &(cj, wj, w1) in &axis(j) {
                        for &(ck, wk, w2) in &axis(k) {
                            let code = wi as u8 | ((wj as u8) << 1) | ((wk as u8) << 2);
                            out.push((coarse.index(ci, cj, ck) as u32, code, w0 * w1 * w2));
                        }
                    }
                }
                out
            })
            .collect();
        Self {
            stencil,
            n_coarse_nodes: coarse.num_nodes(),
        }
    }

    fn prolong<T: Scalar>(&self, phases: &[T; 8], xc: &[T], xf: &mut [T]) {
        for (f, st) in self.stencil.iter().enumerate() {
            let mut v = [T::zero(); 3];
            for &(c, code, w) in st {
                let p = phases[code as usize].scale_re(w);
                let base = 3 * c as usize;
                for d in 0..3 {
                    v[d] += p * xc[base + d];
                }
            }
            xf[3 * f..3 * f + 3].copy_from_slice(&v);
        }
    }

    fn restrict<T: Scalar>(&self, phases: &[T; 8], rf: &[T], rc: &mut [T]) {
        rc.iter_mut().for_each(|v| *v = T::zero());
        for (f, st) in self.stencil.iter().enumerate() {
            for &(c, code, w) in st {
                let p = phases[code as usize].conjugate().scale_re(w);
                let base = 3 * c as usize;
                for d in 0..3 {
                    rc[base + d] += p * rf[3 * f + d];
                }
            }
        }
        debug_assert_eq!(rc.len(), 3 * self.n_coarse_nodes);
    }
}

/// Interpolation from the nodes of a coarse element to the nodes of its
/// fine sub-element `s` (bits give the sub-position along x, y, z).
fn sub_interpolation(s: usize) -> [[f64; 8]; 8] {
    let o = [s & 1, (s >> 1) & 1, (s >> 2) & 1];
    let mut q = [[0.0; 8]; 8];
    for a in 0..8 {
        for b in 0..8 {
            let mut w = 1.0;
            for ax in 0..3 {
                let p = (o[ax] + HEX_NODE_OFFSETS[a][ax]) as f64;
                let c = 2.0 * HEX_NODE_OFFSETS[b][ax] as f64;
                w *= 1.0 - (p - c).abs() / 2.0;
            }
            q[a][b] = w;
        }
    }
    q
}

/// `Q^T K Q` with `Q = q (x) I3`, all row-major 24x24.
fn galerkin_product(k: &[f64; 576], q: &[[f64; 8]; 8], out: &mut [f64; 576], scale: f64) {
    // t = K Q
    let mut t = [0.0; 576];
    for r in 0..24 {
        for b in 0..8 {
            for c in 0..3 {
                let mut acc = 0.0;
                for a in 0..8 {
                    acc += k[r * 24 + 3 * a + c] * q[a][b];
                }
                t[r * 24 + 3 * b + c] = acc;
            }
        }
    }
    for b in 0..8 {
        for c in 0..3 {
            for col in 0..24 {
                let mut acc = 0.0;
                for a in 0..8 {
                    acc += q[a][b] * t[(3 * a + c) * 24 + col];
                }
                out[(3 * b + c) * 24 + col] += scale * acc;
            }
        }
    }
}

fn coarsen(fine: &VoxelGrid, mats: &ElementMatrices, coarse: &VoxelGrid) -> ElementMatrices {
    let qs: Vec<[[f64; 8]; 8]> = (0..8).map(sub_interpolation).collect();
    let sub_elements = |ce: usize| -> [(usize, usize); 8] {
        let [i, j, k] = coarse.coords(ce);
        let mut out = [(0, 0); 8];
        for (s, o) in out.iter_mut().enumerate() {
            let e = fine.index(2 * i + (s & 1), 2 * j + ((s >> 1) & 1), 2 * k + ((s >> 2) & 1));
            *o = (s, e);
        }
        out
    };
    let nce = coarse.num_elements();
    let mut out = vec![[0.0; 576]; nce];
    match mats {
        ElementMatrices::Scaled { template, scale } => {
            let mut proj = Vec::with_capacity(8);
            for q in &qs {
                let mut m = [0.0; 576];
                galerkin_product(template, q, &mut m, 1.0);
                proj.push(m);
            }
            for (ce, o) in out.iter_mut().enumerate() {
                for (s, e) in sub_elements(ce) {
                    let w = scale[e];
                    for (dst, src) in o.iter_mut().zip(proj[s].iter()) {
                        *dst += w * src;
                    }
                }
            }
        }
        _ => {
            for (ce, o) in out.iter_mut().enumerate() {
                for (s, e) in sub_elements(ce) {
                    galerkin_product(&mats.element(e), &qs[s], o, 1.0);
                }
            }
        }
    }
    ElementMatrices::Dense(out)
}

/// Phase-independent part of the multigrid: grids, Galerkin element
/// matrices and diagonals on every level.
pub struct Hierarchy {
    levels: Vec<Level>,
    transfers: Vec<Transfer>,
}

impl Hierarchy {
    /// Coarsens while the edge count is even and larger than 4.
    pub fn new(conn: Connectivity, mats: ElementMatrices) -> Self {
        let mut levels = Vec::new();
        let mut transfers = Vec::new();
        let inv = |m: &ElementMatrices, c: &Connectivity| -> Vec<f64> {
            m.diagonal(c).into_iter().map(|d| 1.0 / d).collect()
        };
        let inv_diag = inv(&mats, &conn);
        levels.push(Level {
            conn,
            mats,
            inv_diag,
        });
        loop {
            let fine = levels.last().unwrap();
            let n = fine.conn.grid.n();
            if n <= 4 || n % 2 != 0 {
                break;
            }
            let cg = VoxelGrid::new(n / 2).expect("coarse grid has n >= 2");
            let cmats = coarsen(&fine.conn.grid, &fine.mats, &cg);
            let cconn = cg.connectivity();
            transfers.push(Transfer::new(&fine.conn.grid, &cg));
            let inv_diag = inv(&cmats, &cconn);
            levels.push(Level {
                conn: cconn,
                mats: cmats,
                inv_diag,
            });
        }
        Self { levels, transfers }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn fine_connectivity(&self) -> &Connectivity {
        &self.levels[0].conn
    }

    pub fn fine_matrices(&self) -> &ElementMatrices {
        &self.levels[0].mats
    }

    /// Fine-level operator for a phase table.
    pub fn operator<T: Scalar>(&self, phases: [T; 8]) -> BlochOperator<'_, T> {
        BlochOperator::new(&self.levels[0].conn, &self.levels[0].mats, phases)
    }
}

enum Coarse<T: Scalar> {
    Direct(Cholesky<T, Dyn>),
    Smooth,
}

/// V-cycle preconditioner for one wave vector.
pub struct Multigrid<'h, T: Scalar> {
    h: &'h Hierarchy,
    phases: [T; 8],
    bounds: Vec<(f64, f64)>,
    coarse: Coarse<T>,
}

impl<'h, T: Scalar> Multigrid<'h, T> {
    /// `zone_center` adds a rank-3 shift on the coarsest level so that the
    /// translation null space does not make the direct solve singular.
    pub fn new(h: &'h Hierarchy, phases: [T; 8], zone_center: bool) -> Self {
        let bounds = h
            .levels
            .iter()
            .map(|lv| {
                let op = BlochOperator::new(&lv.conn, &lv.mats, phases);
                let est = power_estimate(&op, &lv.inv_diag);
                let upper = 1.1 * est;
                (upper / 10.0, upper)
            })
            .collect();
        let last = h.levels.last().unwrap();
        let nd = 3 * last.conn.grid.num_nodes();
        let coarse = if nd <= MAX_DIRECT_DOFS {
            let op = BlochOperator::new(&last.conn, &last.mats, phases);
            let mut a = op.to_dense();
            if zone_center {
                let nn = nd / 3;
                let shift = (0..nd).map(|i| a[(i, i)].real()).sum::<f64>() / nd as f64;
                let s = T::from_re(shift / nn as f64);
                for i in 0..nn {
                    for j in 0..nn {
                        for c in 0..3 {
                            a[(3 * i + c, 3 * j + c)] += s;
                        }
                    }
                }
            }
            match Cholesky::new(a) {
                Some(ch) => Coarse::Direct(ch),
                None => {
                    log::warn!("coarse multigrid matrix not positive definite; smoothing instead");
                    Coarse::Smooth
                }
            }
        } else {
            Coarse::Smooth
        };
        Self {
            h,
            phases,
            bounds,
            coarse,
        }
    }

    fn smooth(&self, l: usize, b: &[T], x: &mut [T], zero_guess: bool, degree: usize) {
        let lv = &self.h.levels[l];
        let op = BlochOperator::new(&lv.conn, &lv.mats, self.phases);
        let (lo, hi) = self.bounds[l];
        let theta = 0.5 * (hi + lo);
        let delta = 0.5 * (hi - lo);
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let n = b.len();
        let mut r = vec![T::zero(); n];
        if zero_guess {
            r.copy_from_slice(b);
        } else {
            op.apply(x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = *bi - *ri;
            }
        }
        let mut d: Vec<T> = r
            .iter()
            .zip(&lv.inv_diag)
            .map(|(ri, di)| ri.scale_re(di / theta))
            .collect();
        for (xi, di) in x.iter_mut().zip(&d) {
            if zero_guess {
                *xi = *di;
            } else {
                *xi += *di;
            }
        }
        for _ in 1..degree {
            op.apply(x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = *bi - *ri;
            }
            let rho1 = 1.0 / (2.0 * sigma - rho);
            let c1 = rho1 * rho;
            let c2 = 2.0 * rho1 / delta;
            for i in 0..n {
                d[i] = d[i].scale_re(c1) + r[i].scale_re(c2 * lv.inv_diag[i]);
                x[i] += d[i];
            }
            rho = rho1;
        }
    }

    fn vcycle(&self, l: usize, b: &[T], x: &mut [T]) {
        let last = self.h.levels.len() - 1;
        if l == last {
            match &self.coarse {
                Coarse::Direct(ch) => {
                    let v = nalgebra::DVector::from_column_slice(b);
                    let s = ch.solve(&v);
                    x.copy_from_slice(s.as_slice());
                }
                Coarse::Smooth => {
                    self.smooth(l, b, x, true, CHEBYSHEV_DEGREE);
                    for _ in 0..6 {
                        self.smooth(l, b, x, false, CHEBYSHEV_DEGREE);
                    }
                }
            }
            return;
        }
        let lv = &self.h.levels[l];
        let op = BlochOperator::new(&lv.conn, &lv.mats, self.phases);
        self.smooth(l, b, x, true, CHEBYSHEV_DEGREE);
        let mut r = vec![T::zero(); b.len()];
        op.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = *bi - *ri;
        }
        let tr = &self.h.transfers[l];
        let mut rc = vec![T::zero(); 3 * tr.n_coarse_nodes];
        tr.restrict(&self.phases, &r, &mut rc);
        let mut xc = vec![T::zero(); rc.len()];
        self.vcycle(l + 1, &rc, &mut xc);
        let mut corr = vec![T::zero(); b.len()];
        tr.prolong(&self.phases, &xc, &mut corr);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += *ci;
        }
        self.smooth(l, b, x, false, CHEBYSHEV_DEGREE);
    }
}

impl<'h, T: Scalar> Preconditioner<T> for Multigrid<'h, T> {
    fn precondition(&self, r: &[T], z: &mut [T]) {
        self.vcycle(0, r, z);
    }
}

/// Largest eigenvalue of `D^{-1} A` by power iteration from a fixed
/// deterministic start vector.
fn power_estimate<T: Scalar>(op: &BlochOperator<'_, T>, inv_diag: &[f64]) -> f64 {
    let n = op.dim();
    let mut x: Vec<T> = (0..n)
        .map(|i| T::from_re(((i as f64 * 0.618_033_988_749_895).fract() - 0.5) + 1e-3))
        .collect();
    let mut y = vec![T::zero(); n];
    let mut est = 0.0;
    for _ in 0..POWER_ITERATIONS {
        op.apply(&x, &mut y);
        // Rayleigh quotient in the D inner product.
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += (x[i].conjugate() * y[i]).real();
            den += x[i].modulus_squared() / inv_diag[i];
        }
        est = num / den;
        let mut nrm = 0.0;
        for i in 0..n {
            x[i] = y[i].scale_re(inv_diag[i]);
            nrm += x[i].modulus_squared() / inv_diag[i];
        }
        let s = 1.0 / nrm.sqrt();
        x.iter_mut().for_each(|v| *v = v.scale_re(s));
    }
    est
}
