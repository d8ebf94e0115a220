//! Periodic voxel grid on the unit cube.
//!
//! Elements and nodes share the same `(i, j, k)` indexing with `x` fastest.
//! Node `(i, j, k)` sits at `(i h, j h, k h)`; the nodes on the faces
//! `x = 1`, `y = 1`, `z = 1` are slaves of the nodes at the opposite face and
//! are not stored. Every element records, per local node, which axes were
//! wrapped to reach its master node. The wrap code is what carries the
//! Bloch phase in [`crate::bloch`].

use crate::error::{Error, Result};

/// Local node offsets of the 8-node hexahedron, in the usual
/// counter-clockwise bottom-then-top ordering.
pub const HEX_NODE_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Cubic `n x n x n` voxelization of the unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelGrid {
    n: usize,
}

impl VoxelGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 elements per edge, got {n}"
            )));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Element edge length.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn num_elements(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Master nodes; equal to the element count on a periodic grid.
    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_elements()
    }

    #[inline]
    pub fn num_dofs(&self) -> usize {
        3 * self.num_nodes()
    }

    #[inline]
    pub fn element_volume(&self) -> f64 {
        self.h().powi(3)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn coords(&self, e: usize) -> [usize; 3] {
        let n = self.n;
        [e % n, (e / n) % n, e / (n * n)]
    }

    pub fn centroid(&self, e: usize) -> [f64; 3] {
        let h = self.h();
        let [i, j, k] = self.coords(e);
        [
            (i as f64 + 0.5) * h,
            (j as f64 + 0.5) * h,
            (k as f64 + 0.5) * h,
        ]
    }

    /// Master node and wrap code of local node `a` of element `e`.
    /// Bit 0/1/2 of the wrap code is set when the node was wrapped in x/y/z.
    #[inline]
    pub fn element_node(&self, e: usize, a: usize) -> (usize, u8) {
        let n = self.n;
        let [i, j, k] = self.coords(e);
        let off = HEX_NODE_OFFSETS[a];
        let (ii, jj, kk) = (i + off[0], j + off[1], k + off[2]);
        let code = (ii == n) as u8 | (((jj == n) as u8) << 1) | (((kk == n) as u8) << 2);
        (self.index(ii % n, jj % n, kk % n), code)
    }

    /// Connectivity table for the whole grid.
    pub fn connectivity(&self) -> Connectivity {
        let ne = self.num_elements();
        let mut nodes = Vec::with_capacity(ne);
        let mut wraps = Vec::with_capacity(ne);
        for e in 0..ne {
            let mut nd = [0u32; 8];
            let mut wr = [0u8; 8];
            for a in 0..8 {
                let (m, c) = self.element_node(e, a);
                nd[a] = m as u32;
                wr[a] = c;
            }
            nodes.push(nd);
            wraps.push(wr);
        }
        Connectivity {
            grid: *self,
            nodes,
            wraps,
        }
    }
}

/// Precomputed element-to-master-node map with wrap codes.
#[derive(Debug, Clone)]
pub struct Connectivity {
    pub grid: VoxelGrid,
    pub nodes: Vec<[u32; 8]>,
    pub wraps: Vec<[u8; 8]>,
}

impl Connectivity {
    #[inline]
    pub fn is_interior(&self, e: usize) -> bool {
        self.wraps[e].iter().all(|&w| w == 0)
    }
}

/// One of the 48 symmetry operations of the cube about the cell center:
/// an axis permutation followed by optional reflections `x -> 1 - x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubicOp {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

impl CubicOp {
    pub fn all() -> Vec<CubicOp> {
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut ops = Vec::with_capacity(48);
        for perm in PERMS {
            for bits in 0..8u8 {
                ops.push(CubicOp {
                    perm,
                    flip: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0],
                });
            }
        }
        ops
    }

    /// Image of a point of the unit cell.
    pub fn apply_point(&self, x: [f64; 3]) -> [f64; 3] {
        let mut y = [0.0; 3];
        for d in 0..3 {
            let v = x[self.perm[d]];
            y[d] = if self.flip[d] { 1.0 - v } else { v };
        }
        y
    }

    /// Image of an element index.
    pub fn apply_element(&self, grid: &VoxelGrid, e: usize) -> usize {
        let n = grid.n();
        let c = grid.coords(e);
        let mut d = [0usize; 3];
        for ax in 0..3 {
            let v = c[self.perm[ax]];
            d[ax] = if self.flip[ax] { n - 1 - v } else { v };
        }
        grid.index(d[0], d[1], d[2])
    }
}

/// Maps a point of the unit cell to the fundamental wedge
/// `0 <= z <= y <= x <= 1/2` of the cubic group.
pub fn fold_to_wedge(x: [f64; 3]) -> [f64; 3] {
    let mut f = [
        x[0].min(1.0 - x[0]),
        x[1].min(1.0 - x[1]),
        x[2].min(1.0 - x[2]),
    ];
    f.sort_by(|a, b| b.total_cmp(a));
    f
}

/// Partition of the elements into orbits of the cubic group, used to
/// carry one design variable per orbit.
#[derive(Debug, Clone)]
pub struct SymmetryOrbits {
    /// Orbit index of every element.
    pub element_orbit: Vec<usize>,
    /// Members of each orbit, in ascending element order.
    pub members: Vec<Vec<usize>>,
}

impl SymmetryOrbits {
    pub fn new(grid: &VoxelGrid) -> Self {
        let n = grid.n();
        let ne = grid.num_elements();
        let canon = |e: usize| -> [usize; 3] {
            let c = grid.coords(e);
            let mut f = [
                c[0].min(n - 1 - c[0]),
                c[1].min(n - 1 - c[1]),
                c[2].min(n - 1 - c[2]),
            ];
            f.sort_unstable_by(|a, b| b.cmp(a));
            f
        };
        let mut reps: Vec<[usize; 3]> = (0..ne).map(canon).collect();
        let element_keys = reps.clone();
        reps.sort_unstable();
        reps.dedup();
        let mut element_orbit = vec![0usize; ne];
        let mut members = vec![Vec::new(); reps.len()];
        for e in 0..ne {
            let o = reps.binary_search(&element_keys[e]).expect("orbit key present");
            element_orbit[e] = o;
            members[o].push(e);
        }
        Self {
            element_orbit,
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Full element field from one value per orbit.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        self.element_orbit.iter().map(|&o| reduced[o]).collect()
    }

    /// Orbit means of an element field.
    pub fn restrict_mean(&self, full: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| m.iter().map(|&e| full[e]).sum::<f64>() / m.len() as f64)
            .collect()
    }

    /// Gradient with respect to the orbit variables: sum over members.
    pub fn restrict_sum(&self, full: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| m.iter().map(|&e| full[e]).sum())
            .collect()
    }
}
