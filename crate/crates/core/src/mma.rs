//! Method of Moving Asymptotes for `min f0(x)` subject to `f_i(x) <= 0`,
//! `xmin <= x <= xmax`, with a primal-dual interior-point subproblem solver.
//!
//! The subproblem uses the usual artificial variables `y_i` (weight `c`,
//! quadratic weight `d`), so it is always feasible; a positive `y_i` at the
//! solution means the linearized constraint could not be met.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct MmaSettings {
    pub move_limit: f64,
    pub asy_init: f64,
    pub asy_incr: f64,
    pub asy_decr: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for MmaSettings {
    fn default() -> Self {
        Self {
            move_limit: 0.1,
            asy_init: 0.5,
            asy_incr: 1.2,
            asy_decr: 0.7,
            c: 1000.0,
            d: 1.0,
        }
    }
}

/// Optimizer memory between iterations.
#[derive(Debug, Clone)]
pub struct Mma {
    pub settings: MmaSettings,
    pub n: usize,
    pub m: usize,
    pub iter: usize,
    pub xold1: Vec<f64>,
    pub xold2: Vec<f64>,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
}

/// Result of one update.
#[derive(Debug, Clone)]
pub struct MmaStep {
    pub x: Vec<f64>,
    /// Artificial variables; nonzero entries flag an infeasible linearization.
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
}

const EPSIMIN: f64 = 1e-7;
const RAA0: f64 = 1e-5;
const ALBEFA: f64 = 0.1;

impl Mma {
    pub fn new(n: usize, m: usize, settings: MmaSettings) -> Self {
        Self {
            settings,
            n,
            m,
            iter: 0,
            xold1: Vec::new(),
            xold2: Vec::new(),
            low: vec![0.0; n],
            upp: vec![1.0; n],
        }
    }

    /// One MMA step from `x` given objective gradient `df0`, constraint
    /// values `fval` and constraint gradients `dfdx[i]`.
    pub fn update(
        &mut self,
        x: &[f64],
        df0: &[f64],
        fval: &[f64],
        dfdx: &[Vec<f64>],
        xmin: &[f64],
        xmax: &[f64],
    ) -> MmaStep {
        let (n, m) = (self.n, self.m);
        assert_eq!(x.len(), n);
        assert_eq!(fval.len(), m);
        assert_eq!(dfdx.len(), m);
        let s = self.settings;
        self.iter += 1;
        if self.iter < 3 {
            for j in 0..n {
                let r = xmax[j] - xmin[j];
                self.low[j] = x[j] - s.asy_init * r;
                self.upp[j] = x[j] + s.asy_init * r;
            }
        } else {
            for j in 0..n {
                let z = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let f = if z > 0.0 {
                    s.asy_incr
                } else if z < 0.0 {
                    s.asy_decr
                } else {
                    1.0
                };
                let r = xmax[j] - xmin[j];
                let lo = x[j] - f * (self.xold1[j] - self.low[j]);
                let up = x[j] + f * (self.upp[j] - self.xold1[j]);
                self.low[j] = lo.max(x[j] - 10.0 * r).min(x[j] - 0.01 * r);
                self.upp[j] = up.min(x[j] + 10.0 * r).max(x[j] + 0.01 * r);
            }
        }

        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p = vec![vec![0.0; n]; m];
        let mut q = vec![vec![0.0; n]; m];
        let mut b = vec![0.0; m];
        for j in 0..n {
            let r = xmax[j] - xmin[j];
            alfa[j] = (self.low[j] + ALBEFA * (x[j] - self.low[j]))
                .max(x[j] - s.move_limit * r)
                .max(xmin[j]);
            beta[j] = (self.upp[j] - ALBEFA * (self.upp[j] - x[j]))
                .min(x[j] + s.move_limit * r)
                .min(xmax[j]);
            let inv = 1.0 / r.max(1e-5);
            let ux1 = self.upp[j] - x[j];
            let xl1 = x[j] - self.low[j];
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            let pp = df0[j].max(0.0);
            let qq = (-df0[j]).max(0.0);
            let pq = 0.001 * (pp + qq) + RAA0 * inv;
            p0[j] = (pp + pq) * ux2;
            q0[j] = (qq + pq) * xl2;
            for i in 0..m {
                let pp = dfdx[i][j].max(0.0);
                let qq = (-dfdx[i][j]).max(0.0);
                let pq = 0.001 * (pp + qq) + RAA0 * inv;
                p[i][j] = (pp + pq) * ux2;
                q[i][j] = (qq + pq) * xl2;
                b[i] += p[i][j] / ux1 + q[i][j] / xl1;
            }
        }
        for i in 0..m {
            b[i] -= fval[i];
        }
        let sub = Subproblem {
            n,
            m,
            low: &self.low,
            upp: &self.upp,
            alfa: &alfa,
            beta: &beta,
            p0: &p0,
            q0: &q0,
            p: &p,
            q: &q,
            b: &b,
            c: s.c,
            d: s.d,
        };
        let (xn, y, lambda) = sub.solve();
        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        if self.xold2.is_empty() {
            self.xold2 = self.xold1.clone();
        }
        MmaStep { x: xn, y, lambda }
    }
}

struct Subproblem<'a> {
    n: usize,
    m: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    p: &'a [Vec<f64>],
    q: &'a [Vec<f64>],
    b: &'a [f64],
    c: f64,
    d: f64,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl Subproblem<'_> {
    fn plam_qlam(&self, lam: &[f64], j: usize) -> (f64, f64) {
        let mut pl = self.p0[j];
        let mut ql = self.q0[j];
        for i in 0..self.m {
            pl += self.p[i][j] * lam[i];
            ql += self.q[i][j] * lam[i];
        }
        (pl, ql)
    }

    fn gvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                (0..self.n)
                    .map(|j| self.p[i][j] / (self.upp[j] - x[j]) + self.q[i][j] / (x[j] - self.low[j]))
                    .sum()
            })
            .collect()
    }

    fn residual(&self, v: &Iterate, epsi: f64) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut r = Vec::with_capacity(3 * n + 4 * m + 2);
        for j in 0..n {
            let (pl, ql) = self.plam_qlam(&v.lam, j);
            let ux = self.upp[j] - v.x[j];
            let xl = v.x[j] - self.low[j];
            r.push(pl / (ux * ux) - ql / (xl * xl) - v.xsi[j] + v.eta[j]);
        }
        for i in 0..m {
            r.push(self.c + self.d * v.y[i] - v.mu[i] - v.lam[i]);
        }
        // a0 = 1, a = 0
        r.push(1.0 - v.zet);
        let g = self.gvec(&v.x);
        for i in 0..m {
            r.push(g[i] - v.y[i] + v.s[i] - self.b[i]);
        }
        for j in 0..n {
            r.push(v.xsi[j] * (v.x[j] - self.alfa[j]) - epsi);
        }
        for j in 0..n {
            r.push(v.eta[j] * (self.beta[j] - v.x[j]) - epsi);
        }
        for i in 0..m {
            r.push(v.mu[i] * v.y[i] - epsi);
        }
        r.push(v.zet * v.z - epsi);
        for i in 0..m {
            r.push(v.lam[i] * v.s[i] - epsi);
        }
        r
    }

    fn solve(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut v = Iterate {
            x: (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect(),
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            xsi: vec![0.0; n],
            eta: vec![0.0; n],
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        for j in 0..n {
            v.xsi[j] = (1.0 / (v.x[j] - self.alfa[j])).max(1.0);
            v.eta[j] = (1.0 / (self.beta[j] - v.x[j])).max(1.0);
        }
        let norm = |r: &[f64]| r.iter().map(|e| e * e).sum::<f64>().sqrt();
        let maxabs = |r: &[f64]| r.iter().fold(0.0f64, |a, e| a.max(e.abs()));

        let mut epsi = 1.0;
        while epsi > EPSIMIN {
            let mut res = self.residual(&v, epsi);
            let mut resnorm = norm(&res);
            let mut resmax = maxabs(&res);
            let mut inner = 0;
            while resmax > 0.9 * epsi && inner < 200 {
                inner += 1;
                // Newton direction, reduced to the m+1 dual system.
                let mut delx = vec![0.0; n];
                let mut diagx = vec![0.0; n];
                let mut gg = DMatrix::<f64>::zeros(m, n);
                for j in 0..n {
                    let (pl, ql) = self.plam_qlam(&v.lam, j);
                    let ux = self.upp[j] - v.x[j];
                    let xl = v.x[j] - self.low[j];
                    let (ux2, xl2) = (ux * ux, xl * xl);
                    let dpsi = pl / ux2 - ql / xl2;
                    let xa = v.x[j] - self.alfa[j];
                    let bx = self.beta[j] - v.x[j];
                    delx[j] = dpsi - epsi / xa + epsi / bx;
                    diagx[j] = 2.0 * (pl / (ux2 * ux) + ql / (xl2 * xl)) + v.xsi[j] / xa + v.eta[j] / bx;
                    for i in 0..m {
                        gg[(i, j)] = self.p[i][j] / ux2 - self.q[i][j] / xl2;
                    }
                }
                let g = self.gvec(&v.x);
                let mut dely = vec![0.0; m];
                let mut diagy = vec![0.0; m];
                let mut dellam = vec![0.0; m];
                let mut diaglamyi = vec![0.0; m];
                for i in 0..m {
                    dely[i] = self.c + self.d * v.y[i] - v.lam[i] - epsi / v.y[i];
                    diagy[i] = self.d + v.mu[i] / v.y[i];
                    dellam[i] = g[i] - v.y[i] - self.b[i] + epsi / v.lam[i];
                    diaglamyi[i] = v.s[i] / v.lam[i] + 1.0 / diagy[i];
                }
                let delz = 1.0 - epsi / v.z;
                let mut aa = DMatrix::<f64>::zeros(m + 1, m + 1);
                let mut bb = DVector::<f64>::zeros(m + 1);
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += gg[(i, j)] * delx[j] / diagx[j];
                    }
                    bb[i] = dellam[i] + dely[i] / diagy[i] - acc;
                    for k in i..m {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += gg[(i, j)] * gg[(k, j)] / diagx[j];
                        }
                        aa[(i, k)] = s;
                        aa[(k, i)] = s;
                    }
                    aa[(i, i)] += diaglamyi[i];
                }
                // a = 0 couples nothing to z except its own diagonal
                aa[(m, m)] = -v.zet / v.z;
                bb[m] = delz;
                let sol = aa.lu().solve(&bb).unwrap_or_else(|| DVector::zeros(m + 1));
                let dlam: Vec<f64> = (0..m).map(|i| sol[i]).collect();
                let dz = sol[m];
                let dx: Vec<f64> = (0..n)
                    .map(|j| {
                        let mut s = 0.0;
                        for i in 0..m {
                            s += gg[(i, j)] * dlam[i];
                        }
                        -delx[j] / diagx[j] - s / diagx[j]
                    })
                    .collect();
                let dy: Vec<f64> = (0..m).map(|i| -dely[i] / diagy[i] + dlam[i] / diagy[i]).collect();
                let dxsi: Vec<f64> = (0..n)
                    .map(|j| {
                        let xa = v.x[j] - self.alfa[j];
                        -v.xsi[j] + epsi / xa - v.xsi[j] * dx[j] / xa
                    })
                    .collect();
                let deta: Vec<f64> = (0..n)
                    .map(|j| {
                        let bx = self.beta[j] - v.x[j];
                        -v.eta[j] + epsi / bx + v.eta[j] * dx[j] / bx
                    })
                    .collect();
                let dmu: Vec<f64> = (0..m).map(|i| -v.mu[i] + epsi / v.y[i] - v.mu[i] * dy[i] / v.y[i]).collect();
                let dzet = -v.zet + epsi / v.z - v.zet * dz / v.z;
                let ds: Vec<f64> = (0..m).map(|i| -v.s[i] + epsi / v.lam[i] - v.s[i] * dlam[i] / v.lam[i]).collect();

                // Largest step keeping all positive quantities positive.
                let mut stm = 1.0f64;
                let mut upd = |val: f64, d: f64| {
                    stm = stm.max(-1.01 * d / val);
                };
                for i in 0..m {
                    upd(v.y[i], dy[i]);
                    upd(v.lam[i], dlam[i]);
                    upd(v.mu[i], dmu[i]);
                    upd(v.s[i], ds[i]);
                }
                upd(v.z, dz);
                upd(v.zet, dzet);
                for j in 0..n {
                    upd(v.xsi[j], dxsi[j]);
                    upd(v.eta[j], deta[j]);
                    upd(v.x[j] - self.alfa[j], dx[j]);
                    upd(self.beta[j] - v.x[j], -dx[j]);
                }
                let mut step = 1.0 / stm;
                let old = v.clone();
                let mut newnorm = 2.0 * resnorm;
                let mut tries = 0;
                while newnorm > resnorm && tries < 50 {
                    tries += 1;
                    for j in 0..n {
                        v.x[j] = old.x[j] + step * dx[j];
                        v.xsi[j] = old.xsi[j] + step * dxsi[j];
                        v.eta[j] = old.eta[j] + step * deta[j];
                    }
                    for i in 0..m {
                        v.y[i] = old.y[i] + step * dy[i];
                        v.lam[i] = old.lam[i] + step * dlam[i];
                        v.mu[i] = old.mu[i] + step * dmu[i];
                        v.s[i] = old.s[i] + step * ds[i];
                    }
                    v.z = old.z + step * dz;
                    v.zet = old.zet + step * dzet;
                    res = self.residual(&v, epsi);
                    newnorm = norm(&res);
                    step *= 0.5;
                }
                resnorm = newnorm;
                resmax = maxabs(&res);
            }
            epsi *= 0.1;
        }
        (v.x, v.y, v.lam)
    }
}
