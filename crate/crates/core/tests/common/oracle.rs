//! Exact membership written from scratch: fold by mirror planes, then
//! evaluate |.|^p norms along the normalized control direction.

pub struct Feat {
    pub c: [f64; 3],
    pub z: [f64; 3],
    pub t: f64,
    pub p: f64,
}

impl Feat {
    fn norm(&self, x: [f64; 3]) -> f64 {
        let r = ((0..3).map(|k| (self.z[k] - self.c[k]).powi(2)).sum::<f64>()).sqrt();
        let mut s = 0.0;
        for k in 0..3 {
            let n = (self.z[k] - self.c[k]) / r;
            s += (n * (x[k] - self.c[k])).abs().powf(self.p);
        }
        s.powf(1.0 / self.p)
    }

    /// Signed level value, negative inside.
    pub fn level(&self, x: [f64; 3], outer: bool) -> f64 {
        self.norm(x) - self.norm(self.z) - if outer { self.t } else { 0.0 }
    }
}

pub fn features(a: &[f64; 14]) -> Vec<Feat> {
    let h = [0.5; 3];
    vec![
        Feat { c: [0.0; 3], z: [a[0], a[1], a[2]], t: a[3], p: a[4] },
        Feat { c: h, z: [0.5, 0.5, a[5]], t: 0.1, p: 1.0 },
        Feat { c: h, z: [0.5, a[6], a[6]], t: a[7], p: a[8] },
        Feat { c: h, z: [a[9]; 3], t: a[10], p: a[11] },
        Feat { c: [0.5, 0.5, 0.0], z: [a[12], a[12], 0.0], t: 0.0, p: a[13] },
    ]
}

pub fn fold(x: [f64; 3]) -> [f64; 3] {
    let mut y = x.map(|v| if v > 0.5 { 1.0 - v } else { v });
    if y[0] < y[1] {
        y.swap(0, 1);
    }
    if y[1] < y[2] {
        y.swap(1, 2);
    }
    if y[0] < y[1] {
        y.swap(0, 1);
    }
    y
}

pub fn solid(f: &[Feat], x: [f64; 3]) -> bool {
    let w = fold(x);
    let lv: Vec<(f64, f64)> = f.iter().map(|s| (s.level(w, false), s.level(w, true))).collect();
    let inside = |v: f64| v < 0.0;
    let body = inside(lv[1].1) && inside(lv[2].1) && inside(lv[3].1);
    let arm = inside(lv[0].1) && !inside(lv[0].0);
    let cavity = inside(lv[1].0) && inside(lv[2].0) && inside(lv[3].0);
    let hole = inside(lv[4].0);
    (body || arm) && !cavity && !hole
}
