/// Uniform cubic B-spline basis over sample indices `0..n`, knots every
/// `knot_samples` samples. Each row has four consecutive nonzero columns.
#[derive(Debug, Clone)]
pub(crate) struct SplineBasis {
    pub n: usize,
    pub m: usize,
    knot_samples: f64,
    intervals: usize,
}

impl SplineBasis {
    pub fn new(n: usize, knot_samples: f64) -> Self {
        let span = (n.max(2) - 1) as f64;
        let intervals = ((span / knot_samples).ceil() as usize).max(1);
        Self {
            n,
            m: intervals + 3,
            knot_samples: span / intervals as f64,
            intervals,
        }
    }

    /// First nonzero column and the four basis values of row `i`.
    pub fn row(&self, i: usize) -> (usize, [f64; 4]) {
        let u = i as f64 / self.knot_samples;
        let j = (u.floor() as usize).min(self.intervals - 1);
        let f = u - j as f64;
        let f2 = f * f;
        let f3 = f2 * f;
        let g = 1.0 - f;
        (
            j,
            [
                g * g * g / 6.0,
                (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0,
                (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0,
                f3 / 6.0,
            ],
        )
    }

    /// Row range `[lo, hi)` where column `j` can be nonzero.
    pub fn column_support(&self, j: usize) -> (usize, usize) {
        let lo = (j.saturating_sub(3) as f64 * self.knot_samples).floor() as usize;
        let hi = (((j + 1) as f64 * self.knot_samples).ceil() as usize + 1).min(self.n);
        (lo.min(self.n), hi)
    }

    pub fn eval(&self, c: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (j, w) = self.row(i);
                (0..4).map(|k| w[k] * c[j + k]).sum()
            })
            .collect()
    }

    /// `B^T r`.
    pub fn transpose_mul(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (i, ri) in r.iter().enumerate() {
            let (j, w) = self.row(i);
            for k in 0..4 {
                out[j + k] += w[k] * ri;
            }
        }
        out
    }

    /// Dense `B^T B` over rows `skip..n`.
    pub fn gram(&self, skip: usize) -> Vec<f64> {
        let m = self.m;
        let mut g = vec![0.0; m * m];
        for i in skip..self.n {
            let (j, w) = self.row(i);
            for a in 0..4 {
                for b in 0..4 {
                    g[(j + a) * m + j + b] += w[a] * w[b];
                }
            }
        }
        g
    }
}
