//! Factorizations used by the deconvolution solver.

/// `L D L'` factor of a symmetric banded matrix, without pivoting. Suited to
/// quasi-definite matrices, for which the factorization exists in any order.
#[derive(Debug, Clone)]
pub(crate) struct BandLdl {
    bw: usize,
    /// Row `i` holds `L[i][i-bw..i]`, left-padded with zeros.
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdl {
    /// `entry(i, j)` gives `A[i][j]` for `i - bw <= j <= i`.
    pub(crate) fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Option<Self> {
        let mut l = vec![0.0; n * bw];
        let mut d = vec![0.0; n];
        let at = |l: &[f64], i: usize, j: usize| l[i * bw + (j + bw - i)];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let mut s = entry(i, j);
                for k in lo.max(j.saturating_sub(bw))..j {
                    s -= at(&l, i, k) * at(&l, j, k) * d[k];
                }
                l[i * bw + (j + bw - i)] = s / d[j];
            }
            let mut p = entry(i, i);
            for k in lo..i {
                let v = at(&l, i, k);
                p -= v * v * d[k];
            }
            if !(p != 0.0 && p.is_finite()) {
                return None;
            }
            d[i] = p;
        }
        Some(Self { bw, l, d })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (x.len(), self.bw);
        for i in 0..n {
            let mut v = x[i];
            for k in i.saturating_sub(bw)..i {
                v -= self.l[i * bw + (k + bw - i)] * x[k];
            }
            x[i] = v;
        }
        for (v, d) in x.iter_mut().zip(&self.d) {
            *v /= d;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                v -= self.l[k * bw + (i + bw - k)] * x[k];
            }
            x[i] = v;
        }
    }
}

/// Dense Cholesky factor (row-major lower triangle) of a small SPD matrix.
#[derive(Debug, Clone)]
pub(crate) struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub(crate) fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    /// Retries with a growing diagonal shift when `a` is numerically
    /// semidefinite. Returns the factor and the shift used.
    pub(crate) fn factor_regularized(a: &[f64], n: usize) -> Option<(Self, f64)> {
        if let Some(f) = Self::factor(a, n) {
            return Some((f, 0.0));
        }
        let top = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
        let mut shift = 1e-12 * top.max(f64::MIN_POSITIVE);
        let mut shifted = a.to_vec();
        while shift <= 1e-2 * top {
            for i in 0..n {
                shifted[i * n + i] = a[i * n + i] + shift;
            }
            if let Some(f) = Self::factor(&shifted, n) {
                return Some((f, shift));
            }
            shift *= 100.0;
        }
        None
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.l[i * n + k] * x[k];
            }
            x[i] = v / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in i + 1..n {
                v -= self.l[k * n + i] * x[k];
            }
            x[i] = v / self.l[i * n + i];
        }
    }
}
