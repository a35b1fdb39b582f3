//! Primal-dual interior-point solver for the joint tonic/driver problem
//!
//! ```text
//! minimize   1/2 |y - B c - p|^2 + lambda * sum(d)
//! subject to d >= 0,  p = h * d
//! ```
//!
//! `B` is a cubic B-spline basis (tonic), `p` the phasic response and `d` the
//! sudomotor driver. Because the sampled kernel satisfies a second-order
//! recursion, `d` is a banded difference operator applied to `p`, so the
//! problem is posed in `p` (shifted by one sample, since `p[0]` is always 0)
//! with the linear inequality `T p >= 0`. Each Newton step then needs one
//! pentadiagonal factorization plus a small dense Schur complement for the
//! spline coefficients.

use crate::error::{Error, Result};
use crate::linalg::{DenseCholesky, BandLdl};

use super::kernel::BatemanKernel;
use super::spline::SplineBasis;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolverOptions {
    pub lambda: f64,
    pub knot_spacing_s: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub tonic: Vec<f64>,
    pub driver: Vec<f64>,
}

struct Operator {
    s1: f64,
    s2: f64,
}

impl Operator {
    /// `(T q)[k] = q[k] - s1 q[k-1] + s2 q[k-2]`.
    fn apply(&self, q: &[f64]) -> Vec<f64> {
        (0..q.len())
            .map(|k| {
                let mut v = q[k];
                if k >= 1 {
                    v -= self.s1 * q[k - 1];
                }
                if k >= 2 {
                    v += self.s2 * q[k - 2];
                }
                v
            })
            .collect()
    }

    fn apply_transpose(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        (0..n)
            .map(|j| {
                let mut v = z[j];
                if j + 1 < n {
                    v -= self.s1 * z[j + 1];
                }
                if j + 2 < n {
                    v += self.s2 * z[j + 2];
                }
                v
            })
            .collect()
    }
}

/// The Newton system `[[I + T'WT, B1], [B1', B'B]]`, factored.
///
/// The `q` block is never formed: near convergence `W` spans many orders of
/// magnitude and `I + T'WT` loses the identity to cancellation. Instead
/// `(I + T'WT) u = r` is solved through the quasi-definite augmented system
/// `[[I, T'], [T, -W^-1]] [u; v] = [r; 0]`, interleaved so it is banded.
struct Newton<'a> {
    aug: BandLdl,
    /// Columns of `(I + T'WT)^-1 B1`, column-major.
    y: Vec<f64>,
    /// The same columns mapped through `W T`.
    wty: Vec<f64>,
    schur: DenseCholesky,
    basis: &'a SplineBasis,
}

impl<'a> Newton<'a> {
    fn factor(op: &Operator, w: &[f64], basis: &'a SplineBasis) -> Option<Self> {
        let n = w.len();
        let taps = [1.0, -op.s1, op.s2];
        // Unknown 2k is u[k], unknown 2k+1 is v[k]; row 2k+1 of T couples
        // v[k] with u[k], u[k-1] and u[k-2].
        let aug = BandLdl::factor(2 * n, 5, |i, j| {
            if i == j {
                return if i % 2 == 0 { 1.0 } else { -1.0 / w[i / 2] };
            }
            if i % 2 == 1 && j % 2 == 0 {
                let lag = (i - 1) / 2 - j / 2;
                return taps.get(lag).copied().unwrap_or(0.0);
            }
            0.0
        })?;

        // Schur block B'B - B1'(I + T'WT)^-1 B1 = b0 b0' + B1' T' v, where v is
        // the second half of the augmented solution. This form avoids
        // subtracting two nearly equal matrices when W is small.
        let m = basis.m;
        let mut y = vec![0.0; n * m];
        let mut wty = vec![0.0; n * m];
        let mut schur = vec![0.0; m * m];
        let (first0, w0) = basis.row(0);
        for a in 0..4 {
            for b in 0..4 {
                schur[(first0 + a) * m + first0 + b] += w0[a] * w0[b];
            }
        }
        let mut buf = vec![0.0; 2 * n];
        let mut v = vec![0.0; n];
        for j in 0..m {
            buf.iter_mut().for_each(|x| *x = 0.0);
            let (lo, hi) = basis.column_support(j);
            for row in lo.max(1)..hi {
                let (first, w) = basis.row(row);
                if (first..first + 4).contains(&j) {
                    buf[2 * (row - 1)] = w[j - first];
                }
            }
            aug.solve_in_place(&mut buf);
            for k in 0..n {
                y[j * n + k] = buf[2 * k];
                v[k] = buf[2 * k + 1];
            }
            wty[j * n..(j + 1) * n].copy_from_slice(&v);
            let tv = op.apply_transpose(&v);
            for row in 1..basis.n {
                let (first, w) = basis.row(row);
                for k in 0..4 {
                    schur[(first + k) * m + j] += w[k] * tv[row - 1];
                }
            }
        }
        // Symmetrize against rounding before factoring.
        for i in 0..m {
            for j in 0..i {
                let avg = 0.5 * (schur[i * m + j] + schur[j * m + i]);
                schur[i * m + j] = avg;
                schur[j * m + i] = avg;
            }
        }
        // When the driver is free almost everywhere the spline block is close
        // to singular; a small shift only perturbs the search direction.
        let (schur, shift) = DenseCholesky::factor_regularized(&schur, m)?;
        if shift > 0.0 {
            log::trace!("tonic block regularized by {shift:.2e}");
        }
        Some(Self {
            aug,
            y,
            wty,
            schur,
            basis,
        })
    }

    /// Returns `(u, W T u)` with `(I + T'WT) u = r`.
    fn solve_q(&self, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut buf = vec![0.0; 2 * r.len()];
        for (k, v) in r.iter().enumerate() {
            buf[2 * k] = *v;
        }
        self.aug.solve_in_place(&mut buf);
        let u = buf.iter().step_by(2).copied().collect();
        let v = buf.iter().skip(1).step_by(2).copied().collect();
        (u, v)
    }

    /// Returns `(dq, dc, W T dq)`. The last is read off the augmented
    /// solutions rather than recomputed, since `W` may be huge.
    fn solve(&self, rq: &[f64], rc: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = rq.len();
        let m = self.basis.m;
        let (mut u, mut wtu) = self.solve_q(rq);
        let mut dc = rc.to_vec();
        let btu = b1_transpose(self.basis, &u);
        for (d, b) in dc.iter_mut().zip(&btu) {
            *d -= b;
        }
        self.schur.solve_in_place(&mut dc);
        for (j, &c) in dc.iter().enumerate().take(m) {
            let col = &self.y[j * n..(j + 1) * n];
            for (ui, yi) in u.iter_mut().zip(col) {
                *ui -= yi * c;
            }
            let col = &self.wty[j * n..(j + 1) * n];
            for (vi, yi) in wtu.iter_mut().zip(col) {
                *vi -= yi * c;
            }
        }
        (u, dc, wtu)
    }
}

/// `B1' r` where `B1` is the basis without its first row.
fn b1_transpose(basis: &SplineBasis, r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis.m];
    for (k, rk) in r.iter().enumerate() {
        let (first, w) = basis.row(k + 1);
        for a in 0..4 {
            out[first + a] += w[a] * rk;
        }
    }
    out
}

fn max_step(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn solve(
    y: &[f64],
    rate_hz: f64,
    kernel: &BatemanKernel,
    opts: &SolverOptions,
) -> Result<Solution> {
    let n = y.len();
    let nq = n - 1;
    let ar = kernel.ar_form(rate_hz);
    let op = Operator {
        s1: ar.a + ar.b,
        s2: ar.a * ar.b,
    };
    let gain = ar.gain();
    let rho = opts.lambda / gain;

    let basis = SplineBasis::new(n, opts.knot_spacing_s * rate_hz);
    let gram = basis.gram(0);
    let bty = basis.transpose_mul(y);
    let penalty = op.apply_transpose(&vec![rho; nq]);
    let y1 = &y[1..];

    let mut c = bty.clone();
    DenseCholesky::factor(&gram, basis.m)
        .ok_or_else(|| Error::InvalidConfig("degenerate tonic basis".into()))?
        .solve_in_place(&mut c);
    let mut q = vec![0.0; nq];
    let scale = (norm_inf(y) * gain).max(1e-6);
    let mut s = vec![scale; nq];
    let mut z = vec![rho.max(1e-3); nq];

    let y_scale = 1.0 + norm_inf(y);
    let mut last_residual = f64::INFINITY;
    for iteration in 0..opts.max_iterations {
        let tonic_full = basis.eval(&c);
        let tq = op.apply(&q);
        let ttz = op.apply_transpose(&z);
        let r_dq: Vec<f64> = (0..nq)
            .map(|k| q[k] + tonic_full[k + 1] - y1[k] + penalty[k] - ttz[k])
            .collect();
        let mut fit = vec![0.0; n];
        for k in 0..nq {
            fit[k + 1] = q[k];
        }
        for (f, t) in fit.iter_mut().zip(&tonic_full) {
            *f += t;
        }
        let r_dc: Vec<f64> = basis
            .transpose_mul(&fit)
            .iter()
            .zip(&bty)
            .map(|(a, b)| a - b)
            .collect();
        let r_p: Vec<f64> = tq.iter().zip(&s).map(|(a, b)| a - b).collect();
        let mu = s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / nq as f64;

        let primal = norm_inf(&r_p) / (1.0 + norm_inf(&s));
        let dual = norm_inf(&r_dq).max(norm_inf(&r_dc)) / y_scale;
        last_residual = primal.max(dual);
        if primal <= opts.tolerance && dual <= opts.tolerance && mu <= opts.tolerance * scale {
            let driver = tq.iter().map(|v| v.max(0.0) / gain).chain([0.0]).collect();
            log::trace!("deconvolution converged after {iteration} iterations");
            return Ok(Solution {
                tonic: tonic_full,
                driver,
            });
        }

        let w: Vec<f64> = z.iter().zip(&s).map(|(z, s)| z / s).collect();
        let newton = Newton::factor(&op, &w, &basis).ok_or(Error::NonConvergence {
            iterations: iteration,
            residual: last_residual,
        })?;

        let direction = |rc: &[f64]| {
            let v: Vec<f64> = (0..nq).map(|k| (rc[k] + z[k] * r_p[k]) / s[k]).collect();
            let tv = op.apply_transpose(&v);
            let rhs_q: Vec<f64> = (0..nq).map(|k| -r_dq[k] - tv[k]).collect();
            let rhs_c: Vec<f64> = r_dc.iter().map(|v| -v).collect();
            let (dq, dc, wtdq) = newton.solve(&rhs_q, &rhs_c);
            let tdq = op.apply(&dq);
            let ds: Vec<f64> = (0..nq).map(|k| tdq[k] + r_p[k]).collect();
            // dz = -(rc + z ds) / s, with the W T dq part taken from the solve.
            let dz: Vec<f64> = (0..nq).map(|k| -v[k] - wtdq[k]).collect();
            (dq, dc, ds, dz)
        };

        let rc_aff: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a * b).collect();
        let (_, _, ds_a, dz_a) = direction(&rc_aff);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a)).min(1.0);
        let mu_aff = (0..nq)
            .map(|k| (s[k] + alpha_aff * ds_a[k]) * (z[k] + alpha_aff * dz_a[k]))
            .sum::<f64>()
            / nq as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc: Vec<f64> = (0..nq)
            .map(|k| s[k] * z[k] + ds_a[k] * dz_a[k] - sigma * mu)
            .collect();
        let (dq, dc, ds, dz) = direction(&rc);
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);

        for k in 0..nq {
            q[k] += alpha * dq[k];
            s[k] += alpha * ds[k];
            z[k] += alpha * dz[k];
        }
        for (ci, d) in c.iter_mut().zip(&dc) {
            *ci += alpha * d;
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: last_residual,
    })
}
