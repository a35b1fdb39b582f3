//! Small DSP toolkit: second-order Butterworth sections, zero-phase
//! filtering and running-window statistics.

use std::f64::consts::{PI, SQRT_2};

/// Second-order IIR section in transposed direct form II, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Butterworth low-pass (bilinear transform, Q = 1/sqrt(2)).
    pub fn lowpass(cutoff_hz: f64, rate_hz: f64) -> Self {
        let (cos_w, alpha) = Self::prewarp(cutoff_hz, rate_hz);
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - cos_w) / a0;
        Biquad {
            b: [b1 / 2.0, b1, b1 / 2.0],
            a: [-2.0 * cos_w / a0, (1.0 - alpha) / a0],
        }
    }

    /// Butterworth high-pass (bilinear transform, Q = 1/sqrt(2)).
    pub fn highpass(cutoff_hz: f64, rate_hz: f64) -> Self {
        let (cos_w, alpha) = Self::prewarp(cutoff_hz, rate_hz);
        let a0 = 1.0 + alpha;
        let b1 = -(1.0 + cos_w) / a0;
        Biquad {
            b: [-b1 / 2.0, b1, -b1 / 2.0],
            a: [-2.0 * cos_w / a0, (1.0 - alpha) / a0],
        }
    }

    fn prewarp(cutoff_hz: f64, rate_hz: f64) -> (f64, f64) {
        let w = 2.0 * PI * (cutoff_hz / rate_hz).min(0.499);
        (w.cos(), w.sin() / SQRT_2)
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn run(&self, x: &mut [f64], x0: f64) {
        // Start in steady state for a constant input equal to `x0`.
        let g = self.dc_gain();
        let mut z2 = (self.b[2] - self.a[1] * g) * x0;
        let mut z1 = (self.b[1] - self.a[0] * g) * x0 + z2;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b[0] * xin + z1;
            z1 = self.b[1] * xin - self.a[0] * y + z2;
            z2 = self.b[2] * xin - self.a[1] * y;
            *v = y;
        }
    }
}

/// A cascade of biquads applied forward and backward (zero phase).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZeroPhaseFilter {
    sections: Vec<Biquad>,
}

impl ZeroPhaseFilter {
    pub fn new(sections: Vec<Biquad>) -> Self {
        Self { sections }
    }

    /// High-pass at `low_hz` followed by low-pass at `high_hz`. Either edge may
    /// be omitted by passing a non-positive value or one at/above Nyquist.
    pub fn bandpass(low_hz: f64, high_hz: f64, rate_hz: f64) -> Self {
        let mut sections = Vec::new();
        if low_hz > 0.0 {
            sections.push(Biquad::highpass(low_hz, rate_hz));
        }
        if high_hz > 0.0 && high_hz < rate_hz / 2.0 {
            sections.push(Biquad::lowpass(high_hz, rate_hz));
        }
        Self { sections }
    }

    /// Odd-reflection padded forward-backward filtering.
    pub fn apply(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 || self.sections.is_empty() {
            return x.to_vec();
        }
        let pad = pad.min(n - 1);
        let mut buf = Vec::with_capacity(n + 2 * pad);
        buf.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        buf.extend_from_slice(x);
        buf.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        for _ in 0..2 {
            for s in &self.sections {
                let x0 = buf[0];
                s.run(&mut buf, x0);
            }
            buf.reverse();
        }
        buf.drain(..pad);
        buf.truncate(n);
        buf
    }
}

/// Centered moving average over `width` samples, truncated at the edges.
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let width = width.max(1);
    let half_lo = (width - 1) / 2;
    let half_hi = width - 1 - half_lo;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half_lo);
            let hi = (i + half_hi + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Centered moving sum over `width` samples, truncated at the edges.
pub fn moving_sum(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let width = width.max(1);
    let half_lo = (width - 1) / 2;
    let half_hi = width - 1 - half_lo;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| prefix[(i + half_hi + 1).min(n)] - prefix[i.saturating_sub(half_lo)])
        .collect()
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Ordinary least-squares line `y = intercept + slope * t`.
/// Returns `None` when fewer than two distinct abscissae are given.
pub fn linear_fit(t: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = t.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let t_mean = t.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (ti, yi) in t.iter().zip(y) {
        let dt = ti - t_mean;
        sxx += dt * dt;
        sxy += dt * (yi - y_mean);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let ss: f64 = t
        .iter()
        .zip(y)
        .map(|(ti, yi)| {
            let r = yi - (intercept + slope * ti);
            r * r
        })
        .sum();
    Some((slope, intercept, (ss / nf).sqrt()))
}

/// Sub-sample offset of a local extremum from three neighbouring samples.
pub fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < f64::EPSILON * mid.abs().max(1.0) {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}
