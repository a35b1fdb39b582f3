//! Skin-conductance decomposition into a slow tonic level and a phasic part
//! driven by a sparse, nonnegative sudomotor driver, and SCR event detection
//! on that driver.

mod kernel;
mod solver;
mod spline;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kernel::BatemanKernel;

use crate::dsp;
use crate::error::{Error, Result};
use crate::series::{ChannelKind, TimeSeries};

const MIN_DURATION_S: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdaConfig {
    /// Weight of the L1 penalty on the driver.
    pub lambda: f64,
    /// Knot spacing of the tonic spline.
    pub knot_spacing_s: f64,
    pub max_iterations: usize,
    /// Relative residual and gap at which the solver stops.
    pub tolerance: f64,
    /// Long recordings are solved in overlapping segments of this length.
    pub segment_s: f64,
    pub overlap_s: f64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            knot_spacing_s: 10.0,
            max_iterations: 120,
            tolerance: 1e-9,
            segment_s: 120.0,
            overlap_s: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScrConfig {
    /// Events with a smaller response amplitude are discarded.
    pub amplitude_threshold_us: f64,
    /// Driver bursts closer than this are merged into one event.
    pub min_separation_s: f64,
    /// Width of the moving sum used to find driver bursts.
    pub smoothing_s: f64,
    /// Driver mass per smoothing window that opens a burst.
    pub driver_threshold_us: f64,
}

impl Default for ScrConfig {
    fn default() -> Self {
        Self {
            amplitude_threshold_us: 0.01,
            min_separation_s: 1.0,
            smoothing_s: 0.5,
            driver_threshold_us: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaDecomposition {
    pub tonic: TimeSeries,
    pub phasic: TimeSeries,
    pub driver: TimeSeries,
    pub kernel: BatemanKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrEvent {
    pub onset_s: f64,
    pub peak_s: f64,
    pub amplitude_us: f64,
}

/// Splits `gsr` into `tonic + driver * kernel` with `driver >= 0`.
///
/// The tonic is a cubic spline with knots every `knot_spacing_s`; tonic,
/// phasic and driver are estimated jointly by minimizing the squared
/// reconstruction error plus `lambda * sum(driver)`.
pub fn decompose(
    gsr: &TimeSeries,
    kernel: &BatemanKernel,
    cfg: &EdaConfig,
) -> Result<EdaDecomposition> {
    gsr.expect_kind(ChannelKind::Gsr)?;
    kernel.validate()?;
    if gsr.duration_s() < MIN_DURATION_S {
        return Err(Error::TooShort {
            needed_s: MIN_DURATION_S,
            actual_s: gsr.duration_s(),
        });
    }
    if let Some(v) = gsr.values().iter().copied().find(|v| *v < 0.0) {
        return Err(Error::NegativeConductance(v));
    }
    if !(cfg.lambda >= 0.0 && cfg.knot_spacing_s > 0.0 && cfg.overlap_s >= 0.0)
        || cfg.segment_s < cfg.overlap_s + MIN_DURATION_S
    {
        return Err(Error::InvalidConfig("inconsistent EDA solver settings".into()));
    }

    let fs = gsr.sampling_rate_hz();
    let y = gsr.values();
    let n = y.len();
    let opts = solver::SolverOptions {
        lambda: cfg.lambda,
        knot_spacing_s: cfg.knot_spacing_s,
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
    };

    let plan = segments(n, (cfg.segment_s * fs) as usize, (cfg.overlap_s * fs) as usize);
    let solved = plan
        .par_iter()
        .map(|seg| solver::solve(&y[seg.start..seg.end], fs, kernel, &opts))
        .collect::<Result<Vec<_>>>()?;

    let mut tonic = vec![0.0; n];
    let mut driver = vec![0.0; n];
    for (seg, sol) in plan.iter().zip(&solved) {
        for i in seg.own_start..seg.own_end {
            tonic[i] = sol.tonic[i - seg.start];
            driver[i] = sol.driver[i - seg.start];
        }
    }
    let phasic = kernel.convolve(&driver, fs);
    Ok(EdaDecomposition {
        tonic: gsr.with_values(tonic)?,
        phasic: gsr.with_values(phasic)?,
        driver: gsr.with_values(driver)?,
        kernel: *kernel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    start: usize,
    end: usize,
    own_start: usize,
    own_end: usize,
}

/// Overlapping solver segments; each sample is owned by exactly one segment,
/// with ownership switching in the middle of each overlap.
fn segments(n: usize, len: usize, overlap: usize) -> Vec<Segment> {
    if n <= len || len <= overlap {
        return vec![Segment {
            start: 0,
            end: n,
            own_start: 0,
            own_end: n,
        }];
    }
    let step = len - overlap;
    let mut starts: Vec<usize> = (0..).map(|k| k * step).take_while(|s| s + len < n).collect();
    starts.push(n - len);
    let mut out: Vec<Segment> = starts
        .iter()
        .map(|&s| Segment {
            start: s,
            end: s + len,
            own_start: s,
            own_end: s + len,
        })
        .collect();
    for k in 1..out.len() {
        let mid = (out[k].start + out[k - 1].end) / 2;
        out[k - 1].own_end = mid;
        out[k].own_start = mid;
    }
    out
}

/// `tonic + driver * kernel` on the decomposition's grid.
pub fn reconstruct(dec: &EdaDecomposition, kernel: &BatemanKernel) -> Result<TimeSeries> {
    if dec.tonic.len() != dec.driver.len() {
        return Err(Error::LengthMismatch(format!(
            "tonic has {} samples, driver {}",
            dec.tonic.len(),
            dec.driver.len()
        )));
    }
    let phasic = kernel.convolve(dec.driver.values(), dec.driver.sampling_rate_hz());
    let values = dec
        .tonic
        .values()
        .iter()
        .zip(&phasic)
        .map(|(t, p)| t + p)
        .collect();
    dec.tonic.with_values(values)
}

/// One event per burst of driver activity.
///
/// Bursts are runs where the driver mass in a `smoothing_s` window exceeds
/// `driver_threshold_us`, merged when closer than `min_separation_s`. An
/// event's onset is the mass-weighted centre of its burst; its amplitude is
/// the peak of the burst's own phasic response above the phasic value at
/// onset, so tails of earlier responses do not bias it.
pub fn detect_scr_events(dec: &EdaDecomposition, cfg: &ScrConfig) -> Vec<ScrEvent> {
    let fs = dec.driver.sampling_rate_hz();
    let d = dec.driver.values();
    let n = d.len();
    let width = ((cfg.smoothing_s * fs).round() as usize).max(1);
    let smoothed = dsp::moving_sum(d, width);

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if smoothed[i] > cfg.driver_threshold_us {
            let start = i;
            while i < n && smoothed[i] > cfg.driver_threshold_us {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    let gap = (cfg.min_separation_s * fs).round() as usize;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for r in runs {
        match merged.last_mut() {
            Some(last) if r.0 < last.1 + gap => last.1 = r.1,
            _ => merged.push(r),
        }
    }

    let footprint = (dec.kernel.duration_s * fs).ceil() as usize;
    merged
        .into_iter()
        .filter_map(|(lo, hi)| {
            let burst = &d[lo..hi];
            let mass: f64 = burst.iter().sum();
            if mass <= 0.0 {
                return None;
            }
            let centroid =
                lo as f64 + burst.iter().enumerate().map(|(k, v)| k as f64 * v).sum::<f64>() / mass;
            let mut local = burst.to_vec();
            local.resize(hi - lo + footprint, 0.0);
            let response = dec.kernel.convolve(&local, fs);
            let (k, &peak) = response
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))?;
            let offset = if k > 0 && k + 1 < response.len() {
                dsp::parabolic_offset(response[k - 1], peak, response[k + 1])
            } else {
                0.0
            };
            let onset_at = response[0];
            Some(ScrEvent {
                onset_s: dec.driver.start_s() + centroid / fs,
                peak_s: dec.driver.start_s() + (lo as f64 + k as f64 + offset) / fs,
                amplitude_us: peak - onset_at,
            })
        })
        .filter(|e| e.amplitude_us >= cfg.amplitude_threshold_us && e.peak_s > e.onset_s)
        .collect()
}

/// `onset_s,peak_s,amplitude_uS` records.
pub fn write_events(events: &[ScrEvent], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    w.write_record(["onset_s", "peak_s", "amplitude_uS"])
        .map_err(|e| Error::parse(path, e))?;
    for e in events {
        w.write_record([
            e.onset_s.to_string(),
            e.peak_s.to_string(),
            e.amplitude_us.to_string(),
        ])
        .map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<ScrEvent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::parse(path, "missing field"))?
                    .parse()
                    .map_err(|e| Error::parse(path, e))
            };
            Ok(ScrEvent {
                onset_s: f(0)?,
                peak_s: f(1)?,
                amplitude_us: f(2)?,
            })
        })
        .collect()
}
