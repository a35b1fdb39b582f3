//! Surface EMG: RMS envelope and threshold burst detection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{mean_std, moving_average};
use crate::error::{Error, Result};
use crate::series::{ChannelKind, TimeSeries, Window};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmgConfig {
    pub envelope_window_s: f64,
    /// Threshold is baseline mean plus this many baseline standard deviations.
    pub threshold_k: f64,
    pub min_duration_s: f64,
    /// Baseline span measured from the start of the series.
    pub baseline_s: f64,
}

impl Default for EmgConfig {
    fn default() -> Self {
        Self {
            envelope_window_s: 0.1,
            threshold_k: 3.0,
            min_duration_s: 0.2,
            baseline_s: 240.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgBurst {
    pub start_s: f64,
    pub end_s: f64,
    #[serde(rename = "peak_amplitude_mV")]
    pub peak_amplitude_mv: f64,
}

/// Moving RMS of the rectified signal over a centered window.
pub fn emg_envelope(series: &TimeSeries, window_s: f64) -> Result<TimeSeries> {
    series.expect_kind(ChannelKind::Emg)?;
    if !(window_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "envelope window must be positive, got {window_s}"
        )));
    }
    let width = ((window_s * series.sampling_rate_hz()).round() as usize).max(1);
    if series.len() < width {
        return Err(Error::TooShort {
            needed_s: window_s,
            actual_s: series.duration_s(),
        });
    }
    let squared: Vec<f64> = series.values().iter().map(|v| v * v).collect();
    let env = moving_average(&squared, width)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    series.with_values(env)
}

/// Contiguous runs where the envelope exceeds the baseline threshold for at
/// least the minimum duration.
pub fn detect_bursts(envelope: &TimeSeries, cfg: &EmgConfig) -> Result<Vec<EmgBurst>> {
    let baseline = Window::new(
        envelope.start_s(),
        envelope.start_s() + cfg.baseline_s.min(envelope.duration_s()),
        "baseline",
    )?;
    detect_bursts_with_baseline(envelope, &baseline, cfg)
}

pub fn detect_bursts_with_baseline(
    envelope: &TimeSeries,
    baseline: &Window,
    cfg: &EmgConfig,
) -> Result<Vec<EmgBurst>> {
    envelope.expect_kind(ChannelKind::Emg)?;
    let range = envelope.index_range(baseline.start_s, baseline.end_s);
    if range.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "baseline [{}, {}) holds fewer than two envelope samples",
            baseline.start_s, baseline.end_s
        )));
    }
    let (mean, std) = mean_std(&envelope.values()[range]);
    let threshold = mean + cfg.threshold_k * std;
    let min_len = (cfg.min_duration_s * envelope.sampling_rate_hz()).round() as usize;

    let v = envelope.values();
    let mut bursts = Vec::new();
    let mut i = 0;
    while i < v.len() {
        if v[i] <= threshold {
            i += 1;
            continue;
        }
        let start = i;
        let mut peak = v[i];
        while i < v.len() && v[i] > threshold {
            peak = peak.max(v[i]);
            i += 1;
        }
        if i - start >= min_len.max(1) {
            bursts.push(EmgBurst {
                start_s: envelope.time_at(start),
                end_s: envelope.time_at(start) + (i - start) as f64 * envelope.dt(),
                peak_amplitude_mv: peak,
            });
        }
    }
    Ok(bursts)
}

pub fn write_bursts(bursts: &[EmgBurst], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    for b in bursts {
        w.serialize(b).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_bursts(path: &Path) -> Result<Vec<EmgBurst>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::parse(path, e)))
        .collect()
}
