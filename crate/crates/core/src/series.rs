//! Uniformly sampled channels and time windows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractional-sample slack used when mapping window edges onto sample indices.
const INDEX_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChannelKind {
    Ecg,
    Bvp,
    Gsr,
    Emg,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 4] = [
        ChannelKind::Ecg,
        ChannelKind::Bvp,
        ChannelKind::Gsr,
        ChannelKind::Emg,
    ];

    /// Default acquisition rate used by the synthetic generator and the CLI.
    pub fn default_rate_hz(self) -> f64 {
        match self {
            ChannelKind::Ecg | ChannelKind::Emg => 512.0,
            ChannelKind::Bvp | ChannelKind::Gsr => 128.0,
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            ChannelKind::Ecg | ChannelKind::Emg => "mV",
            ChannelKind::Gsr => "uS",
            ChannelKind::Bvp => "au",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Ecg => "ECG",
            ChannelKind::Bvp => "BVP",
            ChannelKind::Gsr => "GSR",
            ChannelKind::Emg => "EMG",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ECG" => Ok(ChannelKind::Ecg),
            "BVP" => Ok(ChannelKind::Bvp),
            "GSR" | "EDA" => Ok(ChannelKind::Gsr),
            "EMG" => Ok(ChannelKind::Emg),
            other => Err(Error::InvalidConfig(format!("unknown channel kind {other:?}"))),
        }
    }
}

/// A uniformly sampled channel. Sample `i` sits at `start_s + i / sampling_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    kind: ChannelKind,
    sampling_rate_hz: f64,
    start_s: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(
        kind: ChannelKind,
        sampling_rate_hz: f64,
        start_s: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(sampling_rate_hz > 0.0 && sampling_rate_hz.is_finite()) {
            return Err(Error::InvalidRate(sampling_rate_hz));
        }
        if !start_s.is_finite() {
            return Err(Error::InvalidSeries("start time is not finite".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidSeries("series has no samples".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("sample {i} is not finite")));
        }
        Ok(Self {
            kind,
            sampling_rate_hz,
            start_s,
            values,
        })
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sampling_rate_hz
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.start_s + i as f64 / self.sampling_rate_hz
    }

    /// Exclusive end of the sampled span.
    pub fn end_s(&self) -> f64 {
        self.time_at(self.values.len())
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.sampling_rate_hz
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.time_at(i))
    }

    /// Same grid, new samples.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} samples for a grid of {}",
                values.len(),
                self.values.len()
            )));
        }
        TimeSeries::new(self.kind, self.sampling_rate_hz, self.start_s, values)
    }

    pub(crate) fn expect_kind(&self, expected: ChannelKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::WrongChannel {
                expected,
                actual: self.kind,
            });
        }
        Ok(())
    }

    /// Index range of the samples with `start <= t < end`.
    pub fn index_range(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let n = self.values.len();
        let to_index = |t: f64| {
            let x = ((t - self.start_s) * self.sampling_rate_hz - INDEX_EPS).ceil();
            x.clamp(0.0, n as f64) as usize
        };
        let lo = to_index(start);
        let hi = to_index(end).max(lo);
        lo..hi
    }
}

/// Half-open interval `[start_s, end_s)` with a free-text label such as `II/level-3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub label: String,
}

impl Window {
    pub fn new(start_s: f64, end_s: f64, label: impl Into<String>) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite() && end_s > start_s) {
            return Err(Error::InvalidWindow {
                start: start_s,
                end: end_s,
            });
        }
        Ok(Self {
            start_s,
            end_s,
            label: label.into(),
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }

    pub fn intersect(&self, other: &Window) -> Option<Window> {
        let start = self.start_s.max(other.start_s);
        let end = self.end_s.min(other.end_s);
        (end > start).then(|| Window {
            start_s: start,
            end_s: end,
            label: self.label.clone(),
        })
    }
}

/// Samples of `series` with `w.start_s <= t < w.end_s`.
pub fn slice_window(series: &TimeSeries, w: &Window) -> Result<TimeSeries> {
    let range = series.index_range(w.start_s, w.end_s);
    if range.is_empty() {
        return Err(Error::EmptyIntersection {
            start: w.start_s,
            end: w.end_s,
        });
    }
    Ok(TimeSeries {
        kind: series.kind,
        sampling_rate_hz: series.sampling_rate_hz,
        start_s: series.time_at(range.start),
        values: series.values[range].to_vec(),
    })
}
