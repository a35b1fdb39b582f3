//! Per-window physiological features and slope analyses.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cardiac::{hr_stats, HrSeries, HrStats};
use crate::dsp::linear_fit;
use crate::eda::ScrEvent;
use crate::emg::EmgBurst;
use crate::error::{Error, Result};
use crate::markers::SessionMarkers;
use crate::series::Window;

/// Event count and mean amplitude inside a window. The mean is 0 when the
/// count is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventStats {
    pub count: usize,
    pub mean_amplitude: f64,
}

impl EventStats {
    fn from_amplitudes(amplitudes: impl Iterator<Item = f64>) -> Self {
        let (count, sum) = amplitudes.fold((0usize, 0.0), |(n, s), a| (n + 1, s + a));
        Self {
            count,
            mean_amplitude: if count == 0 { 0.0 } else { sum / count as f64 },
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// The eight per-window features. A `None` group means the channel was not
/// recorded; it is written as `NA`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
    pub hr: Option<HrStats>,
    /// Informational only: BVP-derived heart rate.
    pub bvp_hr: Option<HrStats>,
    pub gsr: Option<EventStats>,
    pub emg: Option<EventStats>,
}

/// Already-processed channels for one session. Absent channels stay `None`.
#[derive(Debug, Clone, Default)]
pub struct SessionSignals {
    pub ecg_hr: Option<HrSeries>,
    pub bvp_hr: Option<HrSeries>,
    pub scr_events: Option<Vec<ScrEvent>>,
    pub emg_bursts: Option<Vec<EmgBurst>>,
}

/// Events are assigned to a window by their peak time.
pub fn extract_features(signals: &SessionSignals, w: &Window) -> Result<FeatureVector> {
    let hr = signals.ecg_hr.as_ref().map(|h| hr_stats(h, w)).transpose()?;
    let bvp_hr = signals.bvp_hr.as_ref().map(|h| hr_stats(h, w)).transpose()?;
    let gsr = signals.scr_events.as_ref().map(|ev| {
        EventStats::from_amplitudes(
            ev.iter()
                .filter(|e| w.contains(e.peak_s))
                .map(|e| e.amplitude_us),
        )
    });
    let emg = signals.emg_bursts.as_ref().map(|b| {
        EventStats::from_amplitudes(
            b.iter()
                .filter(|b| w.contains(burst_peak_time(b)))
                .map(|b| b.peak_amplitude_mv),
        )
    });
    Ok(FeatureVector {
        label: w.label.clone(),
        start_s: w.start_s,
        end_s: w.end_s,
        hr,
        bvp_hr,
        gsr,
        emg,
    })
}

/// Bursts carry no peak instant; their midpoint stands in for it.
fn burst_peak_time(b: &EmgBurst) -> f64 {
    0.5 * (b.start_s + b.end_s)
}

/// One row per scenario, each test scenario followed by its seven levels.
pub fn feature_table(signals: &SessionSignals, markers: &SessionMarkers) -> Result<Vec<FeatureVector>> {
    markers.validate()?;
    let mut rows = Vec::new();
    for sc in &markers.scenarios {
        rows.push(extract_features(signals, &sc.window())?);
        for w in markers.level_windows(&sc.id) {
            rows.push(extract_features(signals, &w)?);
        }
    }
    Ok(rows)
}

pub const FEATURE_COLUMNS: [&str; 11] = [
    "label",
    "start_s",
    "end_s",
    "hr_mean_bpm",
    "hr_std_bpm",
    "bvp_hr_mean_bpm",
    "bvp_hr_std_bpm",
    "gsr_peak_count",
    "gsr_peak_mean_amplitude_uS",
    "emg_burst_count",
    "emg_burst_mean_amplitude_mV",
];

fn na_pair<T>(v: Option<T>, f: impl Fn(T) -> (String, String)) -> [String; 2] {
    match v {
        Some(x) => {
            let (a, b) = f(x);
            [a, b]
        }
        None => ["NA".into(), "NA".into()],
    }
}

impl FeatureVector {
    pub fn csv_fields(&self) -> Vec<String> {
        let hr = |s: HrStats| (s.hr_mean_bpm.to_string(), s.hr_std_bpm.to_string());
        let ev = |s: EventStats| (s.count.to_string(), s.mean_amplitude.to_string());
        let mut out = vec![self.label.clone(), self.start_s.to_string(), self.end_s.to_string()];
        out.extend(na_pair(self.hr, hr));
        out.extend(na_pair(self.bvp_hr, hr));
        out.extend(na_pair(self.gsr, ev));
        out.extend(na_pair(self.emg, ev));
        out
    }
}

pub fn write_feature_table(rows: &[FeatureVector], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURE_COLUMNS)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_feature_table(rows: &[FeatureVector], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_table(rows, file).map_err(|e| Error::parse(path, e))
}

/// Least-squares line; `slope` is in units per second and `intercept` is the
/// value at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

fn fit(t: &[f64], y: &[f64], what: &str) -> Result<SlopeFit> {
    linear_fit(t, y)
        .map(|(slope, intercept, rms_residual)| SlopeFit {
            slope,
            intercept,
            rms_residual,
        })
        .ok_or_else(|| {
            Error::InsufficientData(format!(
                "{what}: need at least two distinct times, got {}",
                t.len()
            ))
        })
}

/// Degree-one fit of heart rate (bpm) against time over the unflagged
/// samples in `w`.
pub fn hr_slope(hr: &HrSeries, w: &Window) -> Result<SlopeFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = hr.in_window(w).unzip();
    fit(&t, &y, "HR slope")
}

/// Degree-one fit of the running sum of SCR amplitudes, sampled at each
/// event's peak time.
pub fn gsr_cumulative_slope(scrs: &[ScrEvent], w: &Window) -> Result<SlopeFit> {
    let mut inside: Vec<&ScrEvent> = scrs.iter().filter(|e| w.contains(e.peak_s)).collect();
    inside.sort_by(|a, b| a.peak_s.total_cmp(&b.peak_s));
    let t: Vec<f64> = inside.iter().map(|e| e.peak_s).collect();
    let y: Vec<f64> = inside
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e.amplitude_us;
            Some(*acc)
        })
        .collect();
    fit(&t, &y, "GSR cumulative slope")
}
