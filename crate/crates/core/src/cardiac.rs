//! Heartbeat detection from ECG and BVP, heart-rate series and HR/HRV statistics.
//!
//! Both detectors share one adaptive-threshold peak classifier: running
//! estimates of signal-peak and noise-peak levels, a threshold a quarter of
//! the way between them, a refractory period, and a search-back pass at half
//! threshold when no beat has been seen for 1.66 mean RR intervals.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{self, ZeroPhaseFilter};
use crate::error::{Error, Result};
use crate::series::{ChannelKind, TimeSeries, Window};

/// Physiologically plausible RR range; intervals outside are flagged.
pub const RR_MIN_S: f64 = 0.3;
pub const RR_MAX_S: f64 = 2.0;

const MIN_DURATION_S: f64 = 2.0;
const LEARNING_S: f64 = 2.0;
const SEARCH_BACK_FACTOR: f64 = 1.66;
/// Grid step used to resample HR series before comparing them.
const AGREEMENT_STEP_S: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BeatSource {
    Ecg,
    Bvp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeatSeries {
    beat_times_s: Vec<f64>,
    source: BeatSource,
}

impl BeatSeries {
    pub fn new(beat_times_s: Vec<f64>, source: BeatSource) -> Result<Self> {
        if beat_times_s.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSeries("non-finite beat time".into()));
        }
        if beat_times_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(
                "beat times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            beat_times_s,
            source,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.beat_times_s
    }

    pub fn source(&self) -> BeatSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.beat_times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beat_times_s.is_empty()
    }

    pub fn rr_intervals(&self) -> Vec<f64> {
        self.beat_times_s.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// One flag per RR interval, set when it falls outside the plausible range.
    pub fn rr_flags(&self) -> Vec<bool> {
        self.rr_intervals()
            .iter()
            .map(|rr| !(RR_MIN_S..=RR_MAX_S).contains(rr))
            .collect()
    }

    /// `t_s` header followed by one beat time per line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::from("t_s\n");
        for t in &self.beat_times_s {
            let _ = writeln!(text, "{t}");
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, source: BeatSource) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("t_s") {
            return Err(Error::parse(path, "expected header `t_s`"));
        }
        let times = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        BeatSeries::new(times, source)
    }
}

/// Instantaneous heart rate, one sample per RR interval, stamped at the
/// interval's closing beat.
#[derive(Debug, Clone, PartialEq)]
pub struct HrSeries {
    pub times_s: Vec<f64>,
    pub hr_bpm: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl HrSeries {
    pub fn len(&self) -> usize {
        self.hr_bpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hr_bpm.is_empty()
    }

    /// Unflagged `(t, hr)` pairs with `t` in `w`.
    pub fn in_window<'a>(&'a self, w: &'a Window) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.times_s
            .iter()
            .zip(&self.hr_bpm)
            .zip(&self.flagged)
            .filter(move |((t, _), flag)| !**flag && w.contains(**t))
            .map(|((t, h), _)| (*t, *h))
    }

    fn valid_points(&self) -> (Vec<f64>, Vec<f64>) {
        self.times_s
            .iter()
            .zip(&self.hr_bpm)
            .zip(&self.flagged)
            .filter(|(_, flag)| !**flag)
            .map(|((t, h), _)| (*t, *h))
            .unzip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Moving-window integration length; unused by the BVP detector.
    pub integration_s: f64,
    pub refractory_s: f64,
}

impl DetectorConfig {
    pub fn ecg() -> Self {
        Self {
            low_hz: 5.0,
            high_hz: 15.0,
            integration_s: 0.150,
            refractory_s: 0.250,
        }
    }

    pub fn bvp() -> Self {
        Self {
            low_hz: 0.5,
            high_hz: 5.0,
            integration_s: 0.150,
            refractory_s: 0.300,
        }
    }
}

/// R-peak detection: bandpass, derivative, squaring, moving-window
/// integration, adaptive threshold. Beats are located on the bandpassed ECG.
pub fn detect_r_peaks(series: &TimeSeries, cfg: &DetectorConfig) -> Result<BeatSeries> {
    series.expect_kind(ChannelKind::Ecg)?;
    check_duration(series)?;
    let fs = series.sampling_rate_hz();
    let filtered = ZeroPhaseFilter::bandpass(cfg.low_hz, cfg.high_hz, fs)
        .apply(series.values(), fs.round() as usize);

    let n = filtered.len();
    let at = |i: isize| filtered[i.clamp(0, n as isize - 1) as usize];
    let energy: Vec<f64> = (0..n as isize)
        .map(|i| {
            let d = (2.0 * at(i + 2) + at(i + 1) - at(i - 1) - 2.0 * at(i - 2)) * fs / 8.0;
            d * d
        })
        .collect();
    let width = ((cfg.integration_s * fs).round() as usize).max(1);
    let integrated = dsp::moving_average(&energy, width);

    let detections = classify_peaks(&integrated, fs, cfg.refractory_s);
    let half = width as isize;
    let located = detections
        .into_iter()
        .map(|k| {
            let lo = (k as isize - half).max(0) as usize;
            let hi = ((k as isize + half) as usize).min(n - 1);
            argmax(&filtered, lo, hi)
        })
        .collect::<Vec<_>>();
    finish(series, &filtered, located, cfg.refractory_s, BeatSource::Ecg)
}

/// Pulse-wave maxima on the bandpassed BVP with the same adaptive threshold.
pub fn detect_bvp_peaks(series: &TimeSeries, cfg: &DetectorConfig) -> Result<BeatSeries> {
    series.expect_kind(ChannelKind::Bvp)?;
    check_duration(series)?;
    let fs = series.sampling_rate_hz();
    let filtered = ZeroPhaseFilter::bandpass(cfg.low_hz, cfg.high_hz, fs)
        .apply(series.values(), (2.0 * fs).round() as usize);
    let positive: Vec<f64> = filtered.iter().map(|v| v.max(0.0)).collect();
    let detections = classify_peaks(&positive, fs, cfg.refractory_s);
    finish(series, &filtered, detections, cfg.refractory_s, BeatSource::Bvp)
}

fn check_duration(series: &TimeSeries) -> Result<()> {
    if series.duration_s() < MIN_DURATION_S {
        return Err(Error::TooShort {
            needed_s: MIN_DURATION_S,
            actual_s: series.duration_s(),
        });
    }
    Ok(())
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..=hi).fold(lo, |best, i| if x[i] > x[best] { i } else { best })
}

/// Refines sample indices to sub-sample times, then enforces the refractory
/// period by keeping the larger of any two beats that ended up too close.
fn finish(
    series: &TimeSeries,
    shape: &[f64],
    mut idx: Vec<usize>,
    refractory_s: f64,
    source: BeatSource,
) -> Result<BeatSeries> {
    idx.sort_unstable();
    idx.dedup();
    let fs = series.sampling_rate_hz();
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
    for i in idx {
        let offset = if i > 0 && i + 1 < shape.len() {
            dsp::parabolic_offset(shape[i - 1], shape[i], shape[i + 1])
        } else {
            0.0
        };
        let t = series.start_s() + (i as f64 + offset) / fs;
        let amp = shape[i];
        match kept.last_mut() {
            Some(last) if t - last.0 < refractory_s => {
                if amp > last.1 {
                    *last = (t, amp);
                }
            }
            _ => kept.push((t, amp)),
        }
    }
    BeatSeries::new(kept.into_iter().map(|(t, _)| t).collect(), source)
}

/// Adaptive signal/noise threshold classification of the local maxima of a
/// nonnegative feature signal. Returns indices of accepted peaks.
fn classify_peaks(feature: &[f64], fs: f64, refractory_s: f64) -> Vec<usize> {
    let n = feature.len();
    let global_max = feature.iter().copied().fold(0.0, f64::max);
    if n < 3 || global_max <= 1e-12 {
        return Vec::new();
    }
    let floor = global_max * 1e-6;
    let candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| feature[i] > floor && feature[i] > feature[i - 1] && feature[i] >= feature[i + 1])
        .collect();

    let learn = ((LEARNING_S * fs) as usize).clamp(1, n);
    let head = &feature[..learn];
    let mut spk = head.iter().copied().fold(0.0, f64::max) / 3.0;
    let mut npk = head.iter().sum::<f64>() / learn as f64 / 2.0;
    let refractory = (refractory_s * fs).round() as usize;

    let mut beats: Vec<usize> = Vec::new();
    let mut rr_recent: Vec<f64> = Vec::new();
    let mut since_last: Vec<usize> = Vec::new();

    for &c in &candidates {
        let pk = feature[c];
        let threshold = npk + 0.25 * (spk - npk);

        // Search back for a missed beat when the gap has grown too long.
        if let (Some(&last), true) = (beats.last(), rr_recent.len() >= 2) {
            let mean_rr = rr_recent.iter().sum::<f64>() / rr_recent.len() as f64;
            let gap = (c - last) as f64 / fs;
            if gap > SEARCH_BACK_FACTOR * mean_rr {
                let half = 0.5 * threshold;
                let best = since_last
                    .iter()
                    .copied()
                    .filter(|&i| i >= last + refractory && c >= i + refractory && feature[i] > half)
                    .max_by(|&a, &b| feature[a].total_cmp(&feature[b]));
                if let Some(b) = best {
                    spk = 0.25 * feature[b] + 0.75 * spk;
                    push_rr(&mut rr_recent, (b - last) as f64 / fs);
                    beats.push(b);
                    since_last.clear();
                }
            }
        }

        let clear = beats.last().is_none_or(|&last| c >= last + refractory);
        if pk > threshold && clear {
            spk = 0.125 * pk + 0.875 * spk;
            if let Some(&last) = beats.last() {
                push_rr(&mut rr_recent, (c - last) as f64 / fs);
            }
            beats.push(c);
            since_last.clear();
        } else {
            npk = 0.125 * pk + 0.875 * npk;
            since_last.push(c);
        }
    }
    beats
}

fn push_rr(recent: &mut Vec<f64>, rr: f64) {
    if (RR_MIN_S..=RR_MAX_S).contains(&rr) {
        recent.push(rr);
        if recent.len() > 8 {
            recent.remove(0);
        }
    }
}

/// `hr[i] = 60 / (beat[i+1] - beat[i])`, stamped at `beat[i+1]`.
pub fn beats_to_hr(beats: &BeatSeries) -> Result<HrSeries> {
    if beats.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 beats, got {}",
            beats.len()
        )));
    }
    let t = beats.times();
    let rr = beats.rr_intervals();
    Ok(HrSeries {
        times_s: t[1..].to_vec(),
        hr_bpm: rr.iter().map(|rr| 60.0 / rr).collect(),
        flagged: beats.rr_flags(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrStats {
    pub hr_mean_bpm: f64,
    pub hr_std_bpm: f64,
}

/// Mean and population standard deviation of the unflagged HR samples in `w`.
pub fn hr_stats(hr: &HrSeries, w: &Window) -> Result<HrStats> {
    let values: Vec<f64> = hr.in_window(w).map(|(_, h)| h).collect();
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} HR samples in window {}",
            values.len(),
            w.label
        )));
    }
    let (hr_mean_bpm, hr_std_bpm) = dsp::mean_std(&values);
    Ok(HrStats {
        hr_mean_bpm,
        hr_std_bpm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub mean_abs_diff_bpm: f64,
}

/// Mean absolute difference between two HR series, both linearly
/// interpolated onto a common 4 Hz grid over the part of `w` they both cover.
pub fn cardiac_agreement(ecg_hr: &HrSeries, bvp_hr: &HrSeries, w: &Window) -> Result<Agreement> {
    let (ta, ya) = ecg_hr.valid_points();
    let (tb, yb) = bvp_hr.valid_points();
    let uncovered = || Error::EmptyIntersection {
        start: w.start_s,
        end: w.end_s,
    };
    if ta.is_empty() || tb.is_empty() {
        return Err(uncovered());
    }
    let lo = w.start_s.max(ta[0]).max(tb[0]);
    let hi = w.end_s.min(ta[ta.len() - 1]).min(tb[tb.len() - 1]);
    if hi <= lo {
        return Err(uncovered());
    }
    let steps = ((hi - lo) / AGREEMENT_STEP_S).floor() as usize;
    let total: f64 = (0..=steps)
        .map(|k| {
            let t = lo + k as f64 * AGREEMENT_STEP_S;
            (interp(&ta, &ya, t) - interp(&tb, &yb, t)).abs()
        })
        .sum();
    Ok(Agreement {
        mean_abs_diff_bpm: total / (steps + 1) as f64,
    })
}

fn interp(t: &[f64], y: &[f64], at: f64) -> f64 {
    let i = t.partition_point(|&x| x <= at);
    if i == 0 {
        return y[0];
    }
    if i == t.len() {
        return y[t.len() - 1];
    }
    let f = (at - t[i - 1]) / (t[i] - t[i - 1]);
    y[i - 1] + f * (y[i] - y[i - 1])
}
