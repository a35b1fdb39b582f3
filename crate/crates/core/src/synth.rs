//! Seeded synthetic recordings with known ground truth, used to verify every
//! detector and the end-to-end pipeline.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cardiac::{BeatSeries, BeatSource};
use crate::dsp::{rms, ZeroPhaseFilter};
use crate::eda::{write_events, BatemanKernel, ScrEvent};
use crate::emg::{write_bursts, EmgBurst};
use crate::error::{Error, Result};
use crate::ingest::{write_series, ChannelManifest, ManifestEntry};
use crate::markers::{default_markers, ScenarioKind, SessionMarkers, LEVELS};
use crate::protocol::{
    generate_math_plan, generate_stroop_plan, Color, LogRecord, Payload, SessionLog,
    StimulusPlan,
};
use crate::series::{ChannelKind, TimeSeries};

const HR_MIN_BPM: f64 = 30.0;
const HR_MAX_BPM: f64 = 200.0;
const ECG_BUMP_SIGMA_S: f64 = 0.010;
const EMG_RAMP_S: f64 = 0.010;

// Independent random streams per channel so that changing one channel's
// settings leaves the others untouched.
const STREAM_ECG: u64 = 1;
const STREAM_BVP: u64 = 2;
const STREAM_GSR: u64 = 3;
const STREAM_EMG: u64 = 4;
const STREAM_SESSION: u64 = 5;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Heart rate as a piecewise-linear function of time, held constant outside
/// the knot range, plus an optional sinusoidal modulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrProfile {
    /// `(time_s, bpm)` knots with strictly increasing times.
    pub knots: Vec<(f64, f64)>,
    #[serde(default)]
    pub modulation_bpm: f64,
    #[serde(default = "default_modulation_hz")]
    pub modulation_hz: f64,
}

fn default_modulation_hz() -> f64 {
    0.1
}

impl HrProfile {
    pub fn constant(bpm: f64) -> Self {
        Self {
            knots: vec![(0.0, bpm)],
            modulation_bpm: 0.0,
            modulation_hz: default_modulation_hz(),
        }
    }

    pub fn ramp(t0: f64, bpm0: f64, t1: f64, bpm1: f64) -> Self {
        Self {
            knots: vec![(t0, bpm0), (t1, bpm1)],
            ..Self::constant(bpm0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.knots.is_empty() {
            return bad("HR profile has no knots".into());
        }
        if self.knots.windows(2).any(|p| p[1].0 <= p[0].0) {
            return bad("HR knot times must strictly increase".into());
        }
        let m = self.modulation_bpm.abs();
        for &(t, bpm) in &self.knots {
            if !t.is_finite() || !(bpm - m > HR_MIN_BPM && bpm + m < HR_MAX_BPM) {
                return bad(format!(
                    "HR {bpm} ± {m} bpm at {t} s leaves ({HR_MIN_BPM}, {HR_MAX_BPM})"
                ));
            }
        }
        if m > 0.0 && !(self.modulation_hz > 0.0) {
            return bad("modulation frequency must be positive".into());
        }
        Ok(())
    }

    pub fn bpm_at(&self, t: f64) -> f64 {
        self.base_bpm(t) + self.modulation_bpm * (2.0 * PI * self.modulation_hz * t).sin()
    }

    fn base_bpm(&self, t: f64) -> f64 {
        let k = &self.knots;
        match k.partition_point(|&(kt, _)| kt <= t) {
            0 => k[0].1,
            i if i == k.len() => k[k.len() - 1].1,
            i => {
                let (t0, h0) = k[i - 1];
                let (t1, h1) = k[i];
                h0 + (h1 - h0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Beats elapsed since t = 0: the integral of `bpm / 60`.
    pub fn phase_at(&self, t: f64) -> f64 {
        let mut beats = 0.0;
        let mut prev_t = 0.0f64.min(t);
        let mut prev_h = self.base_bpm(prev_t);
        for &(kt, kh) in &self.knots {
            if kt > prev_t && kt < t {
                beats += 0.5 * (prev_h + kh) * (kt - prev_t) / 60.0;
                prev_t = kt;
                prev_h = kh;
            }
        }
        beats += 0.5 * (prev_h + self.base_bpm(t)) * (t - prev_t) / 60.0;
        if self.modulation_bpm != 0.0 {
            let w = 2.0 * PI * self.modulation_hz;
            beats += self.modulation_bpm / 60.0 * (1.0 - (w * t).cos()) / w;
        }
        beats
    }

    /// Beat `k` falls where the phase reaches `k + 1/2`.
    pub fn beat_times(&self, duration_s: f64) -> Vec<f64> {
        let total = self.phase_at(duration_s);
        let mut out = Vec::with_capacity(total as usize + 1);
        let mut lo = 0.0;
        let mut k = 0.5;
        while k < total {
            // Rate stays above 30 bpm, so the next beat is under 2 s away.
            let mut a = lo;
            let mut b = (lo + 2.0 * 60.0 / HR_MIN_BPM).min(duration_s);
            for _ in 0..64 {
                let mid = 0.5 * (a + b);
                if self.phase_at(mid) < k {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let t = 0.5 * (a + b);
            out.push(t);
            lo = t;
            k += 1.0;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeededScr {
    pub time_s: f64,
    pub amplitude_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeededBurst {
    pub start_s: f64,
    pub end_s: f64,
    #[serde(rename = "amplitude_mV")]
    pub amplitude_mv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRates {
    pub ecg_hz: f64,
    pub bvp_hz: f64,
    pub gsr_hz: f64,
    pub emg_hz: f64,
}

impl Default for SamplingRates {
    fn default() -> Self {
        Self {
            ecg_hz: ChannelKind::Ecg.default_rate_hz(),
            bvp_hz: ChannelKind::Bvp.default_rate_hz(),
            gsr_hz: ChannelKind::Gsr.default_rate_hz(),
            emg_hz: ChannelKind::Emg.default_rate_hz(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub duration_s: f64,
    pub rates: SamplingRates,
    pub hr: HrProfile,
    pub ecg_snr_db: Option<f64>,
    pub bvp_snr_db: Option<f64>,
    pub gsr_tonic_us: f64,
    pub gsr_drift_us_per_s: f64,
    pub gsr_events: Vec<SeededScr>,
    /// Measured against the RMS of the phasic part.
    pub gsr_snr_db: Option<f64>,
    pub kernel: BatemanKernel,
    pub emg_baseline_mv: f64,
    pub emg_bursts: Vec<SeededBurst>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: 60.0,
            rates: SamplingRates::default(),
            hr: HrProfile::constant(60.0),
            ecg_snr_db: None,
            bvp_snr_db: None,
            gsr_tonic_us: 2.0,
            gsr_drift_us_per_s: 0.0,
            gsr_events: Vec::new(),
            gsr_snr_db: None,
            kernel: BatemanKernel::default(),
            emg_baseline_mv: 0.01,
            emg_bursts: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        self.hr.validate()?;
        self.kernel.validate()?;
        for e in &self.gsr_events {
            if !(0.0..self.duration_s).contains(&e.time_s) {
                return bad(format!("SCR at {} s lies outside the recording", e.time_s));
            }
            if !(e.amplitude_us > 0.0 && e.amplitude_us.is_finite()) {
                return bad(format!("SCR amplitude must be positive, got {}", e.amplitude_us));
            }
        }
        let tonic_end = self.gsr_tonic_us + self.gsr_drift_us_per_s * self.duration_s;
        if self.gsr_tonic_us < 0.0 || tonic_end < 0.0 {
            return bad("tonic level must stay nonnegative".into());
        }
        for b in &self.emg_bursts {
            if !(b.start_s >= 0.0 && b.end_s > b.start_s && b.end_s <= self.duration_s) {
                return bad(format!("EMG burst [{}, {}) is invalid", b.start_s, b.end_s));
            }
            if !(b.amplitude_mv > 0.0) {
                return bad(format!("EMG amplitude must be positive, got {}", b.amplitude_mv));
            }
        }
        if self.emg_baseline_mv < 0.0 {
            return bad("EMG baseline must be nonnegative".into());
        }
        Ok(())
    }
}

fn sample_count(duration_s: f64, rate_hz: f64) -> usize {
    (duration_s * rate_hz).round().max(1.0) as usize
}

/// Unit-RMS Gaussian noise restricted to a band.
fn band_noise(n: usize, rate_hz: f64, low_hz: f64, high_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let white: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = ZeroPhaseFilter::bandpass(low_hz, high_hz, rate_hz).apply(&white, 0);
    let r = rms(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v /= r);
    }
    x
}

fn add_noise(x: &mut [f64], reference_rms: f64, snr_db: f64, noise: &[f64]) {
    let scale = reference_rms / 10f64.powf(snr_db / 20.0);
    for (v, e) in x.iter_mut().zip(noise) {
        *v += scale * e;
    }
}

/// Renders `f(t - centre)` for every centre over `[-before, after]`.
fn render(
    n: usize,
    rate_hz: f64,
    centres: &[f64],
    before: impl Fn(usize) -> f64,
    after: impl Fn(usize) -> f64,
    f: impl Fn(usize, f64) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (k, &c) in centres.iter().enumerate() {
        let lo = ((c - before(k)) * rate_hz).floor().max(0.0) as usize;
        let hi = (((c + after(k)) * rate_hz).ceil() as usize).min(n.saturating_sub(1));
        for (i, v) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *v += f(k, i as f64 / rate_hz - c);
        }
    }
    out
}

/// Narrow Gaussian R waves of 1 mV at each beat, plus optional noise in the
/// 0.5-40 Hz band.
pub fn gen_ecg(spec: &SynthSpec) -> Result<(TimeSeries, BeatSeries)> {
    spec.validate()?;
    let fs = spec.rates.ecg_hz;
    let n = sample_count(spec.duration_s, fs);
    let beats = spec.hr.beat_times(spec.duration_s);
    let reach = 6.0 * ECG_BUMP_SIGMA_S;
    let two_var = 2.0 * ECG_BUMP_SIGMA_S * ECG_BUMP_SIGMA_S;
    let mut x = render(n, fs, &beats, |_| reach, |_| reach, |_, dt| (-dt * dt / two_var).exp());
    if let Some(snr) = spec.ecg_snr_db {
        let noise = band_noise(n, fs, 0.5, 40.0, &mut rng_for(spec.seed, STREAM_ECG));
        let r = rms(&x);
        add_noise(&mut x, r, snr, &noise);
    }
    Ok((
        TimeSeries::new(ChannelKind::Ecg, fs, 0.0, x)?,
        BeatSeries::new(beats, BeatSource::Ecg)?,
    ))
}

/// Asymmetric Gaussian pulses peaking at each beat: the rise width is 8% and
/// the decay width 20% of the local beat interval.
pub fn gen_bvp(spec: &SynthSpec) -> Result<(TimeSeries, BeatSeries)> {
    spec.validate()?;
    let fs = spec.rates.bvp_hz;
    let n = sample_count(spec.duration_s, fs);
    let beats = spec.hr.beat_times(spec.duration_s);
    let rr: Vec<f64> = beats.iter().map(|&t| 60.0 / spec.hr.bpm_at(t)).collect();
    let mut x = render(
        n,
        fs,
        &beats,
        |k| 5.0 * 0.08 * rr[k],
        |k| 5.0 * 0.2 * rr[k],
        |k, dt| {
            let s = if dt < 0.0 { 0.08 } else { 0.2 } * rr[k];
            (-dt * dt / (2.0 * s * s)).exp()
        },
    );
    if let Some(snr) = spec.bvp_snr_db {
        let noise = band_noise(n, fs, 0.1, 10.0, &mut rng_for(spec.seed, STREAM_BVP));
        let r = rms(&x);
        add_noise(&mut x, r, snr, &noise);
    }
    Ok((
        TimeSeries::new(ChannelKind::Bvp, fs, 0.0, x)?,
        BeatSeries::new(beats, BeatSource::Bvp)?,
    ))
}

/// Tonic level with linear drift plus one kernel copy per event, optional
/// noise below 5 Hz.
pub fn gen_gsr(spec: &SynthSpec) -> Result<(TimeSeries, Vec<ScrEvent>)> {
    spec.validate()?;
    let fs = spec.rates.gsr_hz;
    let n = sample_count(spec.duration_s, fs);
    let mut events = spec.gsr_events.clone();
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    let kernel = &spec.kernel;
    let times: Vec<f64> = events.iter().map(|e| e.time_s).collect();
    let mut phasic = render(
        n,
        fs,
        &times,
        |_| 0.0,
        // The response is never truncated, matching the analysis model.
        |_| spec.duration_s,
        |k, dt| events[k].amplitude_us * kernel.eval(dt),
    );
    if let Some(snr) = spec.gsr_snr_db {
        let noise = band_noise(n, fs, 0.0, 5.0, &mut rng_for(spec.seed, STREAM_GSR));
        let r = rms(&phasic);
        add_noise(&mut phasic, r, snr, &noise);
    }
    let x: Vec<f64> = phasic
        .iter()
        .enumerate()
        .map(|(i, p)| (spec.gsr_tonic_us + spec.gsr_drift_us_per_s * i as f64 / fs + p).max(0.0))
        .collect();
    let peak = kernel.peak_time_s();
    let truth = events
        .iter()
        .map(|e| ScrEvent {
            onset_s: e.time_s,
            peak_s: e.time_s + peak,
            amplitude_us: e.amplitude_us,
        })
        .collect();
    Ok((TimeSeries::new(ChannelKind::Gsr, fs, 0.0, x)?, truth))
}

/// Band-limited noise whose RMS follows a baseline level, raised to the burst
/// amplitude inside each burst with short raised-cosine edges.
pub fn gen_emg(spec: &SynthSpec) -> Result<(TimeSeries, Vec<EmgBurst>)> {
    spec.validate()?;
    let fs = spec.rates.emg_hz;
    let n = sample_count(spec.duration_s, fs);
    let mut level = vec![spec.emg_baseline_mv; n];
    for b in &spec.emg_bursts {
        let lo = (b.start_s * fs).round() as usize;
        let hi = ((b.end_s * fs).round() as usize).min(n);
        let ramp = EMG_RAMP_S.min(0.25 * (b.end_s - b.start_s));
        for (i, v) in level.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / fs;
            let edge = ((t - b.start_s).min(b.end_s - t) / ramp).min(1.0);
            let w = 0.5 - 0.5 * (PI * edge).cos();
            *v = v.max(w * b.amplitude_mv);
        }
    }
    let carrier = band_noise(n, fs, 20.0, 200.0, &mut rng_for(spec.seed, STREAM_EMG));
    let x = carrier.iter().zip(&level).map(|(c, a)| c * a).collect();
    let mut truth: Vec<EmgBurst> = spec
        .emg_bursts
        .iter()
        .map(|b| EmgBurst {
            start_s: b.start_s,
            end_s: b.end_s,
            peak_amplitude_mv: b.amplitude_mv,
        })
        .collect();
    truth.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok((TimeSeries::new(ChannelKind::Emg, fs, 0.0, x)?, truth))
}

/// How a synthetic subject responds to rising difficulty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressProfile {
    pub name: String,
    pub rest_hr_bpm: f64,
    /// HR rise per level inside each test scenario.
    pub hr_step_bpm: f64,
    pub hr_modulation_bpm: f64,
    pub scr_per_level: [usize; LEVELS as usize],
    pub scr_per_relax: usize,
    pub scr_amplitude_us: (f64, f64),
    pub stroop_accuracy_pct: [f64; LEVELS as usize],
    pub math_accuracy_pct: [f64; LEVELS as usize],
    pub ecg_snr_db: Option<f64>,
    pub bvp_snr_db: Option<f64>,
    pub gsr_snr_db: Option<f64>,
}

/// Mean Stroop accuracy per level reported for the original cohort.
pub const COHORT_STROOP_ACCURACY: [f64; 7] = [99.55, 100.0, 99.55, 98.22, 92.88, 76.88, 52.44];
/// Mean arithmetic accuracy per level reported for the original cohort.
pub const COHORT_MATH_ACCURACY: [f64; 7] = [100.0, 80.61, 82.65, 60.20, 56.12, 43.87, 15.30];

impl StressProfile {
    /// Flat heart rate, no SCRs, perfect performance.
    pub fn calm() -> Self {
        Self {
            name: "calm".into(),
            rest_hr_bpm: 70.0,
            hr_step_bpm: 0.0,
            hr_modulation_bpm: 0.0,
            scr_per_level: [0; 7],
            scr_per_relax: 0,
            scr_amplitude_us: (0.1, 0.5),
            stroop_accuracy_pct: [100.0; 7],
            math_accuracy_pct: [100.0; 7],
            ecg_snr_db: Some(20.0),
            bvp_snr_db: Some(20.0),
            gsr_snr_db: None,
        }
    }

    /// Cohort-mean accuracies, HR rising 70 to 90 bpm across the levels of
    /// each test and one more SCR per level.
    pub fn paper_like() -> Self {
        Self {
            name: "paper-like".into(),
            hr_step_bpm: 20.0 / 6.0,
            hr_modulation_bpm: 1.0,
            scr_per_level: [0, 1, 2, 3, 4, 5, 6],
            scr_per_relax: 1,
            stroop_accuracy_pct: COHORT_STROOP_ACCURACY,
            math_accuracy_pct: COHORT_MATH_ACCURACY,
            gsr_snr_db: Some(30.0),
            ..Self::calm()
        }
    }

    /// Perfect performance until `level`, then a sustained drop, in both tests.
    pub fn planted(level: u8) -> Result<Self> {
        if !(2..=LEVELS).contains(&level) {
            return Err(Error::InvalidSpec(format!(
                "planted decrease level must be in 2..={LEVELS}, got {level}"
            )));
        }
        let acc = std::array::from_fn(|i| if i + 1 < usize::from(level) { 100.0 } else { 55.0 });
        Ok(Self {
            name: format!("planted-{level}"),
            stroop_accuracy_pct: acc,
            math_accuracy_pct: acc,
            ..Self::paper_like()
        })
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "calm" => Ok(Self::calm()),
            "paper-like" => Ok(Self::paper_like()),
            other => match other.strip_prefix("planted-").and_then(|l| l.parse().ok()) {
                Some(level) => Self::planted(level),
                None => Err(Error::InvalidSpec(format!(
                    "unknown profile {other:?} (calm, paper-like, planted-<2..7>)"
                ))),
            },
        }
    }
}

/// A complete synthetic subject aligned to the default markers.
#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub subject_id: String,
    pub seed: u64,
    pub profile: StressProfile,
    pub markers: SessionMarkers,
    pub ecg: TimeSeries,
    pub bvp: TimeSeries,
    pub gsr: TimeSeries,
    pub emg: TimeSeries,
    pub truth_beats: BeatSeries,
    pub truth_scrs: Vec<ScrEvent>,
    pub truth_bursts: Vec<EmgBurst>,
    pub stroop_plan: StimulusPlan,
    pub math_plan: StimulusPlan,
    pub stroop_log: SessionLog,
    pub math_log: SessionLog,
}

fn session_hr(profile: &StressProfile, markers: &SessionMarkers) -> HrProfile {
    let rest = profile.rest_hr_bpm;
    let mut knots = vec![(0.0, rest)];
    for sc in markers.scenarios.iter().filter(|s| s.kind.is_test()) {
        knots.push((sc.start_s, rest));
        for (i, w) in markers.level_windows(&sc.id).iter().enumerate() {
            let centre = 0.5 * (w.start_s + w.end_s);
            knots.push((centre, rest + profile.hr_step_bpm * i as f64));
        }
        let top = rest + profile.hr_step_bpm * f64::from(LEVELS - 1);
        knots.push((sc.end_s, top));
        knots.push((sc.end_s + 10.0, rest));
    }
    knots.dedup_by(|b, a| b.0 <= a.0);
    HrProfile {
        knots,
        modulation_bpm: profile.hr_modulation_bpm,
        modulation_hz: default_modulation_hz(),
    }
}

fn session_scrs(
    profile: &StressProfile,
    markers: &SessionMarkers,
    kernel: &BatemanKernel,
    rng: &mut ChaCha8Rng,
) -> Vec<SeededScr> {
    let peak = kernel.peak_time_s();
    let (lo, hi) = profile.scr_amplitude_us;
    let mut out = Vec::new();
    let mut spread = |start: f64, end: f64, n: usize, rng: &mut ChaCha8Rng| {
        let step = (end - start) / n as f64;
        for j in 0..n {
            let jitter = rng.random_range(-0.3..0.3);
            let peak_at = start + (j as f64 + 0.5) * step + jitter;
            out.push(SeededScr {
                time_s: peak_at - peak,
                amplitude_us: rng.random_range(lo..hi),
            });
        }
    };
    for sc in &markers.scenarios {
        if sc.kind == ScenarioKind::Relax {
            spread(sc.start_s, sc.end_s, profile.scr_per_relax, rng);
        } else {
            for (i, w) in markers.level_windows(&sc.id).iter().enumerate() {
                spread(w.start_s, w.end_s, profile.scr_per_level[i], rng);
            }
        }
    }
    out
}

fn wrong_answer(payload: &Payload, rng: &mut ChaCha8Rng) -> String {
    match payload {
        Payload::Stroop { ink, .. } => {
            let others: Vec<Color> = Color::ALL.into_iter().filter(|c| c != ink).collect();
            others[rng.random_range(0..others.len())].name().to_string()
        }
        Payload::Math {
            expected_answer, ..
        } => (expected_answer + rng.random_range(1..10)).to_string(),
    }
}

/// Slides are shown evenly across each level window; the number answered
/// correctly is the profile accuracy rounded to whole slides. The rest are
/// wrong or unanswered in equal measure.
fn session_log(
    plan: &StimulusPlan,
    markers: &SessionMarkers,
    scenario_id: &str,
    accuracy: &[f64; LEVELS as usize],
    rng: &mut ChaCha8Rng,
) -> SessionLog {
    let windows = markers.level_windows(scenario_id);
    let mut records = Vec::with_capacity(plan.slides.len());
    for (li, w) in windows.iter().enumerate() {
        let slides: Vec<_> = plan
            .slides
            .iter()
            .filter(|s| usize::from(s.level) == li + 1)
            .collect();
        let n = slides.len();
        let correct = ((accuracy[li] / 100.0 * n as f64).round() as usize).min(n);
        let mut is_correct: Vec<bool> = (0..n).map(|i| i < correct).collect();
        is_correct.shuffle(rng);
        let step = w.duration_s() / n as f64;
        for (j, (slide, ok)) in slides.iter().zip(is_correct).enumerate() {
            let presented_at_ms = ((w.start_s + j as f64 * step) * 1000.0).round() as u64;
            let latency_ms = (rng.random_range(0.3..0.8) * slide.deadline_s * 1000.0) as u64;
            let (response, responded) = if ok {
                (Some(slide.expected_response()), true)
            } else if rng.random_bool(0.5) {
                (Some(wrong_answer(&slide.payload, rng)), true)
            } else {
                (None, false)
            };
            records.push(LogRecord {
                slide_index: slide.index,
                presented_at_ms,
                response,
                responded_at_ms: responded.then_some(presented_at_ms + latency_ms),
            });
        }
    }
    SessionLog { records }
}

/// Twenty-minute, four-channel synthetic subject with plans and logs.
pub fn gen_session(profile: &StressProfile, seed: u64) -> Result<SyntheticSession> {
    let markers = default_markers();
    let kernel = BatemanKernel::default();
    let mut rng = rng_for(seed, STREAM_SESSION);
    let spec = SynthSpec {
        seed,
        duration_s: markers.total_duration_s(),
        hr: session_hr(profile, &markers),
        ecg_snr_db: profile.ecg_snr_db,
        bvp_snr_db: profile.bvp_snr_db,
        gsr_tonic_us: 2.0,
        gsr_drift_us_per_s: 2e-4,
        gsr_events: session_scrs(profile, &markers, &kernel, &mut rng),
        gsr_snr_db: profile.gsr_snr_db,
        kernel,
        ..SynthSpec::default()
    };
    let (ecg, truth_beats) = gen_ecg(&spec)?;
    let (bvp, _) = gen_bvp(&spec)?;
    let (gsr, truth_scrs) = gen_gsr(&spec)?;
    let (emg, truth_bursts) = gen_emg(&spec)?;

    let stroop_plan = generate_stroop_plan(seed.wrapping_mul(2));
    let math_plan = generate_math_plan(seed.wrapping_mul(2).wrapping_add(1));
    let test_id = |kind| {
        markers
            .first_of_kind(kind)
            .map(|s| s.id.clone())
            .ok_or_else(|| Error::InvalidMarkers(format!("no {kind:?} scenario")))
    };
    let stroop_id = test_id(ScenarioKind::Stroop)?;
    let math_id = test_id(ScenarioKind::Math)?;
    let stroop_log = session_log(&stroop_plan, &markers, &stroop_id, &profile.stroop_accuracy_pct, &mut rng);
    let math_log = session_log(&math_plan, &markers, &math_id, &profile.math_accuracy_pct, &mut rng);

    Ok(SyntheticSession {
        subject_id: format!("synth-{}-{seed}", profile.name),
        seed,
        profile: profile.clone(),
        markers,
        ecg,
        bvp,
        gsr,
        emg,
        truth_beats,
        truth_scrs,
        truth_bursts,
        stroop_plan,
        math_plan,
        stroop_log,
        math_log,
    })
}

/// File names inside a session directory.
pub mod layout {
    pub const MANIFEST: &str = "manifest.json";
    pub const MARKERS: &str = "markers.json";
    pub const STROOP_PLAN: &str = "stroop_plan.json";
    pub const MATH_PLAN: &str = "math_plan.json";
    pub const STROOP_LOG: &str = "stroop_log.jsonl";
    pub const MATH_LOG: &str = "math_log.jsonl";
    pub const TRUTH_DIR: &str = "truth";
    pub const TRUTH_BEATS: &str = "beats.csv";
    pub const TRUTH_SCRS: &str = "scr_events.csv";
    pub const TRUTH_BURSTS: &str = "emg_bursts.csv";
    pub const TRUTH_PROFILE: &str = "profile.json";

    pub fn channel_file(kind: crate::series::ChannelKind) -> String {
        format!("{}.csv", kind.as_str().to_ascii_lowercase())
    }
}

pub fn write_channel_manifest(dir: &Path, subject_id: &str, series: &[&TimeSeries]) -> Result<()> {
    let mut entries = Vec::with_capacity(series.len());
    for s in series {
        let file = layout::channel_file(s.kind());
        write_series(s, &dir.join(&file))?;
        entries.push(ManifestEntry {
            path: PathBuf::from(file),
            channel_kind: s.kind(),
            sampling_rate_hz: s.sampling_rate_hz(),
            units: s.kind().units().to_string(),
        });
    }
    ChannelManifest {
        subject_id: subject_id.to_string(),
        entries,
    }
    .save(&dir.join(layout::MANIFEST))
}

impl SyntheticSession {
    /// Writes the channels, manifest, markers, plans and logs in the same
    /// formats the pipeline reads, with ground truth under `truth/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_channel_manifest(dir, &self.subject_id, &[&self.ecg, &self.bvp, &self.gsr, &self.emg])?;
        self.markers.save(&dir.join(layout::MARKERS))?;
        self.stroop_plan.save(&dir.join(layout::STROOP_PLAN))?;
        self.math_plan.save(&dir.join(layout::MATH_PLAN))?;
        self.stroop_log.save(&dir.join(layout::STROOP_LOG))?;
        self.math_log.save(&dir.join(layout::MATH_LOG))?;

        let truth = dir.join(layout::TRUTH_DIR);
        fs::create_dir_all(&truth).map_err(|e| Error::io(&truth, e))?;
        self.truth_beats.write(&truth.join(layout::TRUTH_BEATS))?;
        write_events(&self.truth_scrs, &truth.join(layout::TRUTH_SCRS))?;
        write_bursts(&self.truth_bursts, &truth.join(layout::TRUTH_BURSTS))?;
        let p = truth.join(layout::TRUTH_PROFILE);
        let text = serde_json::to_string_pretty(&self.profile).map_err(|e| Error::parse(&p, e))?;
        fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
    }
}
