//! File-level orchestration: validate, process, features, calibrate and
//! report, each reading and writing stable file names in a directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_subject, save_report, CalibrationConfig, CalibrationInputs, SubjectCalibration,
    TestInputs,
};
use crate::cardiac::{
    beats_to_hr, detect_bvp_peaks, detect_r_peaks, BeatSeries, BeatSource, DetectorConfig,
    HrSeries,
};
use crate::eda::{
    decompose, detect_scr_events, read_events, write_events, BatemanKernel, EdaConfig, ScrConfig,
    ScrEvent,
};
use crate::emg::{detect_bursts_with_baseline, emg_envelope, read_bursts, write_bursts, EmgBurst, EmgConfig};
use crate::error::{Error, Result};
use crate::features::{
    feature_table, gsr_cumulative_slope, hr_slope, save_feature_table, FeatureVector,
    SessionSignals, SlopeFit,
};
use crate::ingest::{load_manifest, load_series};
use crate::markers::{default_markers, ScenarioKind, SessionMarkers};
use crate::plot::{Band, Chart, Series, Style};
use crate::protocol::{score_session, PerformanceRecord, SessionLog, StimulusPlan, TestKind};
use crate::series::{ChannelKind, TimeSeries, Window};

/// Output file names.
pub mod files {
    pub const ECG_BEATS: &str = "ecg_beats.csv";
    pub const BVP_BEATS: &str = "bvp_beats.csv";
    pub const SCR_EVENTS: &str = "scr_events.csv";
    pub const EMG_BURSTS: &str = "emg_bursts.csv";
    pub const PROCESSED: &str = "processed.json";
    pub const FEATURES_CSV: &str = "features.csv";
    pub const FEATURES_JSON: &str = "features.json";
    pub const SLOPES_CSV: &str = "slopes.csv";
    pub const PERFORMANCE_CSV: &str = "performance.csv";
    pub const CALIBRATION_CSV: &str = "calibration.csv";
    pub const CALIBRATION_JSON: &str = "calibration.json";
    pub const PLOTS_DIR: &str = "plots";
    pub const REPORT: &str = "report.md";
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessConfig {
    pub ecg: DetectorConfig,
    pub bvp: DetectorConfig,
    pub kernel: BatemanKernel,
    pub eda: EdaConfig,
    pub scr: ScrConfig,
    pub emg: EmgConfig,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            ecg: DetectorConfig::ecg(),
            bvp: DetectorConfig::bvp(),
            kernel: BatemanKernel::default(),
            eda: EdaConfig::default(),
            scr: ScrConfig::default(),
            emg: EmgConfig::default(),
        }
    }
}

/// Everything a run can be configured with, loadable from TOML.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub process: ProcessConfig,
    pub calibration: CalibrationConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }
}

/// The recorded channels of one subject; absent channels are `None`.
#[derive(Debug, Clone)]
pub struct Channels {
    pub subject_id: String,
    pub ecg: Option<TimeSeries>,
    pub bvp: Option<TimeSeries>,
    pub gsr: Option<TimeSeries>,
    pub emg: Option<TimeSeries>,
}

impl Channels {
    fn slot(&mut self, kind: ChannelKind) -> &mut Option<TimeSeries> {
        match kind {
            ChannelKind::Ecg => &mut self.ecg,
            ChannelKind::Bvp => &mut self.bvp,
            ChannelKind::Gsr => &mut self.gsr,
            ChannelKind::Emg => &mut self.emg,
        }
    }

    pub fn get(&self, kind: ChannelKind) -> Option<&TimeSeries> {
        match kind {
            ChannelKind::Ecg => self.ecg.as_ref(),
            ChannelKind::Bvp => self.bvp.as_ref(),
            ChannelKind::Gsr => self.gsr.as_ref(),
            ChannelKind::Emg => self.emg.as_ref(),
        }
    }
}

pub fn load_channels(manifest_path: &Path) -> Result<Channels> {
    let manifest = load_manifest(manifest_path)?;
    let mut ch = Channels {
        subject_id: manifest.subject_id.clone(),
        ecg: None,
        bvp: None,
        gsr: None,
        emg: None,
    };
    for entry in &manifest.entries {
        *ch.slot(entry.channel_kind) = Some(load_series(entry)?);
    }
    Ok(ch)
}

pub fn load_markers(path: Option<&Path>) -> Result<SessionMarkers> {
    match path {
        Some(p) => SessionMarkers::load(p),
        None => Ok(default_markers()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub info: Vec<String>,
    pub warnings: Vec<String>,
}

/// Checks a manifest and markers. Invariant violations are errors; missing
/// channels and partial coverage are warnings.
pub fn validate_session(manifest_path: &Path, markers_path: Option<&Path>) -> Result<Diagnostics> {
    let ch = load_channels(manifest_path)?;
    let markers = load_markers(markers_path)?;
    markers.validate()?;
    let mut d = Diagnostics::default();
    d.info.push(format!("subject {}", ch.subject_id));
    let end = markers.total_duration_s();
    for kind in ChannelKind::ALL {
        match ch.get(kind) {
            None => d.warnings.push(format!("{kind} channel missing; its features are disabled")),
            Some(s) => {
                d.info.push(format!(
                    "{kind}: {} samples at {} Hz covering [{}, {}) s",
                    s.len(),
                    s.sampling_rate_hz(),
                    s.start_s(),
                    s.end_s()
                ));
                if s.start_s() > s.dt() || s.end_s() < end - s.dt() {
                    d.warnings.push(format!(
                        "{kind} covers [{}, {}) s but the protocol spans [0, {end}) s",
                        s.start_s(),
                        s.end_s()
                    ));
                }
            }
        }
    }
    d.info.push(format!(
        "markers: {} scenarios, {} level intervals, {end} s",
        markers.scenarios.len(),
        markers.levels.len()
    ));
    Ok(d)
}

/// Detected events for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedSession {
    pub subject_id: String,
    pub ecg_beats: Option<BeatSeries>,
    pub bvp_beats: Option<BeatSeries>,
    pub scr_events: Option<Vec<ScrEvent>>,
    pub emg_bursts: Option<Vec<EmgBurst>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProcessedIndex {
    subject_id: String,
    ecg_beats: Option<usize>,
    bvp_beats: Option<usize>,
    scr_events: Option<usize>,
    emg_bursts: Option<usize>,
}

/// EMG threshold baseline: the first relax scenario clipped to the
/// recording, else the configured span from the start of the recording.
fn emg_baseline(emg: &TimeSeries, markers: &SessionMarkers, cfg: &EmgConfig) -> Result<Window> {
    let coverage = Window::new(emg.start_s(), emg.end_s(), "coverage")?;
    if let Some(w) = markers
        .first_of_kind(ScenarioKind::Relax)
        .and_then(|s| s.window().intersect(&coverage))
    {
        return Ok(w);
    }
    Window::new(
        emg.start_s(),
        emg.start_s() + cfg.baseline_s.min(emg.duration_s()),
        "baseline",
    )
}

pub fn process_session(
    ch: &Channels,
    markers: &SessionMarkers,
    cfg: &ProcessConfig,
) -> Result<ProcessedSession> {
    let ((ecg, bvp), (gsr, emg)) = rayon::join(
        || {
            rayon::join(
                || ch.ecg.as_ref().map(|s| detect_r_peaks(s, &cfg.ecg)).transpose(),
                || ch.bvp.as_ref().map(|s| detect_bvp_peaks(s, &cfg.bvp)).transpose(),
            )
        },
        || {
            rayon::join(
                || {
                    ch.gsr
                        .as_ref()
                        .map(|s| {
                            decompose(s, &cfg.kernel, &cfg.eda)
                                .map(|d| detect_scr_events(&d, &cfg.scr))
                        })
                        .transpose()
                },
                || {
                    ch.emg
                        .as_ref()
                        .map(|s| {
                            let env = emg_envelope(s, cfg.emg.envelope_window_s)?;
                            let base = emg_baseline(s, markers, &cfg.emg)?;
                            detect_bursts_with_baseline(&env, &base, &cfg.emg)
                        })
                        .transpose()
                },
            )
        },
    );
    Ok(ProcessedSession {
        subject_id: ch.subject_id.clone(),
        ecg_beats: ecg?,
        bvp_beats: bvp?,
        scr_events: gsr?,
        emg_bursts: emg?,
    })
}

impl ProcessedSession {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if let Some(b) = &self.ecg_beats {
            b.write(&dir.join(files::ECG_BEATS))?;
        }
        if let Some(b) = &self.bvp_beats {
            b.write(&dir.join(files::BVP_BEATS))?;
        }
        if let Some(e) = &self.scr_events {
            write_events(e, &dir.join(files::SCR_EVENTS))?;
        }
        if let Some(b) = &self.emg_bursts {
            write_bursts(b, &dir.join(files::EMG_BURSTS))?;
        }
        let index = ProcessedIndex {
            subject_id: self.subject_id.clone(),
            ecg_beats: self.ecg_beats.as_ref().map(BeatSeries::len),
            bvp_beats: self.bvp_beats.as_ref().map(BeatSeries::len),
            scr_events: self.scr_events.as_ref().map(Vec::len),
            emg_bursts: self.emg_bursts.as_ref().map(Vec::len),
        };
        write_json(&dir.join(files::PROCESSED), &index)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let index: ProcessedIndex = read_json(&dir.join(files::PROCESSED))?;
        let beats = |present: Option<usize>, name: &str, src| {
            present
                .map(|_| BeatSeries::read(&dir.join(name), src))
                .transpose()
        };
        Ok(Self {
            subject_id: index.subject_id,
            ecg_beats: beats(index.ecg_beats, files::ECG_BEATS, BeatSource::Ecg)?,
            bvp_beats: beats(index.bvp_beats, files::BVP_BEATS, BeatSource::Bvp)?,
            scr_events: index
                .scr_events
                .map(|_| read_events(&dir.join(files::SCR_EVENTS)))
                .transpose()?,
            emg_bursts: index
                .emg_bursts
                .map(|_| read_bursts(&dir.join(files::EMG_BURSTS)))
                .transpose()?,
        })
    }

    pub fn signals(&self) -> Result<SessionSignals> {
        let hr = |b: &Option<BeatSeries>| b.as_ref().map(beats_to_hr).transpose();
        Ok(SessionSignals {
            ecg_hr: hr(&self.ecg_beats)?,
            bvp_hr: hr(&self.bvp_beats)?,
            scr_events: self.scr_events.clone(),
            emg_bursts: self.emg_bursts.clone(),
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// HR and cumulative-GSR slopes over one window; `None` where there is too
/// little data to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub label: String,
    pub hr: Option<SlopeFit>,
    pub gsr: Option<SlopeFit>,
    pub gsr_count: Option<usize>,
    pub gsr_total_us: Option<f64>,
}

pub fn slope_rows(signals: &SessionSignals, markers: &SessionMarkers) -> Result<Vec<SlopeRow>> {
    let whole = Window::new(0.0, markers.total_duration_s(), "session")?;
    let mut windows: Vec<Window> = markers.scenarios.iter().map(|s| s.window()).collect();
    windows.push(whole);
    Ok(windows
        .into_iter()
        .map(|w| {
            let inside: Option<Vec<&ScrEvent>> = signals
                .scr_events
                .as_ref()
                .map(|ev| ev.iter().filter(|e| w.contains(e.peak_s)).collect());
            SlopeRow {
                hr: signals.ecg_hr.as_ref().and_then(|h| hr_slope(h, &w).ok()),
                gsr: signals
                    .scr_events
                    .as_ref()
                    .and_then(|ev| gsr_cumulative_slope(ev, &w).ok()),
                gsr_count: inside.as_ref().map(Vec::len),
                gsr_total_us: inside.map(|v| v.iter().map(|e| e.amplitude_us).sum()),
                label: w.label,
            }
        })
        .collect())
}

fn save_slopes(rows: &[SlopeRow], path: &Path) -> Result<()> {
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    let csv_err = |e: csv::Error| Error::parse(path, e);
    w.write_record([
        "label",
        "hr_slope_bpm_per_s",
        "hr_intercept_bpm",
        "hr_rms_residual_bpm",
        "gsr_slope_uS_per_s",
        "gsr_intercept_uS",
        "gsr_rms_residual_uS",
        "gsr_count",
        "gsr_total_uS",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            na(r.hr.map(|f| f.slope)),
            na(r.hr.map(|f| f.intercept)),
            na(r.hr.map(|f| f.rms_residual)),
            na(r.gsr.map(|f| f.slope)),
            na(r.gsr.map(|f| f.intercept)),
            na(r.gsr.map(|f| f.rms_residual)),
            r.gsr_count.map_or_else(|| "NA".into(), |c| c.to_string()),
            na(r.gsr_total_us),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub subject_id: String,
    pub features: Vec<FeatureVector>,
    pub slopes: Vec<SlopeRow>,
}

/// Writes `features.csv`, `slopes.csv` and `features.json` into `out`.
pub fn run_features(processed: &ProcessedSession, markers: &SessionMarkers, out: &Path) -> Result<FeatureReport> {
    let signals = processed.signals()?;
    let report = FeatureReport {
        subject_id: processed.subject_id.clone(),
        features: feature_table(&signals, markers)?,
        slopes: slope_rows(&signals, markers)?,
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_feature_table(&report.features, &out.join(files::FEATURES_CSV))?;
    save_slopes(&report.slopes, &out.join(files::SLOPES_CSV))?;
    write_json(&out.join(files::FEATURES_JSON), &report)?;
    Ok(report)
}

/// A stimulus plan with the log recorded while it ran.
#[derive(Debug, Clone)]
pub struct TestRun {
    pub plan: StimulusPlan,
    pub log: SessionLog,
}

impl TestRun {
    pub fn load(plan: &Path, log: &Path) -> Result<Self> {
        Ok(Self {
            plan: StimulusPlan::load(plan)?,
            log: SessionLog::load(log)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub calibration: SubjectCalibration,
    pub stroop_records: Vec<PerformanceRecord>,
    pub math_records: Vec<PerformanceRecord>,
}

fn find_run(runs: &[TestRun], kind: TestKind) -> Result<&TestRun> {
    let mut it = runs.iter().filter(|r| r.plan.kind == kind);
    match (it.next(), it.next()) {
        (Some(r), None) => Ok(r),
        (None, _) => Err(Error::InvalidPlan(format!("no {kind:?} plan given"))),
        _ => Err(Error::InvalidPlan(format!("more than one {kind:?} plan given"))),
    }
}

fn test_levels(markers: &SessionMarkers, kind: ScenarioKind) -> Result<Vec<Window>> {
    let sc = markers
        .first_of_kind(kind)
        .ok_or_else(|| Error::InvalidMarkers(format!("no {kind:?} scenario")))?;
    Ok(markers.level_windows(&sc.id))
}

pub fn calibrate_session(
    processed: &ProcessedSession,
    markers: &SessionMarkers,
    runs: &[TestRun],
    cfg: &CalibrationConfig,
) -> Result<CalibrationOutcome> {
    markers.validate()?;
    let stroop = find_run(runs, TestKind::Stroop)?;
    let math = find_run(runs, TestKind::Math)?;
    let stroop_records = score_session(&stroop.plan, &stroop.log)?;
    let math_records = score_session(&math.plan, &math.log)?;
    let stroop_levels = test_levels(markers, ScenarioKind::Stroop)?;
    let math_levels = test_levels(markers, ScenarioKind::Math)?;
    let hr: Option<HrSeries> = processed.ecg_beats.as_ref().map(beats_to_hr).transpose()?;
    let inputs = CalibrationInputs {
        subject_id: &processed.subject_id,
        hr: hr.as_ref(),
        scrs: processed.scr_events.as_deref(),
        stroop: TestInputs {
            records: &stroop_records,
            levels: &stroop_levels,
        },
        math: TestInputs {
            records: &math_records,
            levels: &math_levels,
        },
    };
    Ok(CalibrationOutcome {
        calibration: calibrate_subject(&inputs, cfg)?,
        stroop_records,
        math_records,
    })
}

fn save_performance(outcome: &CalibrationOutcome, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    let csv_err = |e: csv::Error| Error::parse(path, e);
    w.write_record(["test", "level", "n_correct", "n_total", "accuracy_pct"])
        .map_err(csv_err)?;
    for (test, recs) in [("stroop", &outcome.stroop_records), ("math", &outcome.math_records)] {
        for r in recs {
            w.write_record([
                test.to_string(),
                r.level.to_string(),
                r.n_correct.to_string(),
                r.n_total.to_string(),
                r.accuracy_pct.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn accuracy_chart(outcome: &CalibrationOutcome) -> Chart {
    let pts = |r: &[PerformanceRecord]| {
        r.iter()
            .map(|r| (f64::from(r.level), r.accuracy_pct))
            .collect()
    };
    let c = &outcome.calibration;
    let mut markers = Vec::new();
    if let Some(l) = c.stroop.decrease_level {
        markers.push((f64::from(l), format!("Stroop decrease {l}")));
    }
    if let Some(l) = c.math.decrease_level {
        markers.push((f64::from(l), format!("math decrease {l}")));
    }
    Chart {
        title: format!("Correct responses per level, {}", c.subject_id),
        x_label: "level".into(),
        y_label: "accuracy (%)".into(),
        series: vec![
            Series {
                name: "Stroop".into(),
                points: pts(&outcome.stroop_records),
                style: Style::LinePoints,
            },
            Series {
                name: "math".into(),
                points: pts(&outcome.math_records),
                style: Style::LinePoints,
            },
        ],
        bands: Vec::new(),
        markers,
    }
}

fn scenario_bands(markers: &SessionMarkers) -> Vec<Band> {
    markers
        .scenarios
        .iter()
        .map(|s| Band {
            start: s.start_s,
            end: s.end_s,
            label: s.id.clone(),
        })
        .collect()
}

fn fit_line(fit: &SlopeFit, w: &Window) -> Vec<(f64, f64)> {
    [w.start_s, w.end_s]
        .iter()
        .map(|&t| (t, fit.intercept + fit.slope * t))
        .collect()
}

fn hr_chart(hr: &HrSeries, markers: &SessionMarkers, slopes: &[SlopeRow], subject: &str) -> Chart {
    let points = hr
        .times_s
        .iter()
        .zip(&hr.hr_bpm)
        .zip(&hr.flagged)
        .filter(|(_, f)| !**f)
        .map(|((t, h), _)| (*t, *h))
        .collect();
    let mut series = vec![Series {
        name: "HR".into(),
        points,
        style: Style::Line,
    }];
    for sc in markers.scenarios.iter().filter(|s| s.kind.is_test()) {
        if let Some(fit) = slopes.iter().find(|r| r.label == sc.id).and_then(|r| r.hr) {
            series.push(Series {
                name: format!("{} fit {:+.3} bpm/s", sc.id, fit.slope),
                points: fit_line(&fit, &sc.window()),
                style: Style::Dashed,
            });
        }
    }
    Chart {
        title: format!("Heart rate, {subject}"),
        x_label: "time (s)".into(),
        y_label: "HR (bpm)".into(),
        series,
        bands: scenario_bands(markers),
        markers: Vec::new(),
    }
}

fn gsr_chart(scrs: &[ScrEvent], markers: &SessionMarkers, slopes: &[SlopeRow], subject: &str) -> Chart {
    let mut sorted: Vec<&ScrEvent> = scrs.iter().collect();
    sorted.sort_by(|a, b| a.peak_s.total_cmp(&b.peak_s));
    let mut acc = 0.0;
    let points = sorted
        .iter()
        .map(|e| {
            acc += e.amplitude_us;
            (e.peak_s, acc)
        })
        .collect();
    let mut series = vec![Series {
        name: "cumulative SCR".into(),
        points,
        style: Style::LinePoints,
    }];
    if let Some(fit) = slopes.iter().find(|r| r.label == "session").and_then(|r| r.gsr) {
        let whole = Window {
            start_s: 0.0,
            end_s: markers.total_duration_s(),
            label: String::new(),
        };
        series.push(Series {
            name: format!("fit {:+.5} uS/s", fit.slope),
            points: fit_line(&fit, &whole),
            style: Style::Dashed,
        });
    }
    Chart {
        title: format!("Cumulative SCR amplitude, {subject}"),
        x_label: "time (s)".into(),
        y_label: "sum of amplitudes (uS)".into(),
        series,
        bands: scenario_bands(markers),
        markers: Vec::new(),
    }
}

/// Calibrates and writes the report files and plots into `out`.
pub fn run_calibrate(
    processed: &ProcessedSession,
    markers: &SessionMarkers,
    runs: &[TestRun],
    cfg: &CalibrationConfig,
    out: &Path,
) -> Result<CalibrationOutcome> {
    let outcome = calibrate_session(processed, markers, runs, cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_report(
        std::slice::from_ref(&outcome.calibration),
        cfg,
        &out.join(files::CALIBRATION_CSV),
        &out.join(files::CALIBRATION_JSON),
    )?;
    save_performance(&outcome, &out.join(files::PERFORMANCE_CSV))?;

    let plots = out.join(files::PLOTS_DIR);
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let write_svg = |name: &str, chart: Chart| {
        let p = plots.join(name);
        fs::write(&p, chart.to_svg()).map_err(|e| Error::io(&p, e))
    };
    write_svg("accuracy.svg", accuracy_chart(&outcome))?;
    let signals = processed.signals()?;
    let slopes = slope_rows(&signals, markers)?;
    if let Some(hr) = &signals.ecg_hr {
        write_svg("hr.svg", hr_chart(hr, markers, &slopes, &processed.subject_id))?;
    }
    if let Some(scrs) = &signals.scr_events {
        write_svg("gsr_cumulative.svg", gsr_chart(scrs, markers, &slopes, &processed.subject_id))?;
    }
    Ok(outcome)
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn fmt_f(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"))
}

/// Renders `report.md` from the artifacts that `run_features` and
/// `run_calibrate` left in `out`.
pub fn run_report(out: &Path) -> Result<PathBuf> {
    let features: FeatureReport = read_json(&out.join(files::FEATURES_JSON))?;
    let summary: crate::calibration::CalibrationSummary = read_json(&out.join(files::CALIBRATION_JSON))?;
    let mut md = String::new();
    md.push_str(&format!("# Calibration report: {}\n\n", features.subject_id));
    md.push_str(&format!(
        "Decrease rule: accuracy at least {} points below the running maximum{}.\n\n",
        summary.config.delta_pct,
        if summary.config.sustain { ", sustained" } else { "" }
    ));
    md.push_str("| subject | test | decrease level | optimal level | HR increment (bpm) | GSR peaks until decrease |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    for s in &summary.subjects {
        for (name, t) in [("Stroop", &s.stroop), ("math", &s.math)] {
            md.push_str(&format!(
                "| {} | {name} | {} | {} | {} | {} |\n",
                s.subject_id,
                fmt_opt(t.decrease_level),
                fmt_opt(t.optimal_level),
                fmt_f(t.hr_increment_bpm, 2),
                fmt_opt(t.gsr_peaks_until_decrease),
            ));
        }
        for n in &s.notes {
            md.push_str(&format!("\nNote: {n}\n"));
        }
    }
    md.push_str("\n## Features per window\n\n");
    md.push_str("BVP heart rate is informational only; ECG heart rate is the reference.\n\n");
    md.push_str("| window | HR mean | HR std | BVP HR mean | GSR peaks | GSR mean amp (uS) | EMG bursts | EMG mean amp (mV) |\n");
    md.push_str("|---|---|---|---|---|---|---|---|\n");
    for f in &features.features {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
            f.label,
            fmt_f(f.hr.map(|h| h.hr_mean_bpm), 1),
            fmt_f(f.hr.map(|h| h.hr_std_bpm), 2),
            fmt_f(f.bvp_hr.map(|h| h.hr_mean_bpm), 1),
            f.gsr.map_or_else(|| "NA".into(), |g| g.count.to_string()),
            fmt_f(f.gsr.map(|g| g.mean_amplitude), 3),
            f.emg.map_or_else(|| "NA".into(), |g| g.count.to_string()),
            fmt_f(f.emg.map(|g| g.mean_amplitude), 3),
        ));
    }
    md.push_str("\n## Slopes\n\n| window | HR slope (bpm/s) | cumulative GSR slope (uS/s) | GSR total (uS) |\n|---|---|---|---|\n");
    for r in &features.slopes {
        md.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            r.label,
            fmt_f(r.hr.map(|f| f.slope), 4),
            fmt_f(r.gsr.map(|f| f.slope), 6),
            fmt_f(r.gsr_total_us, 3),
        ));
    }
    md.push_str("\n## Figures\n\n");
    for (name, title) in [
        ("accuracy.svg", "Accuracy per level"),
        ("hr.svg", "Heart rate"),
        ("gsr_cumulative.svg", "Cumulative SCR amplitude"),
    ] {
        if out.join(files::PLOTS_DIR).join(name).exists() {
            md.push_str(&format!("![{title}]({}/{name})\n\n", files::PLOTS_DIR));
        }
    }
    let path = out.join(files::REPORT);
    fs::write(&path, md).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
