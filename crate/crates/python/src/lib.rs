//! Python bindings. Thin wrappers over `perfcal`; structured results cross
//! the boundary as JSON-decoded dicts so field names match the file formats.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use perfcal::calibration::{detect_decrease_level as core_decrease, CalibrationConfig};
use perfcal::cardiac::{self, BeatSeries, BeatSource, DetectorConfig};
use perfcal::eda::{self, BatemanKernel, EdaConfig, ScrConfig};
use perfcal::emg::{self, EmgConfig};
use perfcal::markers::LEVELS;
use perfcal::pipeline::{self, RunConfig, TestRun};
use perfcal::protocol::{self, PerformanceRecord, SessionLog};
use perfcal::synth::{self, HrProfile, StressProfile, SynthSpec};
use perfcal::{ChannelKind, Error};

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A uniformly sampled channel.
#[pyclass(name = "TimeSeries", module = "perfcal", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTimeSeries {
    inner: perfcal::TimeSeries,
}

#[pymethods]
impl PyTimeSeries {
    #[new]
    #[pyo3(signature = (kind, sampling_rate_hz, values, start_s = 0.0))]
    fn new(kind: &str, sampling_rate_hz: f64, values: Vec<f64>, start_s: f64) -> PyResult<Self> {
        let kind: ChannelKind = kind.parse().map_err(to_py)?;
        let inner = perfcal::TimeSeries::new(kind, sampling_rate_hz, start_s, values).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn sampling_rate_hz(&self) -> f64 {
        self.inner.sampling_rate_hz()
    }

    #[getter]
    fn start_s(&self) -> f64 {
        self.inner.start_s()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TimeSeries(kind={}, sampling_rate_hz={}, n={}, start_s={})",
            self.inner.kind(),
            self.inner.sampling_rate_hz(),
            self.inner.len(),
            self.inner.start_s()
        )
    }
}

fn wrap(inner: perfcal::TimeSeries) -> PyTimeSeries {
    PyTimeSeries { inner }
}

/// R-peak times in seconds.
#[pyfunction]
fn detect_r_peaks(ecg: &PyTimeSeries) -> PyResult<Vec<f64>> {
    let beats = cardiac::detect_r_peaks(&ecg.inner, &DetectorConfig::ecg()).map_err(to_py)?;
    Ok(beats.times().to_vec())
}

/// Pulse-peak times in seconds.
#[pyfunction]
fn detect_bvp_peaks(bvp: &PyTimeSeries) -> PyResult<Vec<f64>> {
    let beats = cardiac::detect_bvp_peaks(&bvp.inner, &DetectorConfig::bvp()).map_err(to_py)?;
    Ok(beats.times().to_vec())
}

/// Instantaneous heart rate as `(times_s, hr_bpm, flagged)`.
#[pyfunction]
fn heart_rate(beat_times_s: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let beats = BeatSeries::new(beat_times_s, BeatSource::Ecg).map_err(to_py)?;
    let hr = cardiac::beats_to_hr(&beats).map_err(to_py)?;
    Ok((hr.times_s, hr.hr_bpm, hr.flagged))
}

/// Tonic, phasic and driver components of a GSR recording.
#[pyclass(name = "EdaDecomposition", module = "perfcal", frozen)]
struct PyEdaDecomposition {
    inner: eda::EdaDecomposition,
}

#[pymethods]
impl PyEdaDecomposition {
    #[getter]
    fn tonic(&self) -> PyTimeSeries {
        wrap(self.inner.tonic.clone())
    }

    #[getter]
    fn phasic(&self) -> PyTimeSeries {
        wrap(self.inner.phasic.clone())
    }

    #[getter]
    fn driver(&self) -> PyTimeSeries {
        wrap(self.inner.driver.clone())
    }

    /// SCR events as `(onset_s, peak_s, amplitude_uS)` tuples.
    #[pyo3(signature = (amplitude_threshold_us = ScrConfig::default().amplitude_threshold_us))]
    fn scr_events(&self, amplitude_threshold_us: f64) -> Vec<(f64, f64, f64)> {
        let cfg = ScrConfig {
            amplitude_threshold_us,
            ..Default::default()
        };
        eda::detect_scr_events(&self.inner, &cfg)
            .into_iter()
            .map(|e| (e.onset_s, e.peak_s, e.amplitude_us))
            .collect()
    }
}

#[pyfunction]
#[pyo3(signature = (gsr, lam = EdaConfig::default().lambda))]
fn decompose_eda(py: Python<'_>, gsr: &PyTimeSeries, lam: f64) -> PyResult<PyEdaDecomposition> {
    let cfg = EdaConfig {
        lambda: lam,
        ..Default::default()
    };
    let inner = py
        .detach(|| eda::decompose(&gsr.inner, &BatemanKernel::default(), &cfg))
        .map_err(to_py)?;
    Ok(PyEdaDecomposition { inner })
}

/// Moving-RMS envelope of an EMG channel.
#[pyfunction]
#[pyo3(signature = (emg, window_s = EmgConfig::default().envelope_window_s))]
fn emg_envelope(emg: &PyTimeSeries, window_s: f64) -> PyResult<PyTimeSeries> {
    emg::emg_envelope(&emg.inner, window_s).map_err(to_py).map(wrap)
}

/// Bursts as `(start_s, end_s, peak_amplitude_mV)` tuples.
#[pyfunction]
fn detect_emg_bursts(envelope: &PyTimeSeries) -> PyResult<Vec<(f64, f64, f64)>> {
    let bursts = emg::detect_bursts(&envelope.inner, &EmgConfig::default()).map_err(to_py)?;
    Ok(bursts
        .into_iter()
        .map(|b| (b.start_s, b.end_s, b.peak_amplitude_mv))
        .collect())
}

/// A Stroop or arithmetic stimulus plan.
#[pyclass(name = "StimulusPlan", module = "perfcal", frozen)]
struct PyStimulusPlan {
    inner: protocol::StimulusPlan,
}

#[pymethods]
impl PyStimulusPlan {
    #[staticmethod]
    fn stroop(seed: u64) -> Self {
        Self {
            inner: protocol::generate_stroop_plan(seed),
        }
    }

    #[staticmethod]
    fn math(seed: u64) -> Self {
        Self {
            inner: protocol::generate_math_plan(seed),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = protocol::StimulusPlan::load(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.inner.kind).to_lowercase()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn slides_per_level(&self) -> Vec<usize> {
        self.inner.slides_per_level().to_vec()
    }

    #[getter]
    fn total_deadline_s(&self) -> f64 {
        self.inner.total_deadline_s()
    }

    /// The slides as a list of dicts in the plan file format.
    fn slides<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.slides)
    }

    fn __len__(&self) -> usize {
        self.inner.slides.len()
    }

    /// Per-level `(level, n_correct, n_total, accuracy_pct)` for the log at `log_path`.
    fn score(&self, log_path: PathBuf) -> PyResult<Vec<(u8, usize, usize, f64)>> {
        let log = SessionLog::load(&log_path).map_err(to_py)?;
        let records = protocol::score_session(&self.inner, &log).map_err(to_py)?;
        Ok(records
            .into_iter()
            .map(|r| (r.level, r.n_correct, r.n_total, r.accuracy_pct))
            .collect())
    }
}

/// First level whose accuracy drops `delta_pct` points below the best level
/// before it, or `None`.
#[pyfunction]
#[pyo3(signature = (accuracy_pct, delta_pct = 10.0, sustain = true))]
fn detect_decrease_level(accuracy_pct: Vec<f64>, delta_pct: f64, sustain: bool) -> PyResult<Option<u8>> {
    if accuracy_pct.len() != usize::from(LEVELS) {
        return Err(PyValueError::new_err(format!(
            "expected {LEVELS} accuracies, got {}",
            accuracy_pct.len()
        )));
    }
    let records: Vec<PerformanceRecord> = accuracy_pct
        .iter()
        .zip(1..=LEVELS)
        .map(|(&a, level)| PerformanceRecord {
            level,
            n_correct: 0,
            n_total: 0,
            accuracy_pct: a,
        })
        .collect();
    core_decrease(&records, &CalibrationConfig { delta_pct, sustain }).map_err(to_py)
}

/// Synthetic ECG at a constant rate: `(series, true beat times)`.
#[pyfunction]
#[pyo3(signature = (hr_bpm = 60.0, duration_s = 60.0, seed = 0, snr_db = None))]
fn synth_ecg(hr_bpm: f64, duration_s: f64, seed: u64, snr_db: Option<f64>) -> PyResult<(PyTimeSeries, Vec<f64>)> {
    let spec = SynthSpec {
        seed,
        duration_s,
        hr: HrProfile::constant(hr_bpm),
        ecg_snr_db: snr_db,
        ..Default::default()
    };
    let (ecg, beats) = synth::gen_ecg(&spec).map_err(to_py)?;
    Ok((wrap(ecg), beats.times().to_vec()))
}

/// Writes a full synthetic session to `out_dir` and returns its subject id.
#[pyfunction]
#[pyo3(signature = (out_dir, profile = "paper-like", seed = 0))]
fn synth_session(py: Python<'_>, out_dir: PathBuf, profile: &str, seed: u64) -> PyResult<String> {
    let profile = StressProfile::by_name(profile).map_err(to_py)?;
    py.detach(|| {
        let s = synth::gen_session(&profile, seed)?;
        s.write(&out_dir)?;
        Ok(s.subject_id)
    })
    .map_err(to_py)
}

/// `(info, warnings)` for a manifest and optional markers file.
#[pyfunction]
#[pyo3(signature = (manifest, markers = None))]
fn validate(manifest: PathBuf, markers: Option<PathBuf>) -> PyResult<(Vec<String>, Vec<String>)> {
    let d = pipeline::validate_session(&manifest, markers.as_deref()).map_err(to_py)?;
    Ok((d.info, d.warnings))
}

fn run_config(config: Option<PathBuf>) -> PyResult<RunConfig> {
    config.map_or(Ok(RunConfig::default()), |p| RunConfig::load(&p).map_err(to_py))
}

/// Runs beat, SCR and burst detection and writes the event files into `out_dir`.
#[pyfunction]
#[pyo3(signature = (manifest, out_dir, markers = None, config = None))]
fn process(
    py: Python<'_>,
    manifest: PathBuf,
    out_dir: PathBuf,
    markers: Option<PathBuf>,
    config: Option<PathBuf>,
) -> PyResult<()> {
    let cfg = run_config(config)?;
    py.detach(|| {
        let markers = pipeline::load_markers(markers.as_deref())?;
        markers.validate()?;
        let ch = pipeline::load_channels(&manifest)?;
        pipeline::process_session(&ch, &markers, &cfg.process)?.write(&out_dir)
    })
    .map_err(to_py)
}

/// Feature table and slopes from a processed directory; returns the
/// `features.json` content.
#[pyfunction]
#[pyo3(signature = (session_dir, out_dir, markers = None))]
fn features<'py>(
    py: Python<'py>,
    session_dir: PathBuf,
    out_dir: PathBuf,
    markers: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let markers = pipeline::load_markers(markers.as_deref()).map_err(to_py)?;
    let processed = pipeline::ProcessedSession::read(&session_dir).map_err(to_py)?;
    let report = pipeline::run_features(&processed, &markers, &out_dir).map_err(to_py)?;
    json_to_py(py, &report)
}

/// Scores `(plan, log)` pairs, calibrates and writes the report files and
/// plots; returns the calibration outcome.
#[pyfunction]
#[pyo3(signature = (session_dir, out_dir, runs, markers = None, delta_pct = None, config = None))]
fn calibrate<'py>(
    py: Python<'py>,
    session_dir: PathBuf,
    out_dir: PathBuf,
    runs: Vec<(PathBuf, PathBuf)>,
    markers: Option<PathBuf>,
    delta_pct: Option<f64>,
    config: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = run_config(config)?.calibration;
    if let Some(d) = delta_pct {
        cfg.delta_pct = d;
    }
    let runs = runs
        .iter()
        .map(|(p, l)| TestRun::load(p, l))
        .collect::<perfcal::Result<Vec<_>>>()
        .map_err(to_py)?;
    let markers = pipeline::load_markers(markers.as_deref()).map_err(to_py)?;
    let processed = pipeline::ProcessedSession::read(&session_dir).map_err(to_py)?;
    let outcome = pipeline::run_calibrate(&processed, &markers, &runs, &cfg, &out_dir).map_err(to_py)?;
    json_to_py(py, &outcome)
}

/// Renders `report.md` in `out_dir` and returns its path.
#[pyfunction]
fn report(out_dir: PathBuf) -> PyResult<PathBuf> {
    pipeline::run_report(&out_dir).map_err(to_py)
}

#[pymodule]
fn _perfcal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTimeSeries>()?;
    m.add_class::<PyEdaDecomposition>()?;
    m.add_class::<PyStimulusPlan>()?;
    m.add_function(wrap_pyfunction!(detect_r_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(detect_bvp_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(heart_rate, m)?)?;
    m.add_function(wrap_pyfunction!(decompose_eda, m)?)?;
    m.add_function(wrap_pyfunction!(emg_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(detect_emg_bursts, m)?)?;
    m.add_function(wrap_pyfunction!(detect_decrease_level, m)?)?;
    m.add_function(wrap_pyfunction!(synth_ecg, m)?)?;
    m.add_function(wrap_pyfunction!(synth_session, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(process, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
