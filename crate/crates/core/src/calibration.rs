//! Locating each subject's performance-decrease level and summarizing the
//! physiology up to it.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cardiac::{hr_stats, HrSeries};
use crate::eda::ScrEvent;
use crate::error::{Error, Result};
use crate::markers::LEVELS;
use crate::protocol::{PerformanceRecord, TestKind};
use crate::series::Window;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Drop below the running maximum accuracy, in percentage points, that
    /// marks a decrease.
    pub delta_pct: f64,
    /// Require every later level to stay below the running maximum minus
    /// half of `delta_pct`.
    pub sustain: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            delta_pct: 10.0,
            sustain: true,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta_pct > 0.0 && self.delta_pct < 100.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "delta_pct must lie in (0, 100), got {}",
                self.delta_pct
            )))
        }
    }
}

fn ordered_accuracies(records: &[PerformanceRecord]) -> Result<[f64; LEVELS as usize]> {
    let bad = |m: String| Err(Error::MalformedRecords(m));
    if records.len() != usize::from(LEVELS) {
        return bad(format!("expected {LEVELS} records, got {}", records.len()));
    }
    let mut acc = [f64::NAN; LEVELS as usize];
    for r in records {
        if !(1..=LEVELS).contains(&r.level) {
            return bad(format!("level {} out of range", r.level));
        }
        if r.n_correct > r.n_total {
            return bad(format!("level {}: {} correct of {}", r.level, r.n_correct, r.n_total));
        }
        if !(0.0..=100.0).contains(&r.accuracy_pct) {
            return bad(format!("level {}: accuracy {}", r.level, r.accuracy_pct));
        }
        let slot = &mut acc[usize::from(r.level - 1)];
        if !slot.is_nan() {
            return bad(format!("level {} appears twice", r.level));
        }
        *slot = r.accuracy_pct;
    }
    Ok(acc)
}

/// The first level `L >= 2` whose accuracy falls at least `delta_pct` below
/// the best accuracy of the levels before it. With `sustain`, no later level
/// may climb back above the running maximum minus `delta_pct / 2`.
pub fn detect_decrease_level(
    records: &[PerformanceRecord],
    cfg: &CalibrationConfig,
) -> Result<Option<u8>> {
    cfg.validate()?;
    let acc = ordered_accuracies(records)?;
    if acc.iter().all(|&a| a == 0.0) {
        log::warn!("all levels scored 0%; no decrease level can be defined");
        return Ok(None);
    }
    let mut running_max = acc[0];
    for l in 1..acc.len() {
        let floor = running_max - cfg.delta_pct;
        let sustained = || {
            acc[l + 1..]
                .iter()
                .all(|&a| a <= running_max - cfg.delta_pct / 2.0)
        };
        if acc[l] <= floor && (!cfg.sustain || sustained()) {
            return Ok(Some(l as u8 + 1));
        }
        running_max = running_max.max(acc[l]);
    }
    Ok(None)
}

fn level_window(levels: &[Window], level: u8) -> Result<&Window> {
    if levels.len() != usize::from(LEVELS) {
        return Err(Error::InvalidMarkers(format!(
            "expected {LEVELS} level windows, got {}",
            levels.len()
        )));
    }
    if !(1..=LEVELS).contains(&level) {
        return Err(Error::InvalidConfig(format!("level {level} out of range")));
    }
    Ok(&levels[usize::from(level - 1)])
}

/// Mean HR in the decrease level minus mean HR in level 1, in bpm.
pub fn hr_increment(hr: &HrSeries, levels: &[Window], decrease_level: u8) -> Result<f64> {
    if decrease_level < 2 {
        return Err(Error::InvalidConfig(format!(
            "decrease level must be at least 2, got {decrease_level}"
        )));
    }
    let first = hr_stats(hr, level_window(levels, 1)?)?;
    let at = hr_stats(hr, level_window(levels, decrease_level)?)?;
    Ok(at.hr_mean_bpm - first.hr_mean_bpm)
}

/// SCRs peaking from the start of level 1 up to the start of the decrease
/// level.
pub fn gsr_peaks_until(scrs: &[ScrEvent], levels: &[Window], decrease_level: u8) -> Result<usize> {
    let from = level_window(levels, 1)?.start_s;
    let until = level_window(levels, decrease_level)?.start_s;
    Ok(scrs
        .iter()
        .filter(|e| e.peak_s >= from && e.peak_s < until)
        .count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestCalibration {
    pub test: TestKind,
    pub decrease_level: Option<u8>,
    pub optimal_level: Option<u8>,
    pub hr_increment_bpm: Option<f64>,
    pub gsr_peaks_until_decrease: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectCalibration {
    pub subject_id: String,
    pub stroop: TestCalibration,
    pub math: TestCalibration,
    pub notes: Vec<String>,
}

/// Scored performance and level windows for one test.
#[derive(Debug, Clone, Copy)]
pub struct TestInputs<'a> {
    pub records: &'a [PerformanceRecord],
    pub levels: &'a [Window],
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrationInputs<'a> {
    pub subject_id: &'a str,
    pub hr: Option<&'a HrSeries>,
    pub scrs: Option<&'a [ScrEvent]>,
    pub stroop: TestInputs<'a>,
    pub math: TestInputs<'a>,
}

fn calibrate_test(
    test: TestKind,
    inputs: &CalibrationInputs<'_>,
    t: &TestInputs<'_>,
    cfg: &CalibrationConfig,
    notes: &mut Vec<String>,
) -> Result<TestCalibration> {
    let decrease_level = detect_decrease_level(t.records, cfg)?;
    let name = match test {
        TestKind::Stroop => "stroop",
        TestKind::Math => "math",
    };
    let (mut hr_increment_bpm, mut gsr_peaks) = (None, None);
    match decrease_level {
        None => notes.push(format!("{name}: no performance decrease detected")),
        Some(level) => {
            match inputs.hr {
                Some(hr) => hr_increment_bpm = Some(hr_increment(hr, t.levels, level)?),
                None => notes.push(format!("{name}: no ECG heart rate, HR increment omitted")),
            }
            match inputs.scrs {
                Some(scrs) => gsr_peaks = Some(gsr_peaks_until(scrs, t.levels, level)?),
                None => notes.push(format!("{name}: no GSR events, peak count omitted")),
            }
        }
    }
    Ok(TestCalibration {
        test,
        decrease_level,
        optimal_level: decrease_level.map(|l| l - 1),
        hr_increment_bpm,
        gsr_peaks_until_decrease: gsr_peaks,
    })
}

/// The optimal level is the one just before performance decreases.
pub fn calibrate_subject(
    inputs: &CalibrationInputs<'_>,
    cfg: &CalibrationConfig,
) -> Result<SubjectCalibration> {
    let mut notes = Vec::new();
    let stroop = calibrate_test(TestKind::Stroop, inputs, &inputs.stroop, cfg, &mut notes)?;
    let math = calibrate_test(TestKind::Math, inputs, &inputs.math, cfg, &mut notes)?;
    Ok(SubjectCalibration {
        subject_id: inputs.subject_id.to_string(),
        stroop,
        math,
        notes,
    })
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "subject_id",
    "test1_level_decrease",
    "test1_optimal_level",
    "test1_hr_increment_bpm",
    "test1_gsr_peaks",
    "test2_level_decrease",
    "test2_optimal_level",
    "test2_hr_increment_bpm",
    "test2_gsr_peaks",
];

fn na<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl SubjectCalibration {
    pub fn csv_fields(&self) -> Vec<String> {
        let mut row = vec![self.subject_id.clone()];
        for t in [&self.stroop, &self.math] {
            row.push(na(t.decrease_level));
            row.push(na(t.optimal_level));
            row.push(na(t.hr_increment_bpm));
            row.push(na(t.gsr_peaks_until_decrease));
        }
        row
    }
}

/// Delimited report: one row per subject, test 1 is Stroop and test 2 math.
pub fn write_report(rows: &[SubjectCalibration], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub config: CalibrationConfig,
    pub hr_increment_units: String,
    pub subjects: Vec<SubjectCalibration>,
}

pub fn save_report(
    rows: &[SubjectCalibration],
    cfg: &CalibrationConfig,
    csv_path: &Path,
    json_path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    write_report(rows, file).map_err(|e| Error::parse(csv_path, e))?;
    let summary = CalibrationSummary {
        config: *cfg,
        hr_increment_units: "bpm".into(),
        subjects: rows.to_vec(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::parse(json_path, e))?;
    std::fs::write(json_path, text + "\n").map_err(|e| Error::io(json_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(acc: [f64; 7]) -> Vec<PerformanceRecord> {
        acc.iter()
            .enumerate()
            .map(|(i, &a)| PerformanceRecord {
                level: i as u8 + 1,
                n_correct: 0,
                n_total: 0,
                accuracy_pct: a,
            })
            .collect()
    }

    fn levels() -> Vec<Window> {
        (0..7)
            .map(|i| Window::new(f64::from(i) * 30.0, f64::from(i + 1) * 30.0, format!("II/level-{}", i + 1)).unwrap())
            .collect()
    }

    #[test]
    fn decrease_rule_examples() {
        let cfg = CalibrationConfig::default();
        assert_eq!(detect_decrease_level(&records([100.0; 7]), &cfg).unwrap(), None);
        let drop = [100.0, 100.0, 100.0, 100.0, 100.0, 50.0, 40.0];
        assert_eq!(detect_decrease_level(&records(drop), &cfg).unwrap(), Some(6));
        let rising = [40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];
        assert_eq!(detect_decrease_level(&records(rising), &cfg).unwrap(), None);
        assert_eq!(detect_decrease_level(&records([0.0; 7]), &cfg).unwrap(), None);
        // A dip that recovers is not sustained.
        let dip = [100.0, 80.0, 100.0, 100.0, 100.0, 100.0, 100.0];
        assert_eq!(detect_decrease_level(&records(dip), &cfg).unwrap(), None);
        let loose = CalibrationConfig { sustain: false, ..cfg };
        assert_eq!(detect_decrease_level(&records(dip), &loose).unwrap(), Some(2));
    }

    #[test]
    fn rejects_malformed_records() {
        let cfg = CalibrationConfig::default();
        assert!(detect_decrease_level(&records([100.0; 7])[..6], &cfg).is_err());
        let mut r = records([100.0; 7]);
        r[3].level = 2;
        assert!(matches!(detect_decrease_level(&r, &cfg), Err(Error::MalformedRecords(_))));
        let bad = CalibrationConfig { delta_pct: 0.0, sustain: true };
        assert!(matches!(detect_decrease_level(&records([100.0; 7]), &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn hr_increment_and_peaks() {
        let times: Vec<f64> = (1..210).map(f64::from).collect();
        let hr = HrSeries {
            hr_bpm: times.iter().map(|t| 70.0 + (t / 30.0).floor() * 4.0).collect(),
            flagged: vec![false; times.len()],
            times_s: times,
        };
        let lv = levels();
        assert!((hr_increment(&hr, &lv, 6).unwrap() - 20.0).abs() < 1e-9);
        assert!(hr_increment(&hr, &lv, 1).is_err());

        let scr = |p: f64| ScrEvent { onset_s: p - 1.0, peak_s: p, amplitude_us: 0.1 };
        let events = [scr(-5.0), scr(10.0), scr(50.0), scr(100.0), scr(149.0), scr(150.0), scr(200.0)];
        assert_eq!(gsr_peaks_until(&events, &lv, 6).unwrap(), 4);
        assert_eq!(gsr_peaks_until(&[], &lv, 6).unwrap(), 0);
    }

    #[test]
    fn subject_calibration_and_report() {
        let lv = levels();
        let drop = records([100.0, 100.0, 100.0, 100.0, 100.0, 50.0, 40.0]);
        let flat = records([100.0; 7]);
        let scrs: Vec<ScrEvent> = [10.0, 40.0, 70.0]
            .iter()
            .map(|&p| ScrEvent { onset_s: p - 1.0, peak_s: p, amplitude_us: 0.2 })
            .collect();
        let inputs = CalibrationInputs {
            subject_id: "S01",
            hr: None,
            scrs: Some(&scrs),
            stroop: TestInputs { records: &drop, levels: &lv },
            math: TestInputs { records: &flat, levels: &lv },
        };
        let c = calibrate_subject(&inputs, &CalibrationConfig::default()).unwrap();
        assert_eq!(c.stroop.decrease_level, Some(6));
        assert_eq!(c.stroop.optimal_level, Some(5));
        assert_eq!(c.stroop.gsr_peaks_until_decrease, Some(3));
        assert_eq!(c.math.decrease_level, None);
        assert_eq!(c.math.optimal_level, None);
        assert_eq!(c.notes.len(), 2);

        let mut buf = Vec::new();
        write_report(&[c], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "S01,6,5,NA,3,NA,NA,NA,NA");
    }
}
