//! Acceptance suite. Each criterion prints one PASS/FAIL line with the
//! measured numbers; the process exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p perfcal-cli --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use perfcal::calibration::{detect_decrease_level, CalibrationConfig};
use perfcal::cardiac::{detect_r_peaks, DetectorConfig, HrSeries};
use perfcal::eda::{decompose, detect_scr_events, reconstruct, BatemanKernel, EdaConfig, ScrConfig, ScrEvent};
use perfcal::emg::emg_envelope;
use perfcal::features::{gsr_cumulative_slope, hr_slope, SlopeFit};
use perfcal::ingest::read_series;
use perfcal::markers::SessionMarkers;
use perfcal::pipeline::{load_channels, process_session, run_calibrate, ProcessConfig, TestRun};
use perfcal::protocol::{generate_math_plan, generate_stroop_plan, Color, Operator, Payload, PerformanceRecord};
use perfcal::synth::{gen_ecg, gen_gsr, gen_session, layout, HrProfile, SeededScr, StressProfile, SynthSpec};
use perfcal::{ChannelKind, Window};

// Pinned tolerances and budgets.
const BEAT_MATCH_S: f64 = 0.05;
const MIN_SENSITIVITY: f64 = 0.99;
const MIN_PPV: f64 = 0.95;
const MAX_HR_ERROR_BPM: f64 = 1.0;
const BEAT_BUDGET: Duration = Duration::from_secs(10);

const SCR_MATCH_S: f64 = 1.0;
const MIN_COUNT_SHARE: f64 = 0.95;
const MAX_MEDIAN_AMP_ERR: f64 = 0.10;
const MAX_RECON_RMS_US: f64 = 1e-3;
const EDA_BUDGET: Duration = Duration::from_secs(60);

const SLOPE_REL_TOL: f64 = 1e-9;
const CHI2_ALPHA: f64 = 0.01;
const EMG_FLAT_SPREAD: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_beats() -> Outcome {
    let mut truth_total = 0usize;
    let mut detected_total = 0usize;
    let mut matched_total = 0usize;
    let mut worst_hr_err = 0.0f64;
    let mut elapsed = Duration::ZERO;
    let mut sessions = 0;
    for (i, bpm) in (0..60).map(|i| (i, 40.0 + 140.0 * f64::from(i) / 59.0)) {
        for snr in [None, Some(10.0)] {
            let spec = SynthSpec {
                seed: 1000 + i as u64,
                duration_s: 60.0,
                hr: HrProfile::constant(bpm),
                ecg_snr_db: snr,
                ..Default::default()
            };
            let (ecg, truth) = gen_ecg(&spec).unwrap();
            let start = Instant::now();
            let found = detect_r_peaks(&ecg, &DetectorConfig::ecg()).unwrap();
            elapsed += start.elapsed();
            sessions += 1;

            let truth = truth.times();
            let found = found.times();
            let matched = truth
                .iter()
                .filter(|t| found.iter().any(|f| (f - *t).abs() <= BEAT_MATCH_S))
                .count();
            truth_total += truth.len();
            detected_total += found.len();
            matched_total += matched;

            // Window-mean HR from detected RR intervals in the physiological range.
            let rates: Vec<f64> = found
                .windows(2)
                .map(|w| w[1] - w[0])
                .filter(|rr| (0.3..=2.0).contains(rr))
                .map(|rr| 60.0 / rr)
                .collect();
            let mean = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
            worst_hr_err = worst_hr_err.max((mean - bpm).abs());
        }
    }
    let se = matched_total as f64 / truth_total as f64;
    let ppv = matched_total as f64 / detected_total as f64;
    outcome(
        se >= MIN_SENSITIVITY && ppv >= MIN_PPV && worst_hr_err < MAX_HR_ERROR_BPM && elapsed < BEAT_BUDGET,
        format!(
            "{sessions} sessions, Se {:.4} PPV {:.4}, worst mean-HR error {worst_hr_err:.3} bpm, detection {:.2} s",
            se,
            ppv,
            elapsed.as_secs_f64()
        ),
    )
}

fn random_events(rng: &mut ChaCha8Rng, duration: f64, min_amp: f64) -> Vec<SeededScr> {
    let mut events = Vec::new();
    let mut t = 5.0 + rng.random_range(0.0..5.0);
    while t < duration - 15.0 {
        let amp = (min_amp.ln() + rng.random_range(0.0..1.0) * (1.0f64.ln() - min_amp.ln())).exp();
        events.push(SeededScr {
            time_s: t,
            amplitude_us: amp,
        });
        t += rng.random_range(5.0..20.0);
    }
    events
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_eda() -> Outcome {
    let kernel = BatemanKernel::default();
    let scr_cfg = ScrConfig::default();
    let min_amp = 2.0 * scr_cfg.amplitude_threshold_us;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut exact = 0;
    let mut exact_noisy = 0;
    let mut amp_errors = Vec::new();
    let mut worst_rms = 0.0f64;
    let mut elapsed = Duration::ZERO;
    let n_sessions = 100;
    for s in 0..n_sessions {
        let duration = 120.0;
        let spec = SynthSpec {
            seed: s,
            duration_s: duration,
            gsr_tonic_us: rng.random_range(1.0..10.0),
            gsr_drift_us_per_s: rng.random_range(-2e-3..2e-3),
            gsr_events: random_events(&mut rng, duration, min_amp),
            gsr_snr_db: if s % 2 == 0 { None } else { Some(30.0) },
            ..Default::default()
        };
        let (gsr, truth) = gen_gsr(&spec).unwrap();
        let start = Instant::now();
        let dec = decompose(&gsr, &kernel, &EdaConfig::default()).unwrap();
        let found = detect_scr_events(&dec, &scr_cfg);
        elapsed += start.elapsed();

        if found.len() == truth.len() {
            exact += 1;
            if spec.gsr_snr_db.is_some() {
                exact_noisy += 1;
            }
        }
        for t in &truth {
            if let Some(f) = found
                .iter()
                .filter(|f| (f.peak_s - t.peak_s).abs() <= SCR_MATCH_S)
                .min_by(|a, b| (a.peak_s - t.peak_s).abs().total_cmp(&(b.peak_s - t.peak_s).abs()))
            {
                amp_errors.push((f.amplitude_us - t.amplitude_us).abs() / t.amplitude_us);
            }
        }
        if spec.gsr_snr_db.is_none() {
            let rec = reconstruct(&dec, &kernel).unwrap();
            let rms = (rec
                .values()
                .iter()
                .zip(gsr.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / gsr.len() as f64)
                .sqrt();
            worst_rms = worst_rms.max(rms);
        }
    }
    let share = f64::from(exact) / n_sessions as f64;
    let half = n_sessions / 2;
    let med = median(amp_errors.clone());
    outcome(
        share >= MIN_COUNT_SHARE && med <= MAX_MEDIAN_AMP_ERR && worst_rms <= MAX_RECON_RMS_US && elapsed < EDA_BUDGET,
        format!(
            "{n_sessions} sessions (half at 30 dB), exact count {:.0}% (noiseless {}/{half}, 30 dB {exact_noisy}/{half}), median amplitude error {:.2}% over {} matched events, worst noiseless RMS {worst_rms:.2e} uS, {:.1} s",
            share * 100.0,
            exact - exact_noisy,
            med * 100.0,
            amp_errors.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// OLS through the normal equations on times shifted to the window start.
fn ols_oracle(t: &[f64], y: &[f64], t0: f64) -> Option<(f64, f64)> {
    let n = t.len() as f64;
    if t.len() < 2 {
        return None;
    }
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(y) {
        let u = ti - t0;
        st += u;
        sy += yi;
        stt += u * u;
        sty += u * yi;
    }
    let det = n * stt - st * st;
    if det <= 1e-12 * n * stt {
        return None;
    }
    let slope = (n * sty - st * sy) / det;
    let intercept_at_t0 = (sy - slope * st) / n;
    Some((slope, intercept_at_t0 - slope * t0))
}

fn slope_error(fit: Option<SlopeFit>, t: &[f64], y: &[f64], w: &Window) -> Option<f64> {
    match (fit, ols_oracle(t, y, w.start_s)) {
        (None, None) => Some(0.0),
        (Some(f), Some((slope, intercept))) => {
            let span_t = t.iter().cloned().fold(f64::MIN, f64::max) - t.iter().cloned().fold(f64::MAX, f64::min);
            let span_y = y.iter().cloned().fold(f64::MIN, f64::max) - y.iter().cloned().fold(f64::MAX, f64::min);
            let y_scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let slope_scale = slope.abs().max(span_y / span_t).max(f64::MIN_POSITIVE);
            let icpt_scale = intercept.abs().max(y_scale + slope.abs() * w.end_s).max(f64::MIN_POSITIVE);
            Some(((f.slope - slope).abs() / slope_scale).max((f.intercept - intercept).abs() / icpt_scale))
        }
        _ => None,
    }
}

fn criterion_slopes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut disagreements = 0;
    for _ in 0..1000 {
        let a = rng.random_range(0.0..1100.0);
        let w = Window::new(a, a + rng.random_range(1.0..300.0), "w").unwrap();

        let n = rng.random_range(0..400);
        let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1200.0)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let hr = HrSeries {
            hr_bpm: times.iter().map(|_| rng.random_range(45.0..160.0)).collect(),
            flagged: times.iter().map(|_| rng.random_bool(0.1)).collect(),
            times_s: times,
        };
        let (t, y): (Vec<f64>, Vec<f64>) = hr
            .times_s
            .iter()
            .zip(&hr.hr_bpm)
            .zip(&hr.flagged)
            .filter(|((t, _), f)| !**f && **t >= w.start_s && **t < w.end_s)
            .map(|((t, h), _)| (*t, *h))
            .unzip();
        match slope_error(hr_slope(&hr, &w).ok(), &t, &y, &w) {
            Some(e) => worst = worst.max(e),
            None => disagreements += 1,
        }

        let m = rng.random_range(0..60);
        let scrs: Vec<ScrEvent> = (0..m)
            .map(|_| {
                let peak = rng.random_range(0.0..1200.0);
                ScrEvent {
                    onset_s: peak - 1.5,
                    peak_s: peak,
                    amplitude_us: rng.random_range(0.01..2.0),
                }
            })
            .collect();
        let mut inside: Vec<&ScrEvent> = scrs.iter().filter(|e| e.peak_s >= w.start_s && e.peak_s < w.end_s).collect();
        inside.sort_by(|a, b| a.peak_s.total_cmp(&b.peak_s));
        let t: Vec<f64> = inside.iter().map(|e| e.peak_s).collect();
        let mut acc = 0.0;
        let y: Vec<f64> = inside
            .iter()
            .map(|e| {
                acc += e.amplitude_us;
                acc
            })
            .collect();
        match slope_error(gsr_cumulative_slope(&scrs, &w).ok(), &t, &y, &w) {
            Some(e) => worst = worst.max(e),
            None => disagreements += 1,
        }
    }
    outcome(
        worst <= SLOPE_REL_TOL && disagreements == 0,
        format!("1000 HR and 1000 GSR inputs, worst relative error {worst:.2e}, {disagreements} fit/no-fit disagreements"),
    )
}

fn chi_square_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn criterion_protocol() -> Outcome {
    let mut counts_ok = true;
    let mut ink = [0u64; 7];
    let mut word = [0u64; 7];
    let mut ops = [0u64; 4];
    for seed in 0..1000 {
        let stroop = generate_stroop_plan(seed);
        let math = generate_math_plan(seed);
        counts_ok &= stroop.slides.len() == 105 && stroop.slides_per_level() == [15; 7];
        counts_ok &= math.slides.len() == 49 && math.slides_per_level() == [7; 7];
        for s in &stroop.slides {
            if let Payload::Stroop { word: w, ink: i, .. } = &s.payload {
                ink[Color::ALL.iter().position(|c| c == i).unwrap()] += 1;
                word[Color::ALL.iter().position(|c| c == w).unwrap()] += 1;
            }
        }
        for s in &math.slides {
            if let Payload::Math { operator, .. } = &s.payload {
                ops[Operator::ALL.iter().position(|o| o == operator).unwrap()] += 1;
            }
        }
    }
    let (p_ink, p_word, p_ops) = (chi_square_p(&ink), chi_square_p(&word), chi_square_p(&ops));
    outcome(
        counts_ok && p_ink > CHI2_ALPHA && p_word > CHI2_ALPHA && p_ops > CHI2_ALPHA,
        format!(
            "1000 seeds, counts {}; chi-square p: ink {p_ink:.3}, word {p_word:.3}, operator {p_ops:.3}",
            if counts_ok { "exact" } else { "WRONG" }
        ),
    )
}

fn records(acc: [f64; 7]) -> Vec<PerformanceRecord> {
    acc.iter()
        .zip(1u8..)
        .map(|(&a, level)| PerformanceRecord {
            level,
            n_correct: 0,
            n_total: 0,
            accuracy_pct: a,
        })
        .collect()
}

fn process_and_calibrate(dir: &Path, out: &Path) -> perfcal::calibration::SubjectCalibration {
    let markers = SessionMarkers::load(&dir.join(layout::MARKERS)).unwrap();
    let ch = load_channels(&dir.join(layout::MANIFEST)).unwrap();
    let processed = process_session(&ch, &markers, &ProcessConfig::default()).unwrap();
    processed.write(out).unwrap();
    let runs = [
        TestRun::load(&dir.join(layout::STROOP_PLAN), &dir.join(layout::STROOP_LOG)).unwrap(),
        TestRun::load(&dir.join(layout::MATH_PLAN), &dir.join(layout::MATH_LOG)).unwrap(),
    ];
    run_calibrate(&processed, &markers, &runs, &CalibrationConfig::default(), out)
        .unwrap()
        .calibration
}

fn criterion_calibration() -> Outcome {
    const TABLE2: [f64; 7] = [99.55, 100.0, 99.55, 98.22, 92.88, 76.88, 52.44];
    const TABLE3: [f64; 7] = [100.0, 80.61, 82.65, 60.20, 56.12, 43.87, 15.30];
    let cfg = |delta_pct| CalibrationConfig {
        delta_pct,
        ..Default::default()
    };
    let t2 = detect_decrease_level(&records(TABLE2), &cfg(10.0)).unwrap();
    let t3: Vec<String> = [5.0, 10.0, 20.0]
        .iter()
        .map(|&d| {
            let l = detect_decrease_level(&records(TABLE3), &cfg(d)).unwrap();
            format!("d{d}->{}", l.map_or("none".into(), |l| l.to_string()))
        })
        .collect();

    let start = Instant::now();
    let mut recovered = 0;
    let mut misses = Vec::new();
    let seeds = 50u64;
    for seed in 0..seeds {
        let level = 2 + (seed % 6) as u8;
        let dir = tempfile::tempdir().unwrap();
        gen_session(&StressProfile::planted(level).unwrap(), 500 + seed)
            .unwrap()
            .write(dir.path())
            .unwrap();
        let c = process_and_calibrate(dir.path(), &dir.path().join("out"));
        let ok = c.stroop.decrease_level == Some(level)
            && c.math.decrease_level == Some(level)
            && c.stroop.optimal_level == Some(level - 1)
            && c.math.optimal_level == Some(level - 1)
            && c.stroop.hr_increment_bpm.is_some_and(|h| h > 0.0);
        if ok {
            recovered += 1;
        } else {
            misses.push(format!("seed {seed} planted {level}: {:?}/{:?}", c.stroop.decrease_level, c.math.decrease_level));
        }
    }
    outcome(
        t2 == Some(6) && recovered == seeds,
        format!(
            "Stroop cohort means d10 -> level {} (optimal {}); arithmetic cohort means {}; planted levels recovered end-to-end {recovered}/{seeds} in {:.0} s{}",
            t2.map_or("none".into(), |l| l.to_string()),
            t2.map_or("none".into(), |l| (l - 1).to_string()),
            t3.join(", "),
            start.elapsed().as_secs_f64(),
            if misses.is_empty() { String::new() } else { format!("; misses: {}", misses.join("; ")) }
        ),
    )
}

fn perfcal_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_perfcal"))
        .args(args)
        .status()
        .expect("binary runs");
    assert!(status.success(), "perfcal {args:?} failed");
}

fn cli_pipeline(root: &Path, seed: &str) -> PathBuf {
    let session = root.join("session");
    let out = root.join("out");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (session_s, out_s) = (s(&session), s(&out));
    let markers = s(&session.join(layout::MARKERS));
    perfcal_cli(&["synth", "--profile", "paper-like", "--seed", seed, "--out", &session_s]);
    perfcal_cli(&["process", "--manifest", &s(&session.join(layout::MANIFEST)), "--markers", &markers, "--out", &out_s]);
    perfcal_cli(&["features", "--markers", &markers, "--out", &out_s]);
    perfcal_cli(&[
        "calibrate",
        "--markers",
        &markers,
        "--out",
        &out_s,
        "--plan",
        &s(&session.join(layout::STROOP_PLAN)),
        "--log",
        &s(&session.join(layout::STROOP_LOG)),
        "--plan",
        &s(&session.join(layout::MATH_PLAN)),
        "--log",
        &s(&session.join(layout::MATH_LOG)),
    ]);
    perfcal_cli(&["report", "--out", &out_s]);
    root.to_path_buf()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn criterion_determinism(a: &Path, b: &Path) -> Outcome {
    let (ta, tb) = (tree(a), tree(b));
    let differing: Vec<String> = ta
        .keys()
        .chain(tb.keys())
        .filter(|k| ta.get(*k) != tb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && ta.len() > 20,
        format!(
            "synth, process, features, calibrate, report run twice via the CLI: {} files compared, {} differ{}",
            ta.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(", ")) }
        ),
    )
}

fn level_rows<'a>(features: &'a serde_json::Value, scenario: &str) -> Vec<&'a serde_json::Value> {
    (1..=7)
        .map(|l| {
            let label = format!("{scenario}/level-{l}");
            features["features"]
                .as_array()
                .unwrap()
                .iter()
                .find(|r| r["label"] == label.as_str())
                .unwrap()
        })
        .collect()
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn criterion_negative_finding(root: &Path) -> Outcome {
    let out = root.join("out");
    let features: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("features.json")).unwrap()).unwrap();
    let emg = read_series(&root.join("session").join(layout::channel_file(ChannelKind::Emg)), ChannelKind::Emg, 512.0).unwrap();
    let env = emg_envelope(&emg, 0.1).unwrap();
    let markers = SessionMarkers::load(&root.join("session").join(layout::MARKERS)).unwrap();

    let mut pass = true;
    let mut notes = Vec::new();
    for scenario in ["II", "IV"] {
        let rows = level_rows(&features, scenario);
        let f = |path: [&str; 2]| -> Vec<f64> { rows.iter().map(|r| r[path[0]][path[1]].as_f64().unwrap_or(f64::NAN)).collect() };
        let gsr = f(["gsr", "count"]);
        let hr = f(["hr", "hr_mean_bpm"]);
        let emg_count = f(["emg", "count"]);
        let emg_amp = f(["emg", "mean_amplitude"]);
        let emg_flat = emg_count.iter().all(|&c| c == emg_count[0]) && emg_amp.iter().all(|&a| a == emg_amp[0]);

        let env_means: Vec<f64> = markers
            .level_windows(scenario)
            .iter()
            .map(|w| {
                let r = env.index_range(w.start_s, w.end_s);
                env.values()[r.clone()].iter().sum::<f64>() / r.len() as f64
            })
            .collect();
        let lo = env_means.iter().cloned().fold(f64::MAX, f64::min);
        let hi = env_means.iter().cloned().fold(f64::MIN, f64::max);
        let spread = (hi - lo) / hi;

        pass &= emg_flat && spread < EMG_FLAT_SPREAD && strictly_increasing(&gsr) && strictly_increasing(&hr);
        notes.push(format!(
            "{scenario}: GSR counts {:?}, HR {:.1}..{:.1} bpm {}, EMG bursts {:?}, EMG envelope spread {:.1}%",
            gsr.iter().map(|c| *c as u64).collect::<Vec<_>>(),
            hr[0],
            hr[6],
            if strictly_increasing(&hr) { "increasing" } else { "NOT increasing" },
            emg_count.iter().map(|c| *c as u64).collect::<Vec<_>>(),
            spread * 100.0
        ));
    }
    outcome(pass, notes.join("; "))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "{} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((name, o));
    };

    run("beat detection", &criterion_beats);
    run("EDA round trip", &criterion_eda);
    run("slope fits", &criterion_slopes);
    run("protocol counts", &criterion_protocol);
    run("calibration", &criterion_calibration);

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli_pipeline(a.path(), "7");
    cli_pipeline(b.path(), "7");
    run("end-to-end determinism", &|| criterion_determinism(a.path(), b.path()));
    run("EMG negative finding", &|| criterion_negative_finding(a.path()));

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
