use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn perfcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perfcal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    o
}

fn synth(profile: &str, seed: u64, dir: &Path) {
    ok(perfcal(&["synth", "--profile", profile, "--seed", &seed.to_string(), "--out", p(dir)]));
}

fn process(session: &Path, out: &Path) {
    ok(perfcal(&[
        "process",
        "--manifest",
        p(&session.join("manifest.json")),
        "--markers",
        p(&session.join("markers.json")),
        "--out",
        p(out),
    ]));
}

fn calibrate(session: &Path, processed: &Path, out: &Path, extra: &[&str]) -> Output {
    let markers = session.join("markers.json");
    let mut args = vec![
        "calibrate",
        "--markers",
        p(&markers),
        "--session",
        p(processed),
        "--out",
        p(out),
    ];
    let plans: Vec<PathBuf> = ["stroop", "math"]
        .iter()
        .flat_map(|t| [session.join(format!("{t}_plan.json")), session.join(format!("{t}_log.jsonl"))])
        .collect();
    for pair in plans.chunks(2) {
        args.extend(["--plan", p(&pair[0]), "--log", p(&pair[1])]);
    }
    args.extend_from_slice(extra);
    perfcal(&args)
}

/// One paper-like session, synthesized and processed once for all tests.
fn paper_like() -> &'static (TempDir, PathBuf, PathBuf) {
    static CELL: OnceLock<(TempDir, PathBuf, PathBuf)> = OnceLock::new();
    CELL.get_or_init(|| {
        let root = tempfile::tempdir().unwrap();
        let session = root.path().join("session");
        let processed = root.path().join("processed");
        synth("paper-like", 7, &session);
        process(&session, &processed);
        (root, session, processed)
    })
}

#[test]
fn synthetic_session_validates() {
    let (_, session, _) = paper_like();
    let o = ok(perfcal(&[
        "validate",
        "--manifest",
        p(&session.join("manifest.json")),
        "--markers",
        p(&session.join("markers.json")),
    ]));
    let text = stdout(&o);
    assert!(text.trim_end().ends_with("ok"), "{text}");
    assert!(!text.contains("warning"), "{text}");
}

#[test]
fn overlapping_markers_fail_validation() {
    let (root, session, _) = paper_like();
    let mut markers: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(session.join("markers.json")).unwrap()).unwrap();
    markers["scenarios"][2]["start_s"] = serde_json::json!(400.0);
    let bad = root.path().join("overlap.json");
    fs::write(&bad, markers.to_string()).unwrap();
    let o = perfcal(&["validate", "--manifest", p(&session.join("manifest.json")), "--markers", p(&bad)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("overlaps"), "{}", stderr(&o));
}

#[test]
fn missing_gsr_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    synth("calm", 1, dir.path());
    let manifest = dir.path().join("manifest.json");
    let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    m["entries"].as_array_mut().unwrap().retain(|e| e["channel_kind"] != "GSR");
    fs::write(&manifest, m.to_string()).unwrap();
    let o = ok(perfcal(&["validate", "--manifest", p(&manifest)]));
    let text = stdout(&o);
    assert!(text.contains("warning: GSR channel missing"), "{text}");
    assert!(text.trim_end().ends_with("ok"));
}

#[test]
fn process_writes_event_files_and_is_deterministic() {
    let (root, session, processed) = paper_like();
    for f in ["ecg_beats.csv", "bvp_beats.csv", "scr_events.csv", "emg_bursts.csv", "processed.json"] {
        assert!(processed.join(f).exists(), "{f}");
    }
    let again = root.path().join("again");
    process(session, &again);
    for f in ["ecg_beats.csv", "bvp_beats.csv", "scr_events.csv", "emg_bursts.csv", "processed.json"] {
        assert_eq!(fs::read(processed.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn corrupt_channel_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(perfcal(&["synth", "--kind", "ecg", "--duration", "10", "--out", p(dir.path())]));
    let csv = dir.path().join("ecg.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str("not,a,number\n");
    fs::write(&csv, text).unwrap();
    let o = perfcal(&[
        "process",
        "--manifest",
        p(&dir.path().join("manifest.json")),
        "--out",
        p(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ecg.csv"), "{}", stderr(&o));
}

#[test]
fn features_table_has_nineteen_rows() {
    let (root, _, processed) = paper_like();
    let out = root.path().join("features");
    ok(perfcal(&["features", "--session", p(processed), "--out", p(&out)]));
    let csv = fs::read_to_string(out.join("features.csv")).unwrap();
    assert_eq!(csv.lines().count(), 20);
    assert!(out.join("slopes.csv").exists());
}

#[test]
fn paper_like_subject_calibrates_to_six_and_five() {
    let (root, session, processed) = paper_like();
    let out = root.path().join("calibration");
    let o = ok(calibrate(session, processed, &out, &[]));
    assert!(stdout(&o).contains("Stroop decrease 6 optimal 5"), "{}", stdout(&o));
    let csv = fs::read_to_string(out.join("calibration.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[1..3], ["6", "5"]);
    for svg in ["accuracy.svg", "hr.svg", "gsr_cumulative.svg"] {
        assert!(out.join("plots").join(svg).exists(), "{svg}");
    }

    ok(perfcal(&["features", "--session", p(processed), "--out", p(&out)]));
    ok(perfcal(&["report", "--out", p(&out)]));
    let md = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("| Stroop | 6 | 5 |"), "{md}");
}

#[test]
fn calm_subject_has_no_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("s");
    let out = dir.path().join("o");
    synth("calm", 2, &session);
    process(&session, &out);
    let o = ok(calibrate(&session, &out, &out, &[]));
    assert!(stdout(&o).contains("Stroop decrease no decrease"), "{}", stdout(&o));
    let csv = fs::read_to_string(out.join("calibration.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains("NA"));
}

fn math_decrease(out: &Path) -> u8 {
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    json["subjects"][0]["math"]["decrease_level"].as_u64().unwrap() as u8
}

#[test]
fn smaller_delta_never_decreases_later() {
    let (root, session, processed) = paper_like();
    let mut last = 0;
    for delta in ["5", "10", "20"] {
        let out = root.path().join(format!("delta-{delta}"));
        ok(calibrate(session, processed, &out, &["--delta", delta]));
        let level = math_decrease(&out);
        assert!(level >= last, "delta {delta}: {level} < {last}");
        last = level;
    }
}

#[test]
fn flags_override_config_file() {
    let (root, session, processed) = paper_like();
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, "[calibration]\ndelta_pct = 20.0\n").unwrap();
    let from_file = root.path().join("from-file");
    ok(calibrate(session, processed, &from_file, &["--config", p(&cfg)]));
    let from_flag = root.path().join("from-flag");
    ok(calibrate(session, processed, &from_flag, &["--config", p(&cfg), "--delta", "5"]));
    assert_eq!(math_decrease(&from_file), 4);
    assert_eq!(math_decrease(&from_flag), 2);
}

#[test]
fn unpaired_plan_and_log_is_a_validation_error() {
    let (root, session, processed) = paper_like();
    let o = perfcal(&[
        "calibrate",
        "--session",
        p(processed),
        "--out",
        p(&root.path().join("x")),
        "--plan",
        p(&session.join("stroop_plan.json")),
        "--plan",
        p(&session.join("math_plan.json")),
        "--log",
        p(&session.join("stroop_log.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn single_channel_synth_writes_truth() {
    let dir = tempfile::tempdir().unwrap();
    ok(perfcal(&["synth", "--kind", "ecg", "--hr", "60", "--duration", "60", "--out", p(dir.path())]));
    let beats = fs::read_to_string(dir.path().join("truth/beats.csv")).unwrap();
    assert_eq!(beats.lines().count(), 61);
    ok(perfcal(&["validate", "--manifest", p(&dir.path().join("manifest.json"))]));
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth("planted-3", 9, a.path());
    synth("planted-3", 9, b.path());
    for f in ["gsr.csv", "ecg.csv", "stroop_log.jsonl", "math_plan.json", "markers.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn help_lists_defaults() {
    let o = ok(perfcal(&["--help"]));
    let text = stdout(&o);
    assert!(text.contains("delta_pct = 10.0"), "{text}");
    assert!(text.contains("lambda"), "{text}");
}
