use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use perfcal::calibration::{
    calibrate_subject, detect_decrease_level, hr_increment, CalibrationConfig, CalibrationInputs, TestInputs,
};
use perfcal::cardiac::HrSeries;
use perfcal::eda::ScrEvent;
use perfcal::features::{extract_features, gsr_cumulative_slope, hr_slope, SessionSignals};
use perfcal::markers::LEVELS;
use perfcal::protocol::{
    generate_math_plan, generate_stroop_plan, partition_levels, score_session, LogRecord, PerformanceRecord,
    SessionLog, StimulusPlan,
};
use perfcal::Window;

fn sorted_times(raw: &[f64]) -> Vec<f64> {
    let mut t = raw.to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn hr_series(times: Vec<f64>, bpm: Vec<f64>) -> HrSeries {
    let flagged = vec![false; times.len()];
    HrSeries {
        times_s: times,
        hr_bpm: bpm,
        flagged,
    }
}

fn events(peaks: &[f64], amps: &[f64]) -> Vec<ScrEvent> {
    peaks
        .iter()
        .zip(amps)
        .map(|(p, a)| ScrEvent {
            onset_s: p - 1.0,
            peak_s: *p,
            amplitude_us: *a,
        })
        .collect()
}

/// Least squares through the normal equations, in centered form.
fn oracle_line(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    let slope = sxy / sxx;
    (slope, ym - slope * tm)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-7 * scale.max(1.0)
}

fn records(acc_counts: &[usize], total: usize) -> Vec<PerformanceRecord> {
    acc_counts
        .iter()
        .enumerate()
        .map(|(i, c)| PerformanceRecord::new(i as u8 + 1, *c, total))
        .collect()
}

/// A log answering every slide: right, wrong, late or not at all.
fn random_log(plan: &StimulusPlan, seed: u64) -> SessionLog {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at = 0u64;
    let records = plan
        .slides
        .iter()
        .map(|s| {
            let deadline_ms = (s.deadline_s * 1000.0) as u64;
            let presented = at;
            at += deadline_ms + 100;
            let (response, delay) = match rng.random_range(0..4) {
                0 => (Some(s.expected_response()), rng.random_range(0..=deadline_ms)),
                1 => (Some("wrong".to_string()), rng.random_range(0..=deadline_ms)),
                2 => (Some(s.expected_response()), deadline_ms + 1 + rng.random_range(0..500)),
                _ => (None, 0),
            };
            LogRecord {
                slide_index: s.index,
                presented_at_ms: presented,
                responded_at_ms: response.as_ref().map(|_| presented + delay),
                response,
            }
        })
        .collect();
    SessionLog { records }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hr_slope_matches_normal_equations(
        raw in prop::collection::vec(0.0f64..600.0, 3..120),
        a in 40.0f64..120.0,
        b in -0.2f64..0.2,
        noise in prop::collection::vec(-5.0f64..5.0, 120),
    ) {
        let t = sorted_times(&raw);
        prop_assume!(t.len() >= 3);
        let y: Vec<f64> = t.iter().zip(&noise).map(|(t, e)| a + b * t + e).collect();
        let fit = hr_slope(&hr_series(t.clone(), y.clone()), &Window::new(-1.0, 601.0, "all").unwrap()).unwrap();
        let (slope, intercept) = oracle_line(&t, &y);
        prop_assert!(close(fit.slope, slope, 1.0), "{} vs {}", fit.slope, slope);
        prop_assert!(close(fit.intercept, intercept, a), "{} vs {}", fit.intercept, intercept);
    }

    #[test]
    fn slopes_are_translation_equivariant(
        raw in prop::collection::vec(0.0f64..300.0, 3..60),
        amps in prop::collection::vec(0.01f64..2.0, 60),
        c in -1000.0f64..1000.0,
    ) {
        let t = sorted_times(&raw);
        prop_assume!(t.len() >= 3);
        let y: Vec<f64> = t.iter().zip(&amps).map(|(t, a)| 60.0 + 0.05 * t + 10.0 * a).collect();
        let w = Window::new(-1.0, 301.0, "w").unwrap();
        let ws = Window::new(-1.0 + c, 301.0 + c, "w").unwrap();
        let shifted: Vec<f64> = t.iter().map(|t| t + c).collect();

        let base = hr_slope(&hr_series(t.clone(), y.clone()), &w).unwrap();
        let moved = hr_slope(&hr_series(shifted.clone(), y), &ws).unwrap();
        prop_assert!(close(moved.slope, base.slope, 1.0));
        prop_assert!(close(moved.intercept, base.intercept - c * base.slope, 1000.0));

        let base = gsr_cumulative_slope(&events(&t, &amps), &w).unwrap();
        let moved = gsr_cumulative_slope(&events(&shifted, &amps), &ws).unwrap();
        prop_assert!(close(moved.slope, base.slope, 1.0));
        prop_assert!(close(moved.intercept, base.intercept - c * base.slope, 1000.0));
    }

    #[test]
    fn event_counts_add_over_a_split(
        peaks in prop::collection::vec(0.0f64..200.0, 0..80),
        amps in prop::collection::vec(0.01f64..2.0, 80),
        split in 1.0f64..199.0,
    ) {
        let signals = SessionSignals {
            ecg_hr: None,
            bvp_hr: None,
            scr_events: Some(events(&peaks, &amps)),
            emg_bursts: Some(vec![]),
        };
        let count = |lo: f64, hi: f64| {
            extract_features(&signals, &Window::new(lo, hi, "w").unwrap()).unwrap().gsr.unwrap()
        };
        let (left, right, whole) = (count(0.0, split), count(split, 200.0), count(0.0, 200.0));
        prop_assert_eq!(left.count + right.count, whole.count);
        let sum = left.mean_amplitude * left.count as f64 + right.mean_amplitude * right.count as f64;
        prop_assert!((sum - whole.mean_amplitude * whole.count as f64).abs() <= 1e-9 * (1.0 + sum));
    }

    #[test]
    fn smaller_delta_never_finds_a_later_decrease(
        counts in prop::collection::vec(0usize..=20, 7),
        d1 in 0.5f64..50.0,
        d2 in 0.5f64..50.0,
        sustain: bool,
    ) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let recs = records(&counts, 20);
        let at = |delta_pct| detect_decrease_level(&recs, &CalibrationConfig { delta_pct, sustain }).unwrap();
        let rank = |l: Option<u8>| l.map_or(u8::MAX, |l| l);
        prop_assert!(rank(at(lo)) <= rank(at(hi)), "{:?} at {} vs {:?} at {}", at(lo), lo, at(hi), hi);
    }

    #[test]
    fn decrease_ignores_slide_count_scale(counts in prop::collection::vec(0usize..=10, 7), k in 1usize..20) {
        let cfg = CalibrationConfig::default();
        let base = records(&counts, 10);
        let scaled: Vec<usize> = counts.iter().map(|c| c * k).collect();
        prop_assert_eq!(
            detect_decrease_level(&base, &cfg).unwrap(),
            detect_decrease_level(&records(&scaled, 10 * k), &cfg).unwrap()
        );
    }

    #[test]
    fn rising_accuracy_has_no_decrease(steps in prop::collection::vec(1usize..5, 7)) {
        let counts: Vec<usize> = steps.iter().scan(0, |acc, s| { *acc += s; Some(*acc) }).collect();
        let recs = records(&counts, 40);
        let levels: Vec<Window> = (0..7).map(|i| Window::new(i as f64, i as f64 + 1.0, "l").unwrap()).collect();
        let test = TestInputs { records: &recs, levels: &levels };
        let out = calibrate_subject(
            &CalibrationInputs { subject_id: "s", hr: None, scrs: None, stroop: test, math: test },
            &CalibrationConfig::default(),
        ).unwrap();
        prop_assert_eq!(out.stroop.decrease_level, None);
        prop_assert_eq!(out.math.optimal_level, None);
    }

    #[test]
    fn hr_increment_flips_under_time_reversal(
        raw in prop::collection::vec(0.0f64..70.0, 40..200),
        bpm in prop::collection::vec(50.0f64..150.0, 200),
        level in 2u8..=7,
    ) {
        let t = sorted_times(&raw);
        // Half-open windows would move a sample sitting on a boundary.
        prop_assume!(!t.iter().any(|t| t.fract() == 0.0 && (*t as i64) % 10 == 0));
        let levels: Vec<Window> = (0..7).map(|i| Window::new(i as f64 * 10.0, i as f64 * 10.0 + 10.0, "l").unwrap()).collect();
        let hr = hr_series(t.clone(), bpm[..t.len()].to_vec());
        let forward = hr_increment(&hr, &levels, level);

        let mirror = |w: &Window| Window::new(-w.end_s, -w.start_s, "m").unwrap();
        let mut mirrored: Vec<Window> = levels.iter().map(mirror).collect();
        mirrored.swap(0, usize::from(level - 1));
        let rev_t: Vec<f64> = t.iter().rev().map(|t| -t).collect();
        let rev_hr: Vec<f64> = bpm[..t.len()].iter().rev().copied().collect();
        let backward = hr_increment(&hr_series(rev_t, rev_hr), &mirrored, level);

        match (forward, backward) {
            (Ok(f), Ok(b)) => prop_assert!((f + b).abs() <= 1e-9 * (1.0 + f.abs()), "{} {}", f, b),
            (f, b) => prop_assert!(f.is_err() && b.is_err()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn plans_are_seed_deterministic(a in any::<u64>(), b in any::<u64>()) {
        prop_assert_eq!(generate_stroop_plan(a), generate_stroop_plan(a));
        prop_assert_eq!(generate_math_plan(a), generate_math_plan(a));
        if a != b {
            prop_assert_ne!(generate_stroop_plan(a), generate_stroop_plan(b));
            prop_assert_ne!(generate_math_plan(a), generate_math_plan(b));
        }
    }

    #[test]
    fn scoring_counts_on_time_correct_answers(seed in any::<u64>(), log_seed in any::<u64>(), math: bool) {
        let plan = if math { generate_math_plan(seed) } else { generate_stroop_plan(seed) };
        let log = random_log(&plan, log_seed);
        let scored = score_session(&plan, &log).unwrap();

        let mut expected = [0usize; LEVELS as usize];
        for r in &log.records {
            let s = &plan.slides[r.slide_index];
            let on_time = r.responded_at_ms.is_some_and(|at| (at - r.presented_at_ms) as f64 <= s.deadline_s * 1000.0);
            if on_time && r.response.as_deref() == Some(s.expected_response().as_str()) {
                expected[usize::from(s.level - 1)] += 1;
            }
        }
        let got: Vec<usize> = scored.iter().map(|r| r.n_correct).collect();
        prop_assert_eq!(got, expected.to_vec());
        prop_assert!(scored.iter().all(|r| r.n_correct <= r.n_total));
        prop_assert_eq!(scored.iter().map(|r| r.n_total).sum::<usize>(), plan.slides.len());

        let mut shuffled = log.clone();
        shuffled.records.shuffle(&mut ChaCha8Rng::seed_from_u64(log_seed ^ 1));
        prop_assert_eq!(score_session(&plan, &shuffled).unwrap(), scored);
    }

    #[test]
    fn level_windows_tile_the_scenario(seed in any::<u64>(), start in 0.0f64..2000.0, stretch in -0.04f64..0.04, math: bool) {
        let plan = if math { generate_math_plan(seed) } else { generate_stroop_plan(seed) };
        let end = start + plan.total_deadline_s() * (1.0 + stretch);
        let windows = partition_levels(&plan, &Window::new(start, end, "test").unwrap()).unwrap();
        prop_assert_eq!(windows.len(), usize::from(LEVELS));
        prop_assert_eq!(windows[0].start_s, start);
        prop_assert_eq!(windows[windows.len() - 1].end_s, end);
        for pair in windows.windows(2) {
            prop_assert_eq!(pair[0].end_s, pair[1].start_s);
        }
        prop_assert!(windows.iter().all(|w| w.end_s > w.start_s));
    }
}
