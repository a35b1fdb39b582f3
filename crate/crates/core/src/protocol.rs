//! The staged test protocol: Stroop and arithmetic stimulus plans with seven
//! difficulty levels, session logs and per-level performance scoring.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markers::LEVELS;
use crate::series::Window;

/// Relative slack between a scenario's duration and its plan's deadline total.
pub const PARTITION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Yellow,
    Red,
    Green,
    Blue,
    Black,
    White,
    Orange,
}

impl Color {
    pub const ALL: [Color; 7] = [
        Color::Yellow,
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Black,
        Color::White,
        Color::Orange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Yellow => "yellow",
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Black => "black",
            Color::White => "white",
            Color::Orange => "orange",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl Operator {
    pub const ALL: [Operator; 4] = [Operator::Add, Operator::Sub, Operator::Mul, Operator::Div];

    pub fn symbol(self) -> char {
        match self {
            Operator::Add => '+',
            Operator::Sub => '-',
            Operator::Mul => '×',
            Operator::Div => '÷',
        }
    }

    /// `None` for division by zero or a non-integer quotient.
    pub fn apply(self, a: i64, b: i64) -> Option<i64> {
        match self {
            Operator::Add => a.checked_add(b),
            Operator::Sub => a.checked_sub(b),
            Operator::Mul => a.checked_mul(b),
            Operator::Div => (b != 0 && a % b == 0).then(|| a / b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Stroop,
    Math,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Payload {
    Stroop {
        word: Color,
        ink: Color,
        congruent: bool,
    },
    Math {
        operand_a: i64,
        operand_b: i64,
        operator: Operator,
        expected_answer: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slide {
    pub index: usize,
    pub level: u8,
    pub kind: TestKind,
    pub payload: Payload,
    /// Response budget after presentation.
    pub deadline_s: f64,
}

impl Slide {
    /// The response that scores as correct: the ink color for Stroop slides,
    /// the decimal result for arithmetic.
    pub fn expected_response(&self) -> String {
        match &self.payload {
            Payload::Stroop { ink, .. } => ink.name().to_string(),
            Payload::Math {
                expected_answer, ..
            } => expected_answer.to_string(),
        }
    }

    pub fn is_correct_response(&self, response: &str) -> bool {
        let response = response.trim();
        match &self.payload {
            Payload::Stroop { ink, .. } => response.eq_ignore_ascii_case(ink.name()),
            Payload::Math {
                expected_answer, ..
            } => response.parse::<i64>().ok() == Some(*expected_answer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusPlan {
    pub kind: TestKind,
    pub seed: u64,
    pub slides: Vec<Slide>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StroopConfig {
    pub slides_per_level: usize,
    pub deadline_first_s: f64,
    pub deadline_last_s: f64,
    /// When positive, deadlines are rescaled to sum to this duration.
    pub total_s: f64,
}

impl Default for StroopConfig {
    fn default() -> Self {
        Self {
            slides_per_level: 15,
            deadline_first_s: 3.2,
            deadline_last_s: 1.6,
            total_s: 240.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathConfig {
    pub slides_per_level: usize,
    pub deadline_first_s: f64,
    pub deadline_last_s: f64,
    pub total_s: f64,
    pub digits_first: u32,
    pub digits_last: u32,
}

impl Default for MathConfig {
    fn default() -> Self {
        Self {
            slides_per_level: 7,
            deadline_first_s: 9.0,
            deadline_last_s: 4.0,
            total_s: 300.0,
            digits_first: 1,
            digits_last: 3,
        }
    }
}

/// Linear interpolation across levels 1..=7.
fn level_lerp(first: f64, last: f64, level: u8) -> f64 {
    first + (last - first) * f64::from(level - 1) / f64::from(LEVELS - 1)
}

/// Per-level deadlines, linear in level and scaled to `total_s` when given.
fn level_deadlines(first: f64, last: f64, per_level: usize, total_s: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=LEVELS).map(|l| level_lerp(first, last, l)).collect();
    let sum = raw.iter().sum::<f64>() * per_level as f64;
    let scale = if total_s > 0.0 { total_s / sum } else { 1.0 };
    raw.into_iter().map(|d| d * scale).collect()
}

pub fn generate_stroop_plan(seed: u64) -> StimulusPlan {
    generate_stroop_plan_with(seed, &StroopConfig::default())
}

/// Ink colors are uniform over the seven colors. The share of incongruent
/// slides (word differs from ink) rises linearly from none at level 1 to all
/// at level 7, and deadlines shrink linearly.
pub fn generate_stroop_plan_with(seed: u64, cfg: &StroopConfig) -> StimulusPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deadlines = level_deadlines(
        cfg.deadline_first_s,
        cfg.deadline_last_s,
        cfg.slides_per_level,
        cfg.total_s,
    );
    let n = cfg.slides_per_level;
    let mut slides = Vec::with_capacity(n * usize::from(LEVELS));
    for level in 1..=LEVELS {
        let share = level_lerp(0.0, 1.0, level);
        let incongruent = (share * n as f64).round() as usize;
        let mut flags: Vec<bool> = (0..n).map(|i| i < incongruent).collect();
        flags.shuffle(&mut rng);
        for incongruent in flags {
            let ink = Color::ALL[rng.random_range(0..Color::ALL.len())];
            let word = if incongruent {
                let others: Vec<Color> = Color::ALL.into_iter().filter(|c| *c != ink).collect();
                others[rng.random_range(0..others.len())]
            } else {
                ink
            };
            slides.push(Slide {
                index: slides.len(),
                level,
                kind: TestKind::Stroop,
                payload: Payload::Stroop {
                    word,
                    ink,
                    congruent: !incongruent,
                },
                deadline_s: deadlines[usize::from(level - 1)],
            });
        }
    }
    StimulusPlan {
        kind: TestKind::Stroop,
        seed,
        slides,
    }
}

pub fn generate_math_plan(seed: u64) -> StimulusPlan {
    generate_math_plan_with(seed, &MathConfig::default())
}

/// Operators are uniform over the four arithmetic operations; operand digit
/// count grows with level, deadlines shrink. Subtraction never goes negative
/// and division always has an integer result.
pub fn generate_math_plan_with(seed: u64, cfg: &MathConfig) -> StimulusPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deadlines = level_deadlines(
        cfg.deadline_first_s,
        cfg.deadline_last_s,
        cfg.slides_per_level,
        cfg.total_s,
    );
    let mut slides = Vec::with_capacity(cfg.slides_per_level * usize::from(LEVELS));
    for level in 1..=LEVELS {
        let digits = level_lerp(f64::from(cfg.digits_first), f64::from(cfg.digits_last), level)
            .round()
            .max(1.0) as u32;
        let hi = 10i64.pow(digits) - 1;
        let lo = if digits == 1 { 1 } else { 10i64.pow(digits - 1) };
        for _ in 0..cfg.slides_per_level {
            let operator = Operator::ALL[rng.random_range(0..Operator::ALL.len())];
            let mut a = rng.random_range(lo..=hi);
            let mut b = rng.random_range(lo..=hi);
            match operator {
                Operator::Sub if b > a => std::mem::swap(&mut a, &mut b),
                Operator::Div => {
                    b = b.max(2);
                    a *= b;
                }
                _ => {}
            }
            let expected_answer = operator
                .apply(a, b)
                .expect("operands are constructed to be valid");
            slides.push(Slide {
                index: slides.len(),
                level,
                kind: TestKind::Math,
                payload: Payload::Math {
                    operand_a: a,
                    operand_b: b,
                    operator,
                    expected_answer,
                },
                deadline_s: deadlines[usize::from(level - 1)],
            });
        }
    }
    StimulusPlan {
        kind: TestKind::Math,
        seed,
        slides,
    }
}

impl StimulusPlan {
    pub fn slides_per_level(&self) -> [usize; LEVELS as usize] {
        let mut counts = [0; LEVELS as usize];
        for s in &self.slides {
            if (1..=LEVELS).contains(&s.level) {
                counts[usize::from(s.level - 1)] += 1;
            }
        }
        counts
    }

    pub fn total_deadline_s(&self) -> f64 {
        self.slides.iter().map(|s| s.deadline_s).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        let expected = match self.kind {
            TestKind::Stroop => 15,
            TestKind::Math => 7,
        };
        if self.slides_per_level() != [expected; LEVELS as usize]
            || self.slides.len() != expected * usize::from(LEVELS)
        {
            return bad(format!(
                "expected {expected} slides on each of {LEVELS} levels, found {:?}",
                self.slides_per_level()
            ));
        }
        for (i, s) in self.slides.iter().enumerate() {
            if s.index != i {
                return bad(format!("slide {i} carries index {}", s.index));
            }
            if s.kind != self.kind {
                return bad(format!("slide {i} is not a {:?} slide", self.kind));
            }
            if !(s.deadline_s > 0.0 && s.deadline_s.is_finite()) {
                return bad(format!("slide {i} has no positive deadline"));
            }
            match &s.payload {
                Payload::Stroop {
                    word,
                    ink,
                    congruent,
                } if self.kind == TestKind::Stroop => {
                    if (word == ink) != *congruent {
                        return bad(format!("slide {i} has an inconsistent congruence flag"));
                    }
                }
                Payload::Math {
                    operand_a,
                    operand_b,
                    operator,
                    expected_answer,
                } if self.kind == TestKind::Math => {
                    if operator.apply(*operand_a, *operand_b) != Some(*expected_answer) {
                        return bad(format!("slide {i} has a wrong expected answer"));
                    }
                }
                _ => return bad(format!("slide {i} payload does not match the plan kind")),
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: StimulusPlan = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// One presented slide and the subject's answer, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub slide_index: usize,
    pub presented_at_ms: u64,
    pub response: Option<String>,
    pub responded_at_ms: Option<u64>,
}

/// JSON-lines session log, one record per presented slide.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionLog {
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?,
            );
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::parse(path, e))?;
            out.push(b'\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub level: u8,
    pub n_correct: usize,
    pub n_total: usize,
    pub accuracy_pct: f64,
}

impl PerformanceRecord {
    pub fn new(level: u8, n_correct: usize, n_total: usize) -> Self {
        let accuracy_pct = if n_total == 0 {
            0.0
        } else {
            100.0 * n_correct as f64 / n_total as f64
        };
        Self {
            level,
            n_correct,
            n_total,
            accuracy_pct,
        }
    }
}

/// Per-level correct counts. A response counts when it matches the slide's
/// expected answer and arrives within the slide deadline; missing and late
/// answers count as incorrect.
pub fn score_session(plan: &StimulusPlan, log: &SessionLog) -> Result<Vec<PerformanceRecord>> {
    if log.records.is_empty() {
        return Err(Error::PlanMismatch("log has no records".into()));
    }
    let mut seen: HashMap<usize, &LogRecord> = HashMap::with_capacity(log.records.len());
    for r in &log.records {
        if r.slide_index >= plan.slides.len() {
            return Err(Error::PlanMismatch(format!(
                "unknown slide index {}",
                r.slide_index
            )));
        }
        if seen.insert(r.slide_index, r).is_some() {
            return Err(Error::PlanMismatch(format!(
                "slide {} logged more than once",
                r.slide_index
            )));
        }
    }

    let mut correct = [0usize; LEVELS as usize];
    for (idx, r) in seen {
        let slide = &plan.slides[idx];
        let on_time = match r.responded_at_ms {
            Some(at) => {
                at >= r.presented_at_ms
                    && (at - r.presented_at_ms) as f64 <= slide.deadline_s * 1000.0
            }
            None => false,
        };
        let right = r
            .response
            .as_deref()
            .is_some_and(|resp| slide.is_correct_response(resp));
        if on_time && right && (1..=LEVELS).contains(&slide.level) {
            correct[usize::from(slide.level - 1)] += 1;
        }
    }
    let totals = plan.slides_per_level();
    Ok((1..=LEVELS)
        .map(|l| {
            let i = usize::from(l - 1);
            PerformanceRecord::new(l, correct[i], totals[i])
        })
        .collect())
}

/// Splits a scenario into seven consecutive windows, each proportional to its
/// level's share of the plan's total deadline budget.
pub fn partition_levels(plan: &StimulusPlan, scenario: &Window) -> Result<Vec<Window>> {
    let total = plan.total_deadline_s();
    let duration = scenario.duration_s();
    if !(total > 0.0) || ((duration - total) / total).abs() > PARTITION_TOLERANCE {
        return Err(Error::InvalidPlan(format!(
            "scenario lasts {duration} s but the plan budgets {total} s"
        )));
    }
    let mut budget = [0.0; LEVELS as usize];
    for s in &plan.slides {
        if (1..=LEVELS).contains(&s.level) {
            budget[usize::from(s.level - 1)] += s.deadline_s;
        }
    }
    let scale = duration / total;
    let mut windows = Vec::with_capacity(usize::from(LEVELS));
    let mut start = scenario.start_s;
    let mut acc = 0.0;
    for level in 1..=LEVELS {
        acc += budget[usize::from(level - 1)];
        let end = if level == LEVELS {
            scenario.end_s
        } else {
            scenario.start_s + acc * scale
        };
        windows.push(Window {
            start_s: start,
            end_s: end,
            label: format!("{}/level-{level}", scenario.label),
        });
        start = end;
    }
    Ok(windows)
}
