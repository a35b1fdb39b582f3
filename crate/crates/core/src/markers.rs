//! Scenario and difficulty-level intervals of a recording session.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Window;

/// Number of difficulty levels in each test scenario.
pub const LEVELS: u8 = 7;

/// Boundary slack when checking contiguity of marker intervals, in seconds.
const EDGE_TOL_S: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Relax,
    Stroop,
    Math,
}

impl ScenarioKind {
    pub fn is_test(self) -> bool {
        !matches!(self, ScenarioKind::Relax)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub kind: ScenarioKind,
    pub start_s: f64,
    pub end_s: f64,
}

impl Scenario {
    pub fn window(&self) -> Window {
        Window {
            start_s: self.start_s,
            end_s: self.end_s,
            label: self.id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelInterval {
    pub scenario_id: String,
    pub level: u8,
    pub start_s: f64,
    pub end_s: f64,
}

impl LevelInterval {
    pub fn window(&self) -> Window {
        Window {
            start_s: self.start_s,
            end_s: self.end_s,
            label: format!("{}/level-{}", self.scenario_id, self.level),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMarkers {
    pub scenarios: Vec<Scenario>,
    pub levels: Vec<LevelInterval>,
}

/// The five-scenario schedule: relax 4 min, Stroop 4 min, relax 4 min,
/// arithmetic 5 min, relax 3 min. Each test scenario is cut into seven
/// equal level intervals (every level has the same number of slides).
pub fn default_markers() -> SessionMarkers {
    let plan = [
        ("I", ScenarioKind::Relax, 4.0),
        ("II", ScenarioKind::Stroop, 4.0),
        ("III", ScenarioKind::Relax, 4.0),
        ("IV", ScenarioKind::Math, 5.0),
        ("V", ScenarioKind::Relax, 3.0),
    ];
    let mut scenarios = Vec::with_capacity(plan.len());
    let mut levels = Vec::new();
    let mut t = 0.0;
    for (id, kind, minutes) in plan {
        let start = t;
        let end = t + minutes * 60.0;
        if kind.is_test() {
            let step = (end - start) / f64::from(LEVELS);
            for level in 1..=LEVELS {
                let lo = start + step * f64::from(level - 1);
                let hi = if level == LEVELS {
                    end
                } else {
                    start + step * f64::from(level)
                };
                levels.push(LevelInterval {
                    scenario_id: id.into(),
                    level,
                    start_s: lo,
                    end_s: hi,
                });
            }
        }
        scenarios.push(Scenario {
            id: id.into(),
            kind,
            start_s: start,
            end_s: end,
        });
        t = end;
    }
    SessionMarkers { scenarios, levels }
}

impl SessionMarkers {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMarkers(m));
        if self.scenarios.is_empty() {
            return bad("no scenarios".into());
        }
        let mut prev_end = 0.0;
        for (i, s) in self.scenarios.iter().enumerate() {
            if !(s.start_s.is_finite() && s.end_s.is_finite() && s.end_s > s.start_s) {
                return bad(format!("scenario {} has an empty interval", s.id));
            }
            if (s.start_s - prev_end).abs() > EDGE_TOL_S {
                return if s.start_s < prev_end {
                    bad(format!("scenario {} overlaps its predecessor", s.id))
                } else if i == 0 {
                    bad(format!("scenario {} does not start at 0", s.id))
                } else {
                    bad(format!("gap before scenario {}", s.id))
                };
            }
            if self.scenarios[..i].iter().any(|o| o.id == s.id) {
                return bad(format!("duplicate scenario id {}", s.id));
            }
            prev_end = s.end_s;
        }

        for l in &self.levels {
            match self.scenario(&l.scenario_id) {
                None => return bad(format!("level refers to unknown scenario {}", l.scenario_id)),
                Some(s) if !s.kind.is_test() => {
                    return bad(format!("relax scenario {} has level intervals", s.id))
                }
                _ => {}
            }
        }

        for s in self.scenarios.iter().filter(|s| s.kind.is_test()) {
            let mut own: Vec<&LevelInterval> = self
                .levels
                .iter()
                .filter(|l| l.scenario_id == s.id)
                .collect();
            own.sort_by_key(|l| l.level);
            let numbers: Vec<u8> = own.iter().map(|l| l.level).collect();
            if numbers != (1..=LEVELS).collect::<Vec<_>>() {
                return bad(format!(
                    "scenario {} needs levels 1..={LEVELS} exactly once, found {numbers:?}",
                    s.id
                ));
            }
            let mut edge = s.start_s;
            for l in own {
                if (l.start_s - edge).abs() > EDGE_TOL_S || l.end_s <= l.start_s {
                    return bad(format!(
                        "level {} of scenario {} does not continue the partition",
                        l.level, s.id
                    ));
                }
                edge = l.end_s;
            }
            if (edge - s.end_s).abs() > EDGE_TOL_S {
                return bad(format!("levels of scenario {} do not cover it", s.id));
            }
        }
        Ok(())
    }

    pub fn scenario(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn first_of_kind(&self, kind: ScenarioKind) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.kind == kind)
    }

    /// Level windows of one scenario ordered by level.
    pub fn level_windows(&self, scenario_id: &str) -> Vec<Window> {
        let mut own: Vec<&LevelInterval> = self
            .levels
            .iter()
            .filter(|l| l.scenario_id == scenario_id)
            .collect();
        own.sort_by_key(|l| l.level);
        own.into_iter().map(LevelInterval::window).collect()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.scenarios.last().map_or(0.0, |s| s.end_s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
