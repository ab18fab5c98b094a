//! Exam assembly: eligibility, completion counting and exact uniform sampling
//! of drafts whose points hit the target exactly.
//!
//! A draft is drawn uniformly from the set of duplicate-free assignments of
//! eligible problems to the random slots that, together with the pinned
//! problems, sum to the target. Slots are filled left to right, each choice
//! weighted by the number of completions it leaves open; a draw that reuses
//! a problem is discarded and redrawn from scratch.

mod counting;
mod metrics;
mod sampler;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{Bank, Problem, ValidationReport};

pub use counting::{count_completions, CompletionTable};
pub use metrics::{compute_metrics, DraftMetrics};
pub use sampler::{
    check_feasibility, sample_draft, FeasibilityReport, PointRange, Sampler, Verdict,
    BRUTE_FORCE_LIMIT, MAX_REJECTIONS,
};

pub const DEFAULT_RECENCY_DAYS: u32 = 730;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub slot_index: usize,
    pub subarea: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyBand {
    pub min: f64,
    pub max: f64,
}

impl DifficultyBand {
    pub fn contains(&self, d: f64) -> bool {
        self.min <= d && d <= self.max
    }
}

fn default_recency() -> u32 {
    DEFAULT_RECENCY_DAYS
}

/// The educator's exam specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub slots: Vec<Slot>,
    pub target_points: u32,
    #[serde(default = "default_recency")]
    pub recency_window_days: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty_band: Option<DifficultyBand>,
    pub exam_date: NaiveDate,
}

impl Blueprint {
    /// One slot per code, in order, with the default recency window.
    pub fn new<S: AsRef<str>>(subareas: &[S], target_points: u32, exam_date: NaiveDate) -> Self {
        Self {
            slots: subareas
                .iter()
                .enumerate()
                .map(|(i, s)| Slot {
                    slot_index: i + 1,
                    subarea: s.as_ref().to_owned(),
                })
                .collect(),
            target_points,
            recency_window_days: DEFAULT_RECENCY_DAYS,
            difficulty_band: None,
            exam_date,
        }
    }

    pub fn slot(&self, slot_index: usize) -> Option<&Slot> {
        slot_index
            .checked_sub(1)
            .and_then(|i| self.slots.get(i))
            .filter(|s| s.slot_index == slot_index)
    }

    pub fn validate(&self, bank: &Bank) -> Result<(), BlueprintError> {
        if self.slots.is_empty() {
            return Err(BlueprintError::NoSlots);
        }
        for (i, slot) in self.slots.iter().enumerate() {
            if slot.slot_index != i + 1 {
                return Err(BlueprintError::SlotNumbering {
                    position: i + 1,
                    found: slot.slot_index,
                });
            }
            if !bank.subareas.contains_key(&slot.subarea) {
                return Err(BlueprintError::UnknownSubarea(slot.subarea.clone()));
            }
        }
        if self.target_points == 0 {
            return Err(BlueprintError::NonPositiveTarget);
        }
        if let Some(band) = self.difficulty_band {
            if !(0.0 <= band.min && band.min <= band.max && band.max <= 1.0) {
                return Err(BlueprintError::InvalidBand {
                    min: band.min,
                    max: band.max,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlueprintError {
    #[error("blueprint has no slots")]
    NoSlots,
    #[error("slot at position {position} is numbered {found}; slots must be numbered 1..n")]
    SlotNumbering { position: usize, found: usize },
    #[error("unknown subarea \"{0}\"")]
    UnknownSubarea(String),
    #[error("target_points must be positive")]
    NonPositiveTarget,
    #[error("difficulty band [{min}, {max}] must satisfy 0 <= min <= max <= 1")]
    InvalidBand { min: f64, max: f64 },
}

/// One decision-vector entry: draw at random, or keep a chosen problem.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SlotChoice {
    Random,
    Manual(String),
}

impl fmt::Display for SlotChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotChoice::Random => f.write_str("R"),
            SlotChoice::Manual(id) => write!(f, "M:{id}"),
        }
    }
}

impl FromStr for SlotChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R" => Ok(SlotChoice::Random),
            _ => match s.strip_prefix("M:") {
                Some(id) if !id.is_empty() => Ok(SlotChoice::Manual(id.to_owned())),
                _ => Err(format!(
                    "invalid decision entry \"{s}\" (expected R or M:<id>)"
                )),
            },
        }
    }
}

impl Serialize for SlotChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlotChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-slot steering input. Serialized as `["R", "M:P7", ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionVector {
    pub entries: Vec<SlotChoice>,
}

impl DecisionVector {
    pub fn all_random(slots: usize) -> Self {
        Self {
            entries: vec![SlotChoice::Random; slots],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy with `slot_index` (1-based) pinned to `problem_id`.
    pub fn pinned(&self, slot_index: usize, problem_id: &str) -> Result<Self, DecisionError> {
        self.replaced(slot_index, SlotChoice::Manual(problem_id.to_owned()))
    }

    /// Copy with `slot_index` (1-based) returned to random.
    pub fn unpinned(&self, slot_index: usize) -> Result<Self, DecisionError> {
        self.replaced(slot_index, SlotChoice::Random)
    }

    fn replaced(&self, slot_index: usize, choice: SlotChoice) -> Result<Self, DecisionError> {
        let mut next = self.clone();
        let entry = slot_index
            .checked_sub(1)
            .and_then(|i| next.entries.get_mut(i))
            .ok_or(DecisionError::NoSuchSlot(slot_index))?;
        *entry = choice;
        Ok(next)
    }

    pub fn pins(&self) -> impl Iterator<Item = (usize, &str)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| match e {
                SlotChoice::Manual(id) => Some((i + 1, id.as_str())),
                SlotChoice::Random => None,
            })
    }

    pub fn validate(&self, bank: &Bank, blueprint: &Blueprint) -> Result<(), DecisionError> {
        if self.len() != blueprint.slots.len() {
            return Err(DecisionError::LengthMismatch {
                expected: blueprint.slots.len(),
                found: self.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for (slot_index, id) in self.pins() {
            let problem = bank
                .problem(id)
                .ok_or_else(|| DecisionError::UnknownProblem(id.to_owned()))?;
            let slot = &blueprint.slots[slot_index - 1];
            if problem.subarea != slot.subarea {
                return Err(DecisionError::SubareaMismatch {
                    slot_index,
                    problem_id: id.to_owned(),
                    slot_subarea: slot.subarea.clone(),
                    problem_subarea: problem.subarea.clone(),
                });
            }
            if !seen.insert(id) {
                return Err(DecisionError::DuplicatePin(id.to_owned()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for DecisionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecisionError {
    #[error("decision vector has {found} entries but the blueprint has {expected} slots")]
    LengthMismatch { expected: usize, found: usize },
    #[error("no slot {0}")]
    NoSuchSlot(usize),
    #[error("unknown problem id \"{0}\"")]
    UnknownProblem(String),
    #[error(
        "problem \"{problem_id}\" belongs to subarea \"{problem_subarea}\" but slot {slot_index} \
         draws from \"{slot_subarea}\""
    )]
    SubareaMismatch {
        slot_index: usize,
        problem_id: String,
        slot_subarea: String,
        problem_subarea: String,
    },
    #[error("problem \"{0}\" is pinned in more than one slot")]
    DuplicatePin(String),
}

/// One concrete assignment of problems to slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamDraft {
    pub assignment: Vec<String>,
    pub metrics: DraftMetrics,
    #[serde(with = "crate::wire::u64_string")]
    pub seed_used: u64,
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("bank is invalid: {} error(s)", .0.errors.len())]
    InvalidBank(ValidationReport),
    #[error("invalid blueprint: {0}")]
    InvalidBlueprint(#[from] BlueprintError),
    #[error("invalid decision vector: {0}")]
    InvalidDecision(#[from] DecisionError),
    #[error("pinned problems exceed the target by {excess} points")]
    PinsExceedTarget { excess: u64 },
    #[error("no duplicate-free exam reaches the target")]
    Infeasible(Box<FeasibilityReport>),
    #[error("{restarts} consecutive draws reused a problem; duplicate structure is degenerate")]
    DegenerateDuplicates {
        restarts: u32,
        report: Box<FeasibilityReport>,
    },
    #[error(
        "difficulty band [{}, {}] rejected {rejections} drafts (observed {observed_min:.3}..{observed_max:.3}); \
         band infeasible or too narrow",
        band.min, band.max
    )]
    BandInfeasible {
        band: DifficultyBand,
        rejections: u32,
        observed_min: f64,
        observed_max: f64,
    },
    #[error("unknown problem id \"{0}\"")]
    UnknownProblem(String),
}

/// Whether `problem` has a usage date in the `window_days` days up to and
/// including `exam_date`. A zero window disables the check.
pub fn used_recently(problem: &Problem, exam_date: NaiveDate, window_days: u32) -> bool {
    window_days > 0
        && problem.usage_dates.iter().any(|d| {
            let age = (exam_date - *d).num_days();
            (0..i64::from(window_days)).contains(&age)
        })
}

/// Problems that may fill `slot_index` at random: the slot's subarea, minus
/// `excluded_ids`, minus anything used recently. Sorted by id; empty when the
/// slot does not exist.
pub fn eligible_candidates<'a>(
    bank: &'a Bank,
    blueprint: &Blueprint,
    slot_index: usize,
    excluded_ids: &BTreeSet<String>,
) -> Vec<&'a Problem> {
    let Some(slot) = blueprint.slot(slot_index) else {
        return Vec::new();
    };
    let mut out: Vec<&Problem> = bank
        .problems
        .iter()
        .filter(|p| p.subarea == slot.subarea)
        .filter(|p| !excluded_ids.contains(&p.id))
        .filter(|p| !used_recently(p, blueprint.exam_date, blueprint.recency_window_days))
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::test_support::*;

    fn three_in_a() -> Bank {
        let mut used = problem("a2", "A", 5, 0.5);
        used.usage_dates = vec![date("2023-09-22")];
        bank_of(
            &["A", "B"],
            vec![
                problem("a3", "A", 5, 0.5),
                used,
                problem("a1", "A", 5, 0.5),
                problem("b1", "B", 5, 0.5),
            ],
        )
    }

    fn ids(v: Vec<&Problem>) -> Vec<&str> {
        v.into_iter().map(|p| p.id.as_str()).collect()
    }

    #[test]
    fn recency_filter() {
        let bank = three_in_a();
        // exam 100 days after a2 was used
        let mut bp = Blueprint::new(&["A"], 5, date("2023-12-31"));
        let none = BTreeSet::new();
        assert_eq!(ids(eligible_candidates(&bank, &bp, 1, &none)), ["a1", "a3"]);
        bp.recency_window_days = 0;
        assert_eq!(
            ids(eligible_candidates(&bank, &bp, 1, &none)),
            ["a1", "a2", "a3"]
        );
        let excluded = BTreeSet::from(["a3".to_string()]);
        assert_eq!(
            ids(eligible_candidates(&bank, &bp, 1, &excluded)),
            ["a1", "a2"]
        );
        assert!(eligible_candidates(&bank, &bp, 2, &none).is_empty());
        assert!(eligible_candidates(&bank, &bp, 0, &none).is_empty());
    }

    #[test]
    fn recency_window_edges() {
        let mut p = problem("x", "A", 1, 0.0);
        p.usage_dates = vec![date("2024-01-01")];
        let on = |exam: &str, w| used_recently(&p, date(exam), w);
        assert!(on("2024-01-01", 1));
        assert!(on("2024-01-10", 10));
        assert!(!on("2024-01-11", 10));
        // later usage is not "before" the exam
        assert!(!on("2023-12-31", 730));
        assert!(!on("2024-01-01", 0));
    }

    #[test]
    fn blueprint_validation() {
        let bank = three_in_a();
        let d = date("2024-01-01");
        assert!(Blueprint::new(&["A", "B"], 10, d).validate(&bank).is_ok());
        assert_eq!(
            Blueprint::new(&["A", "XX"], 10, d).validate(&bank),
            Err(BlueprintError::UnknownSubarea("XX".into()))
        );
        assert_eq!(
            Blueprint::new(&["A"], 0, d).validate(&bank),
            Err(BlueprintError::NonPositiveTarget)
        );
        assert_eq!(
            Blueprint::new::<&str>(&[], 5, d).validate(&bank),
            Err(BlueprintError::NoSlots)
        );
        let mut bp = Blueprint::new(&["A", "B"], 10, d);
        bp.slots[1].slot_index = 3;
        assert!(matches!(
            bp.validate(&bank),
            Err(BlueprintError::SlotNumbering {
                position: 2,
                found: 3
            })
        ));
        let mut bp = Blueprint::new(&["A"], 10, d);
        bp.difficulty_band = Some(DifficultyBand { min: 0.7, max: 0.2 });
        assert!(matches!(
            bp.validate(&bank),
            Err(BlueprintError::InvalidBand { .. })
        ));
    }

    #[test]
    fn decision_vector_wire_format() {
        let dv = DecisionVector::all_random(3).pinned(2, "P7").unwrap();
        let json = serde_json::to_string(&dv).unwrap();
        assert_eq!(json, r#"["R","M:P7","R"]"#);
        assert_eq!(serde_json::from_str::<DecisionVector>(&json).unwrap(), dv);
        assert_eq!(dv.to_string(), "[R M:P7 R]");
        assert!(serde_json::from_str::<DecisionVector>(r#"["X"]"#).is_err());
        assert!(serde_json::from_str::<DecisionVector>(r#"["M:"]"#).is_err());
        assert_eq!(dv.unpinned(2).unwrap(), DecisionVector::all_random(3));
        assert_eq!(dv.pinned(4, "x"), Err(DecisionError::NoSuchSlot(4)));
    }

    #[test]
    fn decision_vector_validation() {
        let bank = three_in_a();
        let bp = Blueprint::new(&["A", "A", "B"], 15, date("2024-01-01"));
        let dv = DecisionVector::all_random(3);
        assert!(dv.validate(&bank, &bp).is_ok());
        assert!(matches!(
            DecisionVector::all_random(2).validate(&bank, &bp),
            Err(DecisionError::LengthMismatch {
                expected: 3,
                found: 2
            })
        ));
        let wrong = dv.pinned(3, "a1").unwrap();
        assert!(matches!(
            wrong.validate(&bank, &bp),
            Err(DecisionError::SubareaMismatch { slot_index: 3, .. })
        ));
        let twice = dv.pinned(1, "a1").unwrap().pinned(2, "a1").unwrap();
        assert_eq!(
            twice.validate(&bank, &bp),
            Err(DecisionError::DuplicatePin("a1".into()))
        );
        let unknown = dv.pinned(1, "zz").unwrap();
        assert_eq!(
            unknown.validate(&bank, &bp),
            Err(DecisionError::UnknownProblem("zz".into()))
        );
    }
}
