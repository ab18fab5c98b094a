//! Stepwise alignment sessions: a blueprint, a base seed and an append-only
//! history of (decision vector, outcome) steps ending in accept or abandon.
//!
//! Step `n` samples with seed `derive_seed(base_seed, n)`, so the blueprint,
//! base seed and ordered decision vectors determine every draft.

mod transcript;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{record_usage, Bank, BankError};
use crate::rng::derive_seed;
use crate::selector::{
    sample_draft, Blueprint, BlueprintError, DecisionError, DecisionVector, DraftMetrics,
    ExamDraft, FeasibilityReport, SelectionError,
};

pub use transcript::{
    default_session_id, valid_session_id, SessionStore, TranscriptRecord, TRANSCRIPT_FORMAT,
    TRANSCRIPT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Accepted,
    Abandoned,
}

impl std::fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SessionStatus::Active => "active",
            SessionStatus::Accepted => "accepted",
            SessionStatus::Abandoned => "abandoned",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Infeasible,
    DegenerateDuplicates,
    BandInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRange {
    pub min: f64,
    pub max: f64,
}

/// Why a step produced no draft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFailure {
    pub kind: FailureKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_difficulty: Option<DifficultyRange>,
}

impl SelectionFailure {
    /// Domain outcomes of sampling; `None` for input errors.
    fn from_error(err: &SelectionError) -> Option<Self> {
        let message = err.to_string();
        Some(match err {
            SelectionError::Infeasible(report) => Self {
                kind: FailureKind::Infeasible,
                message,
                feasibility: Some((**report).clone()),
                observed_difficulty: None,
            },
            SelectionError::DegenerateDuplicates { report, .. } => Self {
                kind: FailureKind::DegenerateDuplicates,
                message,
                feasibility: Some((**report).clone()),
                observed_difficulty: None,
            },
            SelectionError::BandInfeasible {
                observed_min,
                observed_max,
                ..
            } => Self {
                kind: FailureKind::BandInfeasible,
                message,
                feasibility: None,
                observed_difficulty: Some(DifficultyRange {
                    min: *observed_min,
                    max: *observed_max,
                }),
            },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StepOutcome {
    Draft { draft: ExamDraft },
    Failed { failure: SelectionFailure },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub step_number: u32,
    #[serde(with = "crate::wire::u64_string")]
    pub seed: u64,
    /// Fingerprint of the bank snapshot the step sampled from.
    pub bank_ref: String,
    pub decision_vector: DecisionVector,
    pub outcome: StepOutcome,
}

impl Step {
    pub fn draft(&self) -> Option<&ExamDraft> {
        match &self.outcome {
            StepOutcome::Draft { draft } => Some(draft),
            StepOutcome::Failed { .. } => None,
        }
    }
}

/// Read-only view of one step for side-by-side review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step_number: u32,
    #[serde(with = "crate::wire::u64_string")]
    pub seed: u64,
    pub decision_vector: DecisionVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<DraftMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<SelectionFailure>,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session is {0}; no further changes are allowed")]
    Terminal(SessionStatus),
    #[error("the latest step has no draft")]
    NoDraft,
    #[error(transparent)]
    Blueprint(#[from] BlueprintError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Selection(SelectionError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("session \"{0}\" not found")]
    NotFound(String),
    #[error("session \"{0}\" already exists")]
    AlreadyExists(String),
    #[error("invalid session id \"{0}\"")]
    InvalidId(String),
    #[error("transcript line {line}: {message}")]
    Transcript { line: usize, message: String },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("replay of step {step_number} does not reproduce the recorded outcome")]
    ReplayMismatch { step_number: u32 },
}

impl From<SelectionError> for SessionError {
    fn from(err: SelectionError) -> Self {
        match err {
            SelectionError::InvalidBlueprint(e) => SessionError::Blueprint(e),
            SelectionError::InvalidDecision(e) => SessionError::Decision(e),
            SelectionError::InvalidBank(report) => SessionError::Bank(BankError::Invalid(report)),
            other => SessionError::Selection(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub blueprint: Blueprint,
    pub bank_ref: String,
    pub steps: Vec<Step>,
    pub status: SessionStatus,
    #[serde(with = "crate::wire::u64_string")]
    pub base_seed: u64,
}

impl Session {
    /// Starts an active session with no steps.
    pub fn new(
        id: impl Into<String>,
        blueprint: Blueprint,
        bank: &Bank,
        base_seed: u64,
    ) -> Result<Self, SessionError> {
        bank.ensure_valid()?;
        blueprint.validate(bank)?;
        Ok(Self {
            id: id.into(),
            blueprint,
            bank_ref: bank.fingerprint(),
            steps: Vec::new(),
            status: SessionStatus::Active,
            base_seed,
        })
    }

    pub fn seed_for_step(&self, step_number: u32) -> u64 {
        derive_seed(self.base_seed, u64::from(step_number))
    }

    fn ensure_active(&self) -> Result<(), SessionError> {
        match self.status {
            SessionStatus::Active => Ok(()),
            other => Err(SessionError::Terminal(other)),
        }
    }

    /// The decision vector of the latest step, or all-random before the first.
    pub fn current_decision_vector(&self) -> DecisionVector {
        self.steps
            .last()
            .map(|s| s.decision_vector.clone())
            .unwrap_or_else(|| DecisionVector::all_random(self.blueprint.slots.len()))
    }

    /// Latest decision vector with `slot_index` pinned to `problem_id`.
    pub fn pin(
        &self,
        bank: &Bank,
        slot_index: usize,
        problem_id: &str,
    ) -> Result<DecisionVector, SessionError> {
        self.ensure_active()?;
        let dv = self
            .current_decision_vector()
            .pinned(slot_index, problem_id)?;
        dv.validate(bank, &self.blueprint)?;
        Ok(dv)
    }

    /// Latest decision vector with `slot_index` returned to random.
    pub fn unpin(&self, slot_index: usize) -> Result<DecisionVector, SessionError> {
        self.ensure_active()?;
        Ok(self.current_decision_vector().unpinned(slot_index)?)
    }

    /// Samples a new draft for `dv` and appends it as the next step. A draft
    /// that cannot be produced is recorded as a failed step; invalid input is
    /// an error and records nothing.
    pub fn step(&mut self, bank: &Bank, dv: DecisionVector) -> Result<&Step, SessionError> {
        self.ensure_active()?;
        let step_number = self.steps.len() as u32 + 1;
        let seed = self.seed_for_step(step_number);
        let outcome = match sample_draft(bank, &self.blueprint, &dv, seed) {
            Ok(draft) => StepOutcome::Draft { draft },
            Err(err) => match SelectionFailure::from_error(&err) {
                Some(failure) => StepOutcome::Failed { failure },
                None => return Err(err.into()),
            },
        };
        self.steps.push(Step {
            step_number,
            seed,
            bank_ref: bank.fingerprint(),
            decision_vector: dv,
            outcome,
        });
        Ok(self.steps.last().expect("just pushed"))
    }

    pub fn latest_draft(&self) -> Option<&ExamDraft> {
        self.steps.last().and_then(Step::draft)
    }

    /// Commits the latest draft: marks the session accepted and returns the
    /// bank with the exam date recorded for every assigned problem.
    pub fn accept(&mut self, bank: &Bank) -> Result<Bank, SessionError> {
        self.ensure_active()?;
        let draft = self.latest_draft().ok_or(SessionError::NoDraft)?;
        let updated = record_usage(bank, &draft.assignment, self.blueprint.exam_date)?;
        self.status = SessionStatus::Accepted;
        Ok(updated)
    }

    pub fn abandon(&mut self) -> Result<(), SessionError> {
        self.ensure_active()?;
        self.status = SessionStatus::Abandoned;
        Ok(())
    }

    pub fn exam_date(&self) -> NaiveDate {
        self.blueprint.exam_date
    }

    pub fn history(&self) -> Vec<StepSummary> {
        self.steps
            .iter()
            .map(|s| {
                let (assignment, metrics, failure) = match &s.outcome {
                    StepOutcome::Draft { draft } => (
                        Some(draft.assignment.clone()),
                        Some(draft.metrics.clone()),
                        None,
                    ),
                    StepOutcome::Failed { failure } => (None, None, Some(failure.clone())),
                };
                StepSummary {
                    step_number: s.step_number,
                    seed: s.seed,
                    decision_vector: s.decision_vector.clone(),
                    assignment,
                    metrics,
                    failure,
                }
            })
            .collect()
    }

    /// Re-runs every recorded decision vector against `bank` and checks that
    /// each step reproduces exactly.
    pub fn verify_replay(&self, bank: &Bank) -> Result<(), SessionError> {
        let mut fresh = Session {
            id: self.id.clone(),
            blueprint: self.blueprint.clone(),
            bank_ref: self.bank_ref.clone(),
            steps: Vec::new(),
            status: SessionStatus::Active,
            base_seed: self.base_seed,
        };
        for recorded in &self.steps {
            let replayed = fresh.step(bank, recorded.decision_vector.clone())?;
            if replayed.outcome != recorded.outcome || replayed.seed != recorded.seed {
                return Err(SessionError::ReplayMismatch {
                    step_number: recorded.step_number,
                });
            }
        }
        Ok(())
    }
}
