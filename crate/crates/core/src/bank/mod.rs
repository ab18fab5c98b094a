//! The problem bank: tagged examination problems, their subarea registry and
//! the history of examinations each problem appeared in.
//!
//! Difficulty is stored as an index in `[0.0, 1.0]` where higher means
//! harder. SOLO levels are integers `1..=5` (1 = prestructural, 5 = extended
//! abstract).

mod store;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::{
    bank_fingerprint, inspect_bank, load_bank, save_bank, update_bank, BankLock, MANIFEST_FILE,
    SCHEMA_VERSION,
};

/// One examination problem together with its metadata.
///
/// Field order matches the `bank.json` key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub subarea: String,
    pub points: u32,
    pub ilo_refs: Vec<String>,
    pub solo_level: u8,
    pub difficulty: f64,
    pub statement_path: String,
    pub solution_path: String,
    pub usage_dates: Vec<NaiveDate>,
}

impl Problem {
    pub fn last_used(&self) -> Option<NaiveDate> {
        self.usage_dates.last().copied()
    }
}

/// Severity-tagged finding produced by validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem_id: Option<String>,
    pub rule_code: String,
    pub message: String,
}

impl Finding {
    fn new(problem_id: Option<&str>, rule_code: &str, message: impl Into<String>) -> Self {
        Self {
            problem_id: problem_id.map(str::to_owned),
            rule_code: rule_code.to_owned(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// A loaded bank snapshot.
///
/// `fragments` maps each relative fragment path to its LaTeX source. The
/// content is opaque: nothing here parses LaTeX.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bank {
    pub schema_version: u32,
    pub subareas: BTreeMap<String, String>,
    pub problems: Vec<Problem>,
    pub fragments: BTreeMap<String, String>,
    /// Findings recorded while reading the manifest (unknown keys, dangling
    /// fragment paths in lenient mode). Reported by [`validate_bank`].
    pub read_findings: Vec<Finding>,
    /// SHA-256 of the manifest bytes as last read from or written to disk.
    pub(crate) disk_digest: Option<String>,
}

impl Bank {
    pub fn new(subareas: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            subareas: subareas.into_iter().collect(),
            ..Self::default()
        }
    }

    /// Adds a problem along with the text of its two fragments.
    pub fn with_problem(mut self, problem: Problem, statement: &str, solution: &str) -> Self {
        self.fragments
            .insert(problem.statement_path.clone(), statement.to_owned());
        self.fragments
            .insert(problem.solution_path.clone(), solution.to_owned());
        self.problems.push(problem);
        self
    }

    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }

    pub fn statement(&self, problem: &Problem) -> Option<&str> {
        self.fragments
            .get(&problem.statement_path)
            .map(String::as_str)
    }

    pub fn solution(&self, problem: &Problem) -> Option<&str> {
        self.fragments
            .get(&problem.solution_path)
            .map(String::as_str)
    }

    /// Stable identifier of this snapshot (manifest plus fragment contents).
    pub fn fingerprint(&self) -> String {
        bank_fingerprint(self)
    }

    /// Fails with [`BankError::Invalid`] when validation reports errors.
    pub fn ensure_valid(&self) -> Result<(), BankError> {
        let report = validate_bank(self);
        if report.is_ok() {
            Ok(())
        } else {
            Err(BankError::Invalid(report))
        }
    }
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("bank manifest not found at {0}")]
    MissingManifest(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed bank manifest at {location}: {message}")]
    Malformed { location: String, message: String },
    #[error("unsupported schema_version {found} (expected {expected})")]
    UnknownSchema { found: i64, expected: u32 },
    #[error("duplicate problem id \"{0}\"")]
    DuplicateId(String),
    #[error("problem \"{problem_id}\" references missing fragment \"{path}\"")]
    DanglingFragment { problem_id: String, path: String },
    #[error("unknown subarea \"{0}\"")]
    UnknownSubarea(String),
    #[error("unknown problem id \"{0}\"")]
    UnknownProblem(String),
    #[error("usage date {date} for \"{problem_id}\" is not after its last usage {last}")]
    NonMonotoneDate {
        problem_id: String,
        date: NaiveDate,
        last: NaiveDate,
    },
    #[error("bank has {} validation error(s)", .0.errors.len())]
    Invalid(ValidationReport),
    #[error("bank manifest changed on disk since it was loaded; reload and retry")]
    Conflict,
}

/// Checks every problem and bank invariant. Violations are report entries.
pub fn validate_bank(bank: &Bank) -> ValidationReport {
    let mut report = ValidationReport::default();
    let errors = &mut report.errors;

    let mut seen = HashSet::new();
    let mut used_subareas = BTreeSet::new();
    for p in &bank.problems {
        let id = Some(p.id.as_str());
        if p.id.trim().is_empty() {
            errors.push(Finding::new(id, "empty_id", "problem id is empty"));
        }
        if !seen.insert(p.id.as_str()) {
            errors.push(Finding::new(
                id,
                "duplicate_id",
                format!("problem id \"{}\" appears more than once", p.id),
            ));
        }
        if bank.subareas.contains_key(&p.subarea) {
            used_subareas.insert(p.subarea.as_str());
        } else {
            errors.push(Finding::new(
                id,
                "unknown_subarea",
                format!("subarea \"{}\" is not in the registry", p.subarea),
            ));
        }
        if p.points < 1 {
            errors.push(Finding::new(
                id,
                "points_positive",
                "points must be at least 1",
            ));
        }
        if !(0.0..=1.0).contains(&p.difficulty) {
            errors.push(Finding::new(
                id,
                "difficulty_range",
                format!("difficulty {} outside [0, 1]", p.difficulty),
            ));
        }
        if !(1..=5).contains(&p.solo_level) {
            errors.push(Finding::new(
                id,
                "solo_range",
                format!("solo_level {} outside 1..=5", p.solo_level),
            ));
        }
        if p.usage_dates.windows(2).any(|w| w[0] >= w[1]) {
            errors.push(Finding::new(
                id,
                "usage_dates_order",
                "usage_dates must be strictly ascending",
            ));
        }
        for path in [&p.statement_path, &p.solution_path] {
            if !bank.fragments.contains_key(path) {
                errors.push(Finding::new(
                    id,
                    "dangling_fragment",
                    format!("fragment \"{path}\" is missing"),
                ));
            }
        }
    }

    for code in bank.subareas.keys() {
        if !used_subareas.contains(code.as_str()) {
            report.warnings.push(Finding::new(
                None,
                "unused_subarea",
                format!("subarea \"{code}\" has no problems"),
            ));
        }
    }

    for f in &bank.read_findings {
        // Read-time dangling paths are already covered by the fragment check.
        if f.rule_code != "dangling_fragment" {
            report.warnings.push(f.clone());
        }
    }
    report
}

/// Criteria for [`query_problems`]. Absent fields do not constrain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemFilter {
    pub subarea: Option<String>,
    pub min_points: Option<u32>,
    pub max_points: Option<u32>,
    pub ilo: Option<String>,
    pub solo_level: Option<u8>,
    /// Keep only problems with no usage on or after this date.
    pub unused_since: Option<NaiveDate>,
}

/// Problems matching every supplied criterion, ordered by id.
pub fn query_problems<'a>(
    bank: &'a Bank,
    filter: &ProblemFilter,
) -> Result<Vec<&'a Problem>, BankError> {
    if let Some(code) = &filter.subarea {
        if !bank.subareas.contains_key(code) {
            return Err(BankError::UnknownSubarea(code.clone()));
        }
    }
    let mut out: Vec<&Problem> = bank
        .problems
        .iter()
        .filter(|p| filter.subarea.as_ref().is_none_or(|s| &p.subarea == s))
        .filter(|p| filter.min_points.is_none_or(|m| p.points >= m))
        .filter(|p| filter.max_points.is_none_or(|m| p.points <= m))
        .filter(|p| filter.ilo.as_ref().is_none_or(|i| p.ilo_refs.contains(i)))
        .filter(|p| filter.solo_level.is_none_or(|l| p.solo_level == l))
        .filter(|p| {
            filter
                .unused_since
                .is_none_or(|since| p.usage_dates.iter().all(|d| *d < since))
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Returns a copy of `bank` with `exam_date` appended to the usage history of
/// each listed problem. Nothing is persisted.
pub fn record_usage(
    bank: &Bank,
    problem_ids: &[String],
    exam_date: NaiveDate,
) -> Result<Bank, BankError> {
    let mut next = bank.clone();
    let mut touched = HashSet::new();
    for id in problem_ids {
        if !touched.insert(id.as_str()) {
            continue;
        }
        let problem = next
            .problems
            .iter_mut()
            .find(|p| &p.id == id)
            .ok_or_else(|| BankError::UnknownProblem(id.clone()))?;
        if let Some(last) = problem.last_used() {
            if exam_date <= last {
                return Err(BankError::NonMonotoneDate {
                    problem_id: id.clone(),
                    date: exam_date,
                    last,
                });
            }
        }
        problem.usage_dates.push(exam_date);
    }
    Ok(next)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn three() -> Bank {
        bank_of(
            &["PID", "FREQ"],
            vec![
                problem("P1", "PID", 5, 0.3),
                problem("P2", "PID", 10, 0.5),
                problem("P3", "FREQ", 5, 0.7),
            ],
        )
    }

    #[test]
    fn valid_bank_has_empty_report() {
        let report = validate_bank(&three());
        assert!(report.errors.is_empty(), "{report:?}");
        assert!(report.warnings.is_empty(), "{report:?}");
    }

    #[test]
    fn difficulty_out_of_range() {
        let mut bank = three();
        bank.problems[0].difficulty = 1.3;
        let report = validate_bank(&bank);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].rule_code, "difficulty_range");
        assert_eq!(report.errors[0].problem_id.as_deref(), Some("P1"));
    }

    #[test]
    fn nan_difficulty_is_rejected() {
        let mut bank = three();
        bank.problems[1].difficulty = f64::NAN;
        assert_eq!(validate_bank(&bank).errors[0].rule_code, "difficulty_range");
    }

    #[test]
    fn solo_zero() {
        let mut bank = three();
        bank.problems[2].solo_level = 0;
        let report = validate_bank(&bank);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].rule_code, "solo_range");
    }

    #[test]
    fn other_invariants() {
        let mut bank = three();
        bank.problems[0].points = 0;
        bank.problems[1].subarea = "XX".into();
        bank.problems[2].usage_dates = vec![date("2023-01-01"), date("2023-01-01")];
        bank.problems.push(problem("P1", "PID", 5, 0.1));
        bank.fragments.remove("solutions/P3.tex");
        let codes: BTreeSet<_> = validate_bank(&bank)
            .errors
            .into_iter()
            .map(|f| f.rule_code)
            .collect();
        for code in [
            "points_positive",
            "unknown_subarea",
            "usage_dates_order",
            "duplicate_id",
            "dangling_fragment",
        ] {
            assert!(codes.contains(code), "missing {code} in {codes:?}");
        }
        assert!(bank.ensure_valid().is_err());
    }

    #[test]
    fn query_by_subarea_and_identity() {
        let bank = bank_of(
            &["PID", "A"],
            vec![
                problem("Z9", "A", 5, 0.1),
                problem("P2", "PID", 5, 0.1),
                problem("A1", "A", 5, 0.1),
                problem("P1", "PID", 5, 0.1),
                problem("B1", "A", 5, 0.1),
            ],
        );
        let ids = |v: Vec<&Problem>| v.into_iter().map(|p| p.id.clone()).collect::<Vec<_>>();
        let pid = ProblemFilter {
            subarea: Some("PID".into()),
            ..Default::default()
        };
        assert_eq!(ids(query_problems(&bank, &pid).unwrap()), ["P1", "P2"]);
        assert_eq!(
            ids(query_problems(&bank, &ProblemFilter::default()).unwrap()),
            ["A1", "B1", "P1", "P2", "Z9"]
        );
    }

    #[test]
    fn query_unused_since_and_unknown_subarea() {
        let mut bank = three();
        bank.problems[1].usage_dates = vec![date("2023-06-01")];
        bank.problems[2].usage_dates = vec![date("2021-06-01")];
        let filter = ProblemFilter {
            unused_since: Some(date("2023-01-01")),
            ..Default::default()
        };
        let ids: Vec<_> = query_problems(&bank, &filter)
            .unwrap()
            .iter()
            .map(|p| p.id.as_str())
            .collect();
        assert_eq!(ids, ["P1", "P3"]);

        let bad = ProblemFilter {
            subarea: Some("NOPE".into()),
            ..Default::default()
        };
        assert!(matches!(
            query_problems(&bank, &bad),
            Err(BankError::UnknownSubarea(s)) if s == "NOPE"
        ));
    }

    #[test]
    fn query_points_ilo_solo() {
        let mut bank = three();
        bank.problems[0].ilo_refs = vec!["ILO1".into()];
        bank.problems[1].solo_level = 4;
        let f = ProblemFilter {
            min_points: Some(5),
            max_points: Some(5),
            ..Default::default()
        };
        assert_eq!(query_problems(&bank, &f).unwrap().len(), 2);
        let f = ProblemFilter {
            ilo: Some("ILO1".into()),
            ..Default::default()
        };
        assert_eq!(query_problems(&bank, &f).unwrap()[0].id, "P1");
        let f = ProblemFilter {
            solo_level: Some(4),
            ..Default::default()
        };
        assert_eq!(query_problems(&bank, &f).unwrap()[0].id, "P2");
    }

    #[test]
    fn record_usage_appends() {
        let bank = three();
        let next = record_usage(&bank, &["P1".into()], date("2024-03-15")).unwrap();
        assert_eq!(next.problems[0].usage_dates, vec![date("2024-03-15")]);
        assert!(bank.problems[0].usage_dates.is_empty());

        let both = record_usage(&next, &["P1".into(), "P2".into()], date("2024-06-01")).unwrap();
        assert_eq!(
            both.problems[0].usage_dates,
            vec![date("2024-03-15"), date("2024-06-01")]
        );
        assert_eq!(both.problems[1].usage_dates, vec![date("2024-06-01")]);
        assert_eq!(both.problems[2], bank.problems[2]);
    }

    #[test]
    fn record_usage_rejects_non_monotone_and_unknown() {
        let mut bank = three();
        bank.problems[0].usage_dates = vec![date("2023-01-01")];
        let err = record_usage(&bank, &["P1".into()], date("2020-01-01")).unwrap_err();
        assert!(matches!(err, BankError::NonMonotoneDate { .. }));
        let err = record_usage(&bank, &["P1".into()], date("2023-01-01")).unwrap_err();
        assert!(matches!(err, BankError::NonMonotoneDate { .. }));
        let err = record_usage(&bank, &["P7".into()], date("2024-01-01")).unwrap_err();
        assert!(matches!(err, BankError::UnknownProblem(id) if id == "P7"));
    }
}
