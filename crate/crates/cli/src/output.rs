use std::fmt::Write as _;

use examforge::bank::{Bank, Problem, ValidationReport};
use examforge::selector::FeasibilityReport;
use examforge::session::{SelectionFailure, Session, Step, StepOutcome};

/// Left-aligned text table; columns listed in `right` are right-aligned.
pub fn table(header: &[&str], rows: &[Vec<String>], right: &[usize]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut parts = Vec::new();
        for (i, cell) in cells.enumerate() {
            let w = widths[i];
            parts.push(if right.contains(&i) {
                format!("{cell:>w$}")
            } else {
                format!("{cell:<w$}")
            });
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied());
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

pub fn problem_rows<'a>(problems: impl IntoIterator<Item = &'a Problem>) -> Vec<Vec<String>> {
    problems
        .into_iter()
        .map(|p| {
            vec![
                p.id.clone(),
                p.subarea.clone(),
                p.points.to_string(),
                p.solo_level.to_string(),
                format!("{:.2}", p.difficulty),
                p.last_used()
                    .map(|d| d.to_string())
                    .unwrap_or_else(|| "-".into()),
            ]
        })
        .collect()
}

pub fn report(report: &ValidationReport, bank: Option<&Bank>) -> String {
    let mut out = String::new();
    for (label, findings) in [("error", &report.errors), ("warning", &report.warnings)] {
        for f in findings {
            let who = f
                .problem_id
                .as_deref()
                .map(|id| format!(" {id}:"))
                .unwrap_or_default();
            let _ = writeln!(out, "{label} [{}]{who} {}", f.rule_code, f.message);
        }
    }
    let summary = match bank {
        Some(b) => format!(
            "{} problems in {} subareas",
            b.problems.len(),
            b.subareas.len()
        ),
        None => "bank could not be read".into(),
    };
    let _ = writeln!(
        out,
        "{}: {summary}; {} error(s), {} warning(s)",
        if report.is_ok() { "ok" } else { "invalid" },
        report.errors.len(),
        report.warnings.len()
    );
    out
}

pub fn step(step: &Step, bank: &Bank, target: u32) -> String {
    let mut out = format!(
        "step {}  seed {}  dv {}\n",
        step.step_number, step.seed, step.decision_vector
    );
    match &step.outcome {
        StepOutcome::Draft { draft } => {
            let rows: Vec<Vec<String>> = draft
                .assignment
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let p = bank.problem(id);
                    let pinned = step.decision_vector.entries[i] != examforge::SlotChoice::Random;
                    vec![
                        format!("{}{}", i + 1, if pinned { "*" } else { "" }),
                        id.clone(),
                        p.map(|p| p.points.to_string()).unwrap_or_default(),
                        p.map(|p| p.solo_level.to_string()).unwrap_or_default(),
                        p.map(|p| format!("{:.2}", p.difficulty))
                            .unwrap_or_default(),
                        p.map(|p| p.ilo_refs.join(",")).unwrap_or_default(),
                    ]
                })
                .collect();
            out.push_str(&table(
                &["slot", "id", "points", "SOLO", "difficulty", "ILOs"],
                &rows,
                &[0, 2, 3, 4],
            ));
            let m = &draft.metrics;
            let _ = writeln!(out, "total points         {} / {target}", m.total_points);
            let _ = writeln!(out, "weighted difficulty  {:.3}", m.weighted_difficulty);
            let hist: Vec<String> = m
                .solo_histogram
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{}:{n}", i + 1))
                .collect();
            let _ = writeln!(out, "SOLO histogram       {}", hist.join(" "));
            let ilos: Vec<&str> = m.ilo_coverage.iter().map(String::as_str).collect();
            let _ = writeln!(out, "ILO coverage         {}", ilos.join(", "));
        }
        StepOutcome::Failed { failure } => out.push_str(&failure_text(failure)),
    }
    out
}

pub fn failure_text(failure: &SelectionFailure) -> String {
    let mut out = format!("no draft: {}\n", failure.message);
    if let Some(f) = &failure.feasibility {
        out.push_str(&feasibility_text(f));
    }
    if let Some(r) = &failure.observed_difficulty {
        let _ = writeln!(
            out,
            "  observed weighted difficulty {:.3}..{:.3}",
            r.min, r.max
        );
    }
    out
}

fn feasibility_text(f: &FeasibilityReport) -> String {
    let mut out = String::new();
    if let Some(reason) = &f.reason {
        let _ = writeln!(out, "  {reason}");
    }
    let range = f
        .achievable_point_range
        .map(|r| format!("{}..{}", r.min, r.max))
        .unwrap_or_else(|| "none".into());
    let _ = writeln!(
        out,
        "  target {} points, pinned {} points, reachable totals {range} (ignoring duplicates)",
        f.target_points, f.pinned_points
    );
    let _ = writeln!(
        out,
        "  completions counted {} (verdict {})",
        f.completion_count,
        match f.verdict {
            examforge::selector::Verdict::Exact => "exact",
            examforge::selector::Verdict::Probabilistic => "probabilistic",
        }
    );
    let counts: Vec<String> = f
        .per_slot_candidate_counts
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{}:{n}", i + 1))
        .collect();
    let _ = writeln!(out, "  candidates per slot {}", counts.join(" "));
    out
}

pub fn session(s: &Session) -> String {
    let bp = &s.blueprint;
    let slots: Vec<&str> = bp.slots.iter().map(|sl| sl.subarea.as_str()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "session   {}", s.id);
    let _ = writeln!(out, "status    {}", s.status);
    let _ = writeln!(out, "base seed {}", s.base_seed);
    let _ = writeln!(out, "exam date {}", bp.exam_date);
    let _ = writeln!(out, "target    {} points", bp.target_points);
    let _ = writeln!(out, "slots     {}", slots.join(","));
    let _ = writeln!(out, "recency   {} days", bp.recency_window_days);
    if let Some(b) = bp.difficulty_band {
        let _ = writeln!(out, "band      {:.2}:{:.2}", b.min, b.max);
    }
    if s.steps.is_empty() {
        out.push_str("no steps yet\n");
        return out;
    }
    out.push('\n');
    let rows: Vec<Vec<String>> = s
        .history()
        .iter()
        .map(|h| {
            let (points, diff, result) = match (&h.assignment, &h.metrics, &h.failure) {
                (Some(a), Some(m), _) => (
                    m.total_points.to_string(),
                    format!("{:.3}", m.weighted_difficulty),
                    a.join(" "),
                ),
                (_, _, Some(f)) => ("-".into(), "-".into(), format!("no draft ({})", kind(f))),
                _ => ("-".into(), "-".into(), String::new()),
            };
            vec![
                h.step_number.to_string(),
                h.decision_vector.to_string(),
                points,
                diff,
                result,
            ]
        })
        .collect();
    out.push_str(&table(
        &[
            "step",
            "decision vector",
            "points",
            "difficulty",
            "assignment",
        ],
        &rows,
        &[0, 2, 3],
    ));
    out
}

fn kind(f: &SelectionFailure) -> &'static str {
    match f.kind {
        examforge::session::FailureKind::Infeasible => "infeasible",
        examforge::session::FailureKind::DegenerateDuplicates => "degenerate duplicates",
        examforge::session::FailureKind::BandInfeasible => "difficulty band",
    }
}
