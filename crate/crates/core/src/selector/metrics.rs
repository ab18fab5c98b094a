use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SelectionError;
use crate::bank::{Bank, Problem};

/// Aggregates shown to the educator for one draft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftMetrics {
    pub total_points: u64,
    /// Points-weighted mean of the problems' difficulty indices.
    pub weighted_difficulty: f64,
    /// Counts of problems at SOLO levels 1 through 5.
    pub solo_histogram: [u32; 5],
    pub ilo_coverage: BTreeSet<String>,
}

impl DraftMetrics {
    pub(crate) fn of(problems: &[&Problem]) -> Self {
        let mut total_points = 0u64;
        let mut weighted = 0.0;
        let mut solo_histogram = [0u32; 5];
        let mut ilo_coverage = BTreeSet::new();
        for p in problems {
            total_points += u64::from(p.points);
            weighted += f64::from(p.points) * p.difficulty;
            if let Some(slot) = (p.solo_level as usize)
                .checked_sub(1)
                .and_then(|i| solo_histogram.get_mut(i))
            {
                *slot += 1;
            }
            ilo_coverage.extend(p.ilo_refs.iter().cloned());
        }
        let weighted_difficulty = if total_points == 0 {
            0.0
        } else {
            weighted / total_points as f64
        };
        Self {
            total_points,
            weighted_difficulty,
            solo_histogram,
            ilo_coverage,
        }
    }
}

pub fn compute_metrics(bank: &Bank, assignment: &[String]) -> Result<DraftMetrics, SelectionError> {
    let problems = assignment
        .iter()
        .map(|id| {
            bank.problem(id)
                .ok_or_else(|| SelectionError::UnknownProblem(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DraftMetrics::of(&problems))
}
