use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::Zero;

use super::SelectionError;

/// Completion counts for a sequence of random slots.
///
/// `count(j, p)` is the number of ordered ways to fill slots `j..k` (0-based)
/// so that their points sum to exactly `p`, each slot drawing from its own
/// candidate list. Candidates repeated across slots are counted once per
/// slot, i.e. duplicates are permitted here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionTable {
    counts: Vec<Vec<BigUint>>,
    zero: BigUint,
}

impl CompletionTable {
    pub fn slots(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn budget(&self) -> u64 {
        (self.counts[0].len() - 1) as u64
    }

    pub fn count(&self, slot: usize, points: u64) -> &BigUint {
        self.counts
            .get(slot)
            .and_then(|row| row.get(points as usize))
            .unwrap_or(&self.zero)
    }

    /// Number of completions of all slots hitting the budget exactly.
    pub fn total(&self) -> &BigUint {
        self.count(0, self.budget())
    }
}

/// Builds the completion-count table for `remaining` points.
pub fn count_completions(
    candidate_points: &[Vec<u32>],
    remaining: i64,
) -> Result<CompletionTable, SelectionError> {
    if remaining < 0 {
        return Err(SelectionError::PinsExceedTarget {
            excess: remaining.unsigned_abs(),
        });
    }
    let budget = remaining as usize;
    let k = candidate_points.len();
    let mut counts = vec![vec![BigUint::zero(); budget + 1]; k + 1];
    counts[k][0] = BigUint::from(1u8);

    for j in (0..k).rev() {
        let mut multiplicity: BTreeMap<usize, u64> = BTreeMap::new();
        for &v in &candidate_points[j] {
            *multiplicity.entry(v as usize).or_default() += 1;
        }
        let (head, tail) = counts.split_at_mut(j + 1);
        let (row, next) = (&mut head[j], &tail[0]);
        for (p, cell) in row.iter_mut().enumerate() {
            let mut acc = BigUint::zero();
            for (&v, &m) in multiplicity.range(..=p) {
                let rest = &next[p - v];
                if !rest.is_zero() {
                    acc += rest * m;
                }
            }
            *cell = acc;
        }
    }
    Ok(CompletionTable {
        counts,
        zero: BigUint::zero(),
    })
}
