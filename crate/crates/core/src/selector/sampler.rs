use std::collections::{BTreeSet, HashSet};

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::counting::{count_completions, CompletionTable};
use super::metrics::DraftMetrics;
use super::{
    eligible_candidates, Blueprint, DecisionVector, ExamDraft, SelectionError, SlotChoice,
};
use crate::bank::{validate_bank, Bank, Problem};
use crate::rng::ExamRng;

/// Upper bound on duplicate restarts, and separately on difficulty-band
/// rejections, within one sampling call.
pub const MAX_REJECTIONS: u32 = 10_000;

/// Completion counts below this are searched exhaustively for a
/// duplicate-free witness; above it the search is by sampling.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

const WITNESS_SEED: u64 = 0x6578_616D_666F_7267;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Exact,
    /// Every one of [`MAX_REJECTIONS`] witness draws reused a problem; a
    /// duplicate-free completion may still exist.
    Probabilistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointRange {
    pub min: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub verdict: Verdict,
    /// Completions of the random slots hitting the remaining budget, counted
    /// with duplicates permitted.
    #[serde(with = "crate::wire::biguint_string")]
    pub completion_count: BigUint,
    pub target_points: u32,
    pub pinned_points: u64,
    /// Exam totals reachable with the current pins, ignoring duplicates.
    /// `None` when some random slot has no candidates.
    pub achievable_point_range: Option<PointRange>,
    /// Eligible candidates per slot, in slot order (1 for pinned slots).
    pub per_slot_candidate_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

struct PointGroup<'a> {
    points: u32,
    members: Vec<&'a Problem>,
}

/// Precomputed sampling state for one (bank, blueprint, decision vector).
///
/// [`sample_draft`] is `Sampler::new(..)?.sample(seed)`; keep a `Sampler`
/// around to draw many drafts for the same inputs.
pub struct Sampler<'a> {
    blueprint: &'a Blueprint,
    /// Pinned problem per slot position, `None` for random slots.
    pinned: Vec<Option<&'a Problem>>,
    /// Slot positions (0-based) of the random slots.
    random_slots: Vec<usize>,
    /// Per random slot: candidates grouped by points, ascending; members by id.
    groups: Vec<Vec<PointGroup<'a>>>,
    pinned_points: u64,
    table: Option<CompletionTable>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        bank: &'a Bank,
        blueprint: &'a Blueprint,
        dv: &DecisionVector,
    ) -> Result<Self, SelectionError> {
        let report = validate_bank(bank);
        if !report.is_ok() {
            return Err(SelectionError::InvalidBank(report));
        }
        blueprint.validate(bank)?;
        dv.validate(bank, blueprint)?;

        let excluded: BTreeSet<String> = dv.pins().map(|(_, id)| id.to_owned()).collect();
        let mut pinned = Vec::with_capacity(dv.len());
        let mut random_slots = Vec::new();
        let mut groups = Vec::new();
        let mut pinned_points = 0u64;
        for (pos, entry) in dv.entries.iter().enumerate() {
            match entry {
                SlotChoice::Manual(id) => {
                    let p = bank.problem(id).expect("validated pin");
                    pinned_points += u64::from(p.points);
                    pinned.push(Some(p));
                }
                SlotChoice::Random => {
                    pinned.push(None);
                    random_slots.push(pos);
                    let mut cands = eligible_candidates(bank, blueprint, pos + 1, &excluded);
                    // stable: id order is kept inside each points group
                    cands.sort_by_key(|p| p.points);
                    let mut slot_groups: Vec<PointGroup> = Vec::new();
                    for c in cands {
                        match slot_groups.last_mut() {
                            Some(g) if g.points == c.points => g.members.push(c),
                            _ => slot_groups.push(PointGroup {
                                points: c.points,
                                members: vec![c],
                            }),
                        }
                    }
                    groups.push(slot_groups);
                }
            }
        }

        let remaining = i64::from(blueprint.target_points) - pinned_points as i64;
        let point_lists: Vec<Vec<u32>> = groups
            .iter()
            .map(|gs: &Vec<PointGroup>| {
                gs.iter()
                    .flat_map(|g| std::iter::repeat_n(g.points, g.members.len()))
                    .collect()
            })
            .collect();
        let table = count_completions(&point_lists, remaining).ok();

        Ok(Self {
            blueprint,
            pinned,
            random_slots,
            groups,
            pinned_points,
            table,
        })
    }

    /// Completions counted with duplicates permitted (zero when the pins
    /// already exceed the target).
    pub fn completion_count(&self) -> BigUint {
        self.table
            .as_ref()
            .map(|t| t.total().clone())
            .unwrap_or_default()
    }

    /// Draws one draft. Deterministic in `seed`.
    pub fn sample(&self, seed: u64) -> Result<ExamDraft, SelectionError> {
        let Some(table) = self.table.as_ref().filter(|t| !t.total().is_zero()) else {
            return Err(SelectionError::Infeasible(Box::new(self.feasibility())));
        };
        let mut rng = ExamRng::from_seed(seed);
        let mut restarts = 0u32;
        let mut band_rejections = 0u32;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        loop {
            let draw = self.draw(table, &mut rng);
            let problems = self.merge(&draw);
            if has_duplicate(&problems) {
                restarts += 1;
                if restarts >= MAX_REJECTIONS {
                    let report = self.feasibility();
                    return Err(
                        if report.feasible || report.verdict == Verdict::Probabilistic {
                            SelectionError::DegenerateDuplicates {
                                restarts,
                                report: Box::new(report),
                            }
                        } else {
                            SelectionError::Infeasible(Box::new(report))
                        },
                    );
                }
                continue;
            }
            let metrics = DraftMetrics::of(&problems);
            if let Some(band) = self.blueprint.difficulty_band {
                if !band.contains(metrics.weighted_difficulty) {
                    band_rejections += 1;
                    lo = lo.min(metrics.weighted_difficulty);
                    hi = hi.max(metrics.weighted_difficulty);
                    if band_rejections >= MAX_REJECTIONS {
                        return Err(SelectionError::BandInfeasible {
                            band,
                            rejections: band_rejections,
                            observed_min: lo,
                            observed_max: hi,
                        });
                    }
                    continue;
                }
            }
            return Ok(ExamDraft {
                assignment: problems.iter().map(|p| p.id.clone()).collect(),
                metrics,
                seed_used: seed,
            });
        }
    }

    /// Fills the random slots left to right. At slot `j` with budget `p`, a
    /// uniform `r < N[j][p]` is drawn and the candidates are walked in
    /// (points, id) order, each occupying `N[j+1][p - points]` values of `r`.
    fn draw(&self, table: &CompletionTable, rng: &mut ExamRng) -> Vec<&'a Problem> {
        let mut budget = table.budget();
        let mut out = Vec::with_capacity(self.groups.len());
        for (j, slot_groups) in self.groups.iter().enumerate() {
            let mut r = rng.below_big(table.count(j, budget));
            let mut chosen = None;
            for g in slot_groups {
                let v = u64::from(g.points);
                if v > budget {
                    break;
                }
                let unit = table.count(j + 1, budget - v);
                if unit.is_zero() {
                    continue;
                }
                let width = unit * g.members.len();
                if r < width {
                    let idx = (&r / unit).to_usize().expect("index below group size");
                    chosen = Some((g.members[idx], v));
                    break;
                }
                r -= width;
            }
            let (p, v) = chosen.expect("completion table is consistent with candidates");
            out.push(p);
            budget -= v;
        }
        debug_assert_eq!(budget, 0);
        out
    }

    fn merge(&self, draw: &[&'a Problem]) -> Vec<&'a Problem> {
        let mut random = draw.iter();
        self.pinned
            .iter()
            .map(|slot| match slot {
                Some(p) => *p,
                None => random.next().expect("one draw per random slot"),
            })
            .collect()
    }

    /// Decides whether a duplicate-free completion exists and summarizes
    /// why not when it does not.
    pub fn feasibility(&self) -> FeasibilityReport {
        let per_slot_candidate_counts: Vec<usize> = {
            let mut groups = self.groups.iter();
            self.pinned
                .iter()
                .map(|slot| match slot {
                    Some(_) => 1,
                    None => groups
                        .next()
                        .map(|g| g.iter().map(|g| g.members.len()).sum())
                        .unwrap_or(0),
                })
                .collect()
        };
        let achievable_point_range = self
            .groups
            .iter()
            .map(|gs| Some((gs.first()?.points as u64, gs.last()?.points as u64)))
            .try_fold((self.pinned_points, self.pinned_points), |acc, mm| {
                mm.map(|(lo, hi)| (acc.0 + lo, acc.1 + hi))
            })
            .map(|(min, max)| PointRange { min, max });

        let target = self.blueprint.target_points;
        let mut report = FeasibilityReport {
            feasible: false,
            verdict: Verdict::Exact,
            completion_count: self.completion_count(),
            target_points: target,
            pinned_points: self.pinned_points,
            achievable_point_range,
            per_slot_candidate_counts,
            reason: None,
        };

        let Some(table) = self.table.as_ref() else {
            report.reason = Some(format!(
                "pinned problems total {} points, above the target of {target}",
                self.pinned_points
            ));
            return report;
        };
        if table.total().is_zero() {
            let empty: Vec<String> = self
                .random_slots
                .iter()
                .zip(&self.groups)
                .filter(|(_, g)| g.is_empty())
                .map(|(pos, _)| (pos + 1).to_string())
                .collect();
            report.reason = Some(if empty.is_empty() {
                format!("no combination of eligible problems reaches exactly {target} points")
            } else {
                format!("no eligible candidates for slot(s) {}", empty.join(", "))
            });
            return report;
        }

        if self.random_sets_disjoint() {
            report.feasible = true;
            return report;
        }
        if table.total() < &BigUint::from(BRUTE_FORCE_LIMIT) {
            report.feasible = self.exhaustive_witness(table);
        } else {
            let mut rng = ExamRng::from_seed(WITNESS_SEED);
            report.feasible = (0..MAX_REJECTIONS)
                .any(|_| !has_duplicate(&self.merge(&self.draw(table, &mut rng))));
            if !report.feasible {
                report.verdict = Verdict::Probabilistic;
            }
        }
        if !report.feasible {
            report.reason = Some(
                "every completion that reaches the target reuses a problem in two slots".into(),
            );
        }
        report
    }

    fn random_sets_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.groups.iter().all(|gs| {
            let ids: HashSet<&str> = gs
                .iter()
                .flat_map(|g| g.members.iter().map(|p| p.id.as_str()))
                .collect();
            let ok = ids.iter().all(|id| !seen.contains(id));
            seen.extend(ids);
            ok
        })
    }

    fn exhaustive_witness(&self, table: &CompletionTable) -> bool {
        fn search<'a>(
            groups: &[Vec<PointGroup<'a>>],
            table: &CompletionTable,
            j: usize,
            budget: u64,
            used: &mut Vec<&'a str>,
        ) -> bool {
            if j == groups.len() {
                return budget == 0;
            }
            for g in &groups[j] {
                let v = u64::from(g.points);
                if v > budget {
                    break;
                }
                if table.count(j + 1, budget - v).is_zero() {
                    continue;
                }
                for p in &g.members {
                    if used.contains(&p.id.as_str()) {
                        continue;
                    }
                    used.push(&p.id);
                    if search(groups, table, j + 1, budget - v, used) {
                        return true;
                    }
                    used.pop();
                }
            }
            false
        }
        let mut used: Vec<&str> = self
            .pinned
            .iter()
            .flatten()
            .map(|p| p.id.as_str())
            .collect();
        search(&self.groups, table, 0, table.budget(), &mut used)
    }
}

fn has_duplicate(problems: &[&Problem]) -> bool {
    let mut seen = HashSet::with_capacity(problems.len());
    !problems.iter().all(|p| seen.insert(p.id.as_str()))
}

/// Samples a draft uniformly among all duplicate-free completions of `dv`
/// (restricted to the difficulty band, when the blueprint has one).
pub fn sample_draft(
    bank: &Bank,
    blueprint: &Blueprint,
    dv: &DecisionVector,
    seed: u64,
) -> Result<ExamDraft, SelectionError> {
    Sampler::new(bank, blueprint, dv)?.sample(seed)
}

pub fn check_feasibility(
    bank: &Bank,
    blueprint: &Blueprint,
    dv: &DecisionVector,
) -> Result<FeasibilityReport, SelectionError> {
    Ok(Sampler::new(bank, blueprint, dv)?.feasibility())
}
