//! Brute-force reference for exam selection, written against the raw bank
//! data only. It enumerates the full Cartesian product of random-slot
//! candidates and shares no code with the sampler.
#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use examforge::bank::{Bank, Problem};
use examforge::selector::{Blueprint, DifficultyBand, Slot};
use examforge::{DecisionVector, SlotChoice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Completions hitting the target, duplicates permitted.
    pub with_duplicates: u64,
    /// Full slot assignments hitting the target with all ids distinct.
    pub duplicate_free: Vec<Vec<String>>,
}

fn recently_used(p: &Problem, exam: NaiveDate, window: u32) -> bool {
    if window == 0 {
        return false;
    }
    let start = exam.checked_sub_days(Days::new(u64::from(window))).unwrap();
    p.usage_dates.iter().any(|d| *d > start && *d <= exam)
}

pub fn candidates<'a>(
    bank: &'a Bank,
    bp: &Blueprint,
    dv: &DecisionVector,
    slot: usize,
) -> Vec<&'a Problem> {
    let pinned: BTreeSet<&str> = dv
        .entries
        .iter()
        .filter_map(|e| match e {
            SlotChoice::Manual(id) => Some(id.as_str()),
            SlotChoice::Random => None,
        })
        .collect();
    let subarea = &bp.slots[slot].subarea;
    bank.problems
        .iter()
        .filter(|p| &p.subarea == subarea)
        .filter(|p| !pinned.contains(p.id.as_str()))
        .filter(|p| !recently_used(p, bp.exam_date, bp.recency_window_days))
        .collect()
}

pub fn enumerate(bank: &Bank, bp: &Blueprint, dv: &DecisionVector) -> Enumeration {
    let per_slot: Vec<Vec<&Problem>> = (0..bp.slots.len())
        .map(|i| match &dv.entries[i] {
            SlotChoice::Manual(id) => vec![bank.problems.iter().find(|p| &p.id == id).unwrap()],
            SlotChoice::Random => candidates(bank, bp, dv, i),
        })
        .collect();
    let mut out = Enumeration {
        with_duplicates: 0,
        duplicate_free: Vec::new(),
    };
    if per_slot.iter().any(Vec::is_empty) {
        return out;
    }
    // odometer over the Cartesian product
    let mut idx = vec![0usize; per_slot.len()];
    loop {
        let pick: Vec<&Problem> = idx.iter().zip(&per_slot).map(|(&i, c)| c[i]).collect();
        let total: u64 = pick.iter().map(|p| u64::from(p.points)).sum();
        if total == u64::from(bp.target_points) {
            out.with_duplicates += 1;
            let ids: Vec<String> = pick.iter().map(|p| p.id.clone()).collect();
            if ids.iter().collect::<BTreeSet<_>>().len() == ids.len() {
                out.duplicate_free.push(ids);
            }
        }
        let mut k = per_slot.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < per_slot[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

pub fn weighted_difficulty(bank: &Bank, ids: &[String]) -> f64 {
    let ps: Vec<&Problem> = ids
        .iter()
        .map(|id| bank.problems.iter().find(|p| &p.id == id).unwrap())
        .collect();
    let pts: f64 = ps.iter().map(|p| f64::from(p.points)).sum();
    ps.iter()
        .map(|p| f64::from(p.points) * p.difficulty)
        .sum::<f64>()
        / pts
}

pub struct Instance {
    pub bank: Bank,
    pub blueprint: Blueprint,
    pub dv: DecisionVector,
}

pub struct Limits {
    pub max_slots: usize,
    pub max_per_subarea: usize,
    pub max_points: u32,
    pub pin_probability: f64,
    pub usage_probability: f64,
    /// Place usage dates on and around the edges of the recency window
    /// instead of uniformly over four years.
    pub boundary_usage: bool,
}

pub const SMALL: Limits = Limits {
    max_slots: 6,
    max_per_subarea: 8,
    max_points: 6,
    pin_probability: 0.2,
    usage_probability: 0.2,
    boundary_usage: false,
};

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// Random bank + blueprint + decision vector. The target is the total of a
/// random pick half the time, otherwise uniform in a plausible range.
pub fn random_instance(seed: u64, limits: &Limits) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sub = rng.random_range(1..=3usize);
    let codes: Vec<String> = (0..n_sub).map(|i| format!("S{i}")).collect();
    let exam = date("2025-06-15");
    let window: u32 = [0, 1, 365, 730][rng.random_range(0..4)];
    let mut bank = Bank::new(codes.iter().map(|c| (c.clone(), format!("Area {c}"))));
    for c in &codes {
        let n = rng.random_range(1..=limits.max_per_subarea);
        for k in 0..n {
            let id = format!("{c}-{k}");
            let mut usage = Vec::new();
            if rng.random_bool(limits.usage_probability) {
                let day = if limits.boundary_usage {
                    let w = i64::from(window);
                    let offsets = [w, w - 1, w + 1, 0, -1, 1, -30];
                    let back = offsets[rng.random_range(0..offsets.len())];
                    exam - chrono::Duration::days(back)
                } else {
                    exam.checked_sub_days(Days::new(rng.random_range(1..1500u64)))
                        .unwrap()
                };
                usage.push(day);
            }
            let p = Problem {
                id: id.clone(),
                subarea: c.clone(),
                points: rng.random_range(1..=limits.max_points),
                ilo_refs: vec![format!("ILO{}", rng.random_range(1..5))],
                solo_level: rng.random_range(1..=5),
                difficulty: f64::from(rng.random_range(0..=20u8)) / 20.0,
                statement_path: format!("p/{id}.tex"),
                solution_path: format!("s/{id}.tex"),
                usage_dates: usage,
            };
            bank = bank.with_problem(p, &format!("Statement {id}"), &format!("Solution {id}"));
        }
    }
    let n_slots = rng.random_range(1..=limits.max_slots);
    let slots: Vec<Slot> = (0..n_slots)
        .map(|i| Slot {
            slot_index: i + 1,
            subarea: codes[rng.random_range(0..n_sub)].clone(),
        })
        .collect();

    let mut entries = Vec::new();
    let mut pinned = BTreeSet::new();
    for s in &slots {
        let pool: Vec<&Problem> = bank
            .problems
            .iter()
            .filter(|p| p.subarea == s.subarea && !pinned.contains(&p.id))
            .collect();
        if !pool.is_empty() && rng.random_bool(limits.pin_probability) {
            let p = pool[rng.random_range(0..pool.len())];
            pinned.insert(p.id.clone());
            entries.push(SlotChoice::Manual(p.id.clone()));
        } else {
            entries.push(SlotChoice::Random);
        }
    }

    let target = if rng.random_bool(0.5) {
        slots
            .iter()
            .map(|s| {
                let pool: Vec<&Problem> = bank
                    .problems
                    .iter()
                    .filter(|p| p.subarea == s.subarea)
                    .collect();
                pool[rng.random_range(0..pool.len())].points
            })
            .sum::<u32>()
    } else {
        rng.random_range(1..=(n_slots as u32 * limits.max_points))
    };
    let blueprint = Blueprint {
        slots,
        target_points: target.max(1),
        recency_window_days: window,
        difficulty_band: None::<DifficultyBand>,
        exam_date: exam,
    };
    Instance {
        bank,
        blueprint,
        dv: DecisionVector { entries },
    }
}
