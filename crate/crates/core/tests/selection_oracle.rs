mod support;

use std::collections::{BTreeSet, HashMap};

use examforge::selector::{check_feasibility, count_completions, sample_draft, Sampler, Verdict};
use examforge::SlotChoice;
use num_bigint::BigUint;
use support::oracle::{self, SMALL};

#[test]
fn feasibility_and_count_agree_with_enumeration() {
    let mut feasible = 0;
    for seed in 0..400 {
        let inst = oracle::random_instance(seed, &SMALL);
        let truth = oracle::enumerate(&inst.bank, &inst.blueprint, &inst.dv);
        let report = check_feasibility(&inst.bank, &inst.blueprint, &inst.dv).unwrap();
        assert_eq!(report.verdict, Verdict::Exact, "seed {seed}");
        assert_eq!(
            report.feasible,
            !truth.duplicate_free.is_empty(),
            "seed {seed}"
        );
        assert_eq!(
            report.completion_count,
            BigUint::from(truth.with_duplicates),
            "seed {seed}"
        );
        feasible += usize::from(report.feasible);
    }
    // the generator must exercise both outcomes
    assert!(
        feasible > 50 && feasible < 350,
        "{feasible} feasible of 400"
    );
}

#[test]
fn dp_counts_agree_with_enumeration_over_point_lists() {
    for seed in 0..200 {
        let inst = oracle::random_instance(seed, &SMALL);
        let lists: Vec<Vec<u32>> = (0..inst.blueprint.slots.len())
            .filter(|&i| inst.dv.entries[i] == SlotChoice::Random)
            .map(|i| {
                oracle::candidates(&inst.bank, &inst.blueprint, &inst.dv, i)
                    .iter()
                    .map(|p| p.points)
                    .collect()
            })
            .collect();
        let pinned: i64 = inst
            .dv
            .pins()
            .map(|(_, id)| i64::from(inst.bank.problem(id).unwrap().points))
            .sum();
        let remaining = i64::from(inst.blueprint.target_points) - pinned;
        let truth = oracle::enumerate(&inst.bank, &inst.blueprint, &inst.dv);
        match count_completions(&lists, remaining) {
            Ok(table) => assert_eq!(
                *table.total(),
                BigUint::from(truth.with_duplicates),
                "seed {seed}"
            ),
            Err(_) => {
                assert!(remaining < 0, "seed {seed}");
                assert_eq!(truth.with_duplicates, 0);
            }
        }
    }
}

#[test]
fn every_draft_is_an_enumerated_completion_and_all_are_reached() {
    let mut checked = 0;
    for seed in 0..300 {
        let inst = oracle::random_instance(seed, &SMALL);
        let truth = oracle::enumerate(&inst.bank, &inst.blueprint, &inst.dv);
        let m = truth.duplicate_free.len();
        if m == 0 || m > 12 {
            continue;
        }
        let all: BTreeSet<&Vec<String>> = truth.duplicate_free.iter().collect();
        let sampler = Sampler::new(&inst.bank, &inst.blueprint, &inst.dv).unwrap();
        let mut seen = HashMap::new();
        for s in 0..(m as u64 * 60) {
            let d = sampler.sample(s).unwrap();
            assert!(
                all.contains(&d.assignment),
                "seed {seed}: {:?}",
                d.assignment
            );
            *seen.entry(d.assignment).or_insert(0) += 1;
        }
        assert_eq!(seen.len(), m, "seed {seed}: some completion never drawn");
        checked += 1;
    }
    assert!(
        checked >= 20,
        "only {checked} instances had small feasible sets"
    );
}

#[test]
fn recency_and_pins_hold_on_random_instances() {
    for seed in 0..2_000 {
        let inst = oracle::random_instance(seed, &SMALL);
        let Ok(d) = sample_draft(&inst.bank, &inst.blueprint, &inst.dv, seed) else {
            continue;
        };
        let ids: BTreeSet<&String> = d.assignment.iter().collect();
        assert_eq!(ids.len(), d.assignment.len());
        for (i, entry) in inst.dv.entries.iter().enumerate() {
            match entry {
                SlotChoice::Manual(id) => assert_eq!(&d.assignment[i], id),
                SlotChoice::Random => {
                    let ok = oracle::candidates(&inst.bank, &inst.blueprint, &inst.dv, i);
                    assert!(
                        ok.iter().any(|p| p.id == d.assignment[i]),
                        "seed {seed} slot {i}"
                    );
                }
            }
        }
        let weighted = oracle::weighted_difficulty(&inst.bank, &d.assignment);
        assert!((weighted - d.metrics.weighted_difficulty).abs() < 1e-12);
    }
}
