mod support;

use std::collections::HashSet;

use proptest::prelude::*;
use rulemine_core::lattice::{children, Interpretation, SourceMask};
use rulemine_core::miner::{mine, mine_dual, DualMiner, DualOptions, MonoMiner};
use rulemine_core::model::{CountingClient, ValidityAssignment};
use rulemine_core::oracle::{brute_force_valid, propagate_validity, Oracle};
use rulemine_core::predicate::{OutputPredicate, PredicatePair};

use support::{bits, input, mask, quantified_valid, recursive_valid};

const BOTH: [Interpretation; 2] = [Interpretation::Retention, Interpretation::Omission];

fn table_for(n: usize, raw: u64) -> u64 {
    if n == 6 {
        raw
    } else {
        raw & ((1u64 << (1 << n)) - 1)
    }
}

fn token_pair() -> PredicatePair {
    PredicatePair {
        retention: OutputPredicate::token(),
        omission: OutputPredicate::token(),
    }
}

#[test]
fn propagation_matches_both_definitions_exhaustively() {
    for n in 0..=3 {
        for table in 0..1u64 << (1 << n) {
            let sat = |t: u64| table >> t & 1 == 1;
            let flags: Vec<bool> = (0..1u64 << n).map(sat).collect();
            let propagated: Vec<u64> = propagate_validity(n, &flags)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v)
                .map(|(b, _)| b as u64)
                .collect();
            assert_eq!(
                propagated,
                quantified_valid(n, &sat, Interpretation::Retention),
                "n={n} table={table:#x}"
            );
            for interp in BOTH {
                assert_eq!(
                    recursive_valid(n, &sat, interp),
                    quantified_valid(n, &sat, interp)
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn mono_matches_definitions(n in 0usize..=6, raw in any::<u64>()) {
        let table = table_for(n, raw);
        let sat = |t: u64| table >> t & 1 == 1;
        let model = ValidityAssignment::from_table(n, table);
        let set = input(n);
        for interp in BOTH {
            let run = mine(&set, &OutputPredicate::token(), &model, interp).unwrap();
            let expected = recursive_valid(n, &sat, interp);
            prop_assert_eq!(bits(&run.valid), expected);
            let oracle = brute_force_valid(interp, &set, &OutputPredicate::token(), &model).unwrap();
            prop_assert_eq!(&run.valid, &oracle.valid);
            prop_assert_eq!(&run.minimal, &oracle.minimal);
            let t = &run.telemetry;
            prop_assert!(t.model_calls >= 1 && t.model_calls <= 1 << n);
            prop_assert_eq!(t.model_calls, t.evaluated_per_level.iter().sum::<usize>());
        }
    }

    #[test]
    fn dual_is_the_union_of_two_monos(n in 0usize..=6, raw in any::<u64>(), cache in any::<bool>()) {
        let table = table_for(n, raw);
        let model = ValidityAssignment::from_table(n, table);
        let set = input(n);
        let token = OutputPredicate::token();
        let dual = mine_dual(&set, &token_pair(), &model, cache).unwrap();
        let ret = mine(&set, &token, &model, Interpretation::Retention).unwrap();
        let omi = mine(&set, &token, &model, Interpretation::Omission).unwrap();
        prop_assert_eq!(&dual.retention.valid, &ret.valid);
        prop_assert_eq!(&dual.omission.valid, &omi.valid);
        prop_assert_eq!(&dual.retention.telemetry, &ret.telemetry);
        prop_assert_eq!(&dual.omission.telemetry, &omi.telemetry);
        prop_assert_eq!(
            dual.telemetry.nodes_visited(),
            dual.telemetry.visited_per_level.iter().sum::<usize>()
        );
    }

    #[test]
    fn cached_dual_never_repeats_an_input(n in 0usize..=6, raw in any::<u64>()) {
        let table = table_for(n, raw);
        let set = input(n);
        let counted = CountingClient::new(ValidityAssignment::from_table(n, table));
        let cached = mine_dual(&set, &token_pair(), &counted, true).unwrap();
        prop_assert_eq!(counted.duplicate_calls(), 0);
        prop_assert!(counted.calls() <= 1 << n);
        prop_assert_eq!(counted.calls(), cached.telemetry.model_calls);

        let plain = mine_dual(&set, &token_pair(), &ValidityAssignment::from_table(n, table), false).unwrap();
        prop_assert_eq!(&cached.retention, &plain.retention);
        prop_assert_eq!(&cached.omission, &plain.omission);
        let requests = cached.retention.telemetry.model_calls + cached.omission.telemetry.model_calls;
        prop_assert_eq!(cached.telemetry.model_calls + cached.telemetry.cache_hits, requests);
        prop_assert_eq!(plain.telemetry.model_calls, requests);
    }

    #[test]
    fn verify_rule_agrees_with_brute_force(n in 0usize..=5, raw in any::<u64>()) {
        let table = table_for(n, raw);
        let model = ValidityAssignment::from_table(n, table);
        let set = input(n);
        let token = OutputPredicate::token();
        let oracle = Oracle::new(&set, &token, &model).unwrap();
        for interp in BOTH {
            let valid: HashSet<u64> = bits(&oracle.brute_force_valid(interp).unwrap().valid)
                .into_iter()
                .collect();
            for b in 0..1u64 << n {
                prop_assert_eq!(oracle.verify_rule(mask(b, n), interp).unwrap(), valid.contains(&b));
            }
        }
    }

    #[test]
    fn pruned_nodes_are_children_of_failures(n in 1usize..=6, raw in any::<u64>()) {
        let table = table_for(n, raw);
        let model = ValidityAssignment::from_table(n, table);
        let set = input(n);
        for interp in BOTH {
            let run = MonoMiner::new(&set, &OutputPredicate::token(), &model, interp)
                .trace(true)
                .run()
                .unwrap();
            let valid: HashSet<SourceMask> = run.valid.iter().copied().collect();
            let trace = run.trace.unwrap();
            // Frontier carried into the next level: last level's pruned plus failed.
            let mut frontier: HashSet<SourceMask> = HashSet::new();
            for level in &trace {
                let expected: HashSet<SourceMask> = frontier.iter().flat_map(|z| children(*z)).collect();
                let pruned: HashSet<SourceMask> = level.pruned.iter().copied().collect();
                prop_assert_eq!(&pruned, &expected);
                for p in &pruned {
                    prop_assert!(!valid.contains(p));
                    prop_assert!(!level.evaluated.contains(p));
                }
                frontier = pruned;
                frontier.extend(level.failed.iter().copied());
            }
        }
    }

    #[test]
    fn parallel_runs_are_bit_identical(n in 0usize..=6, raw in any::<u64>(), threads in 2usize..=4) {
        let table = table_for(n, raw);
        let model = ValidityAssignment::from_table(n, table);
        let set = input(n);
        for interp in BOTH {
            let seq = MonoMiner::new(&set, &OutputPredicate::token(), &model, interp).trace(true).run().unwrap();
            let par = MonoMiner::new(&set, &OutputPredicate::token(), &model, interp)
                .trace(true)
                .parallelism(threads)
                .run()
                .unwrap();
            prop_assert_eq!(seq, par);
        }
        let options = DualOptions { cache: true, parallelism: threads, trace: true, ..Default::default() };
        let par = DualMiner::new(&set, &token_pair(), &model).options(options).run().unwrap();
        let seq = DualMiner::new(&set, &token_pair(), &model)
            .options(DualOptions { cache: true, trace: true, ..Default::default() })
            .run()
            .unwrap();
        prop_assert_eq!(seq, par);
    }
}

#[test]
fn full_lattice_is_visited_only_when_everything_holds() {
    for n in 0..=6 {
        let model = ValidityAssignment::from_fn(n, |_| true);
        let run = mine(&input(n), &OutputPredicate::token(), &model, Interpretation::Retention).unwrap();
        assert_eq!(run.telemetry.model_calls, 1 << n);
        assert_eq!(run.valid.len(), 1 << n);
        assert_eq!(run.minimal, vec![SourceMask::empty(n).unwrap()]);
        assert!(!run.telemetry.terminated_early());
    }
}
