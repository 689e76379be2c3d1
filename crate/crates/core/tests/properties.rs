use dccc_core::canonical::{decode_digits, encode_digits};
use dccc_core::harness::{generate_instance, instance_seed};
use dccc_core::models;
use dccc_core::query::CompiledQuery;
use dccc_core::search::{build_systems, exhaustive_search, pruned_search, Heuristics};
use dccc_core::system::exact_rank_of;
use dccc_core::{solve, Method, Query, Regime, SearchConfig};
use proptest::prelude::*;

const RESIDUAL: f64 = 1e-7;

fn queries() -> [Query; 3] {
    [Query::pns("X", "Y1"), Query::pns("X", "Y2"), Query::pns("Y1", "Y2")]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn digits_round_trip(index in 0usize..100_000, base in 2usize..7) {
        let mut width = 1;
        while base.pow(width as u32) <= index {
            width += 1;
        }
        let digits = encode_digits(index, base, width);
        prop_assert_eq!(digits.len(), width);
        prop_assert!(digits.iter().all(|&d| d < base));
        prop_assert_eq!(decode_digits(&digits, base), index);
    }

    #[test]
    fn reduction_is_order_independent(a in 0usize..16, b in 0usize..16) {
        let m = models::confounded_chain();
        let both = m.reduce(&[("U", a), ("U", b)]).unwrap();
        let seq = m.reduce(&[("U", a)]).unwrap().reduce(&[("U", b)]).unwrap();
        let rev = m.reduce(&[("U", b)]).unwrap().reduce(&[("U", a)]).unwrap();
        prop_assert_eq!(both.state_labels("U").unwrap(), seq.state_labels("U").unwrap());
        prop_assert_eq!(seq.state_labels("U").unwrap(), rev.state_labels("U").unwrap());
        let expected = if a == b { 15 } else { 14 };
        prop_assert_eq!(both.cardinality("U").unwrap(), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn vertices_are_feasible_distributions(seed in any::<u64>()) {
        let inst = generate_instance(seed).unwrap();
        let skeleton = inst.skeleton();
        for regime in [Regime::SemiObservational, Regime::SemiCombined, Regime::SemiExperimental] {
            let systems = build_systems(&skeleton, &inst.evidence, regime).unwrap();
            for (id, system) in &systems {
                let set = exhaustive_search(system, &SearchConfig::exhaustive()).unwrap();
                prop_assert!(set.complete);
                prop_assert!(!set.is_empty(), "{regime} {id}");
                for p in &set.points {
                    prop_assert!(p.probabilities.iter().all(|&v| v >= 0.0));
                    prop_assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < RESIDUAL);
                    prop_assert!(system.residual(&p.probabilities) < RESIDUAL);
                    prop_assert!(p.support.len() <= system.rank());
                }
                for (i, p) in set.points.iter().enumerate() {
                    for q in &set.points[i + 1..] {
                        prop_assert!(p.distance(q) > 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn generating_model_lies_inside_every_exact_interval(seed in any::<u64>()) {
        let inst = generate_instance(seed).unwrap();
        let skeleton = inst.skeleton();
        for method in [Method::SO, Method::SOE, Method::SE, Method::MMO, Method::MergeExact] {
            let sol = solve(&skeleton, &inst.evidence, method, &SearchConfig::exhaustive()).unwrap();
            for q in queries() {
                let truth = CompiledQuery::new(&skeleton, &q).unwrap().value_for(&inst.model).unwrap();
                match sol.bound(&q) {
                    Ok(iv) => prop_assert!(
                        iv.lower - 1e-9 <= truth && truth <= iv.upper + 1e-9,
                        "{method} {q}: {truth} outside [{}, {}]", iv.lower, iv.upper
                    ),
                    Err(dccc_core::Error::NotComputable(_)) => prop_assert_eq!(method, Method::MMO),
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }
    }

    #[test]
    fn combined_vertices_satisfy_both_weaker_systems(seed in any::<u64>()) {
        let inst = generate_instance(seed).unwrap();
        let skeleton = inst.skeleton();
        let combined = &build_systems(&skeleton, &inst.evidence, Regime::SemiCombined).unwrap()["U"];
        let obs = &build_systems(&skeleton, &inst.evidence, Regime::SemiObservational).unwrap()["U"];
        let exp = &build_systems(&skeleton, &inst.evidence, Regime::SemiExperimental).unwrap()["U"];
        let set = exhaustive_search(combined, &SearchConfig::exhaustive()).unwrap();
        for p in &set.points {
            prop_assert!(obs.is_satisfied_by(&p.probabilities, RESIDUAL));
            prop_assert!(exp.is_satisfied_by(&p.probabilities, RESIDUAL));
        }
    }

    #[test]
    fn thread_count_does_not_change_the_result(seed in any::<u64>()) {
        let inst = generate_instance(seed).unwrap();
        let systems = build_systems(&inst.skeleton(), &inst.evidence, Regime::SemiObservational).unwrap();
        let par = exhaustive_search(&systems["U"], &SearchConfig::exhaustive()).unwrap();
        let ser = exhaustive_search(&systems["U"], &SearchConfig::exhaustive().serial()).unwrap();
        prop_assert_eq!(par.points, ser.points);
        prop_assert_eq!(par.stats, ser.stats);
    }
}

#[test]
fn rank_identities_on_random_instances() {
    for i in 0..100 {
        let inst = generate_instance(instance_seed(99, i)).unwrap();
        let skeleton = inst.skeleton();
        let rank = |regime| {
            let s = &build_systems(&skeleton, &inst.evidence, regime).unwrap()["U"];
            exact_rank_of(s.matrix(), s.columns())
        };
        assert_eq!(rank(Regime::SemiObservational), 7);
        assert_eq!(rank(Regime::SemiExperimental), 5);
        assert_eq!(rank(Regime::SemiCombined), 9);
    }
}

#[test]
fn group_pruning_and_coverage_keep_every_vertex() {
    let group_only = SearchConfig::heuristic(Heuristics::default());
    let coverage = SearchConfig::heuristic(Heuristics {
        coverage: true,
        low_probability: None,
    });
    for i in 0..100 {
        let inst = generate_instance(instance_seed(123, i)).unwrap();
        let systems = build_systems(&inst.skeleton(), &inst.evidence, Regime::SemiObservational).unwrap();
        let s = &systems["U"];
        let full = exhaustive_search(s, &SearchConfig::exhaustive()).unwrap();
        let pruned = pruned_search(s, &group_only).unwrap();
        assert_eq!(full.points, pruned.points, "instance {i}");
        assert!(pruned.stats.supports_solved < full.stats.supports_solved);
        let covered = pruned_search(s, &coverage).unwrap();
        assert_eq!(full.points, covered.points, "instance {i}");
    }
}

#[test]
fn group_pruning_solves_the_supports_counted_by_inclusion_exclusion() {
    let inst = generate_instance(4).unwrap();
    let s = &build_systems(&inst.skeleton(), &inst.evidence, Regime::SemiObservational).unwrap()["U"];
    let pruned = pruned_search(s, &SearchConfig::heuristic(Heuristics::default())).unwrap();
    let binom = |n: i64, k: i64| -> i64 {
        if k < 0 || k > n {
            return 0;
        }
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    };
    let mut expected = 0;
    for j in 0..=4 {
        let sign = if j % 2 == 0 { 1 } else { -1 };
        expected += sign * binom(4, j) * binom(16 - 2 * j, 7 - 2 * j);
    }
    assert_eq!(pruned.stats.supports_solved as i64, expected);
}
