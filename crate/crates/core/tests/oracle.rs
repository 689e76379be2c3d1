use dccc_core::harness::{generate_instance, generate_raw_instance, instance_seed};
use dccc_core::oracle::{lp_bound, sample_feasible, LinearFunctional, Sense};
use dccc_core::pipeline::lp_query_interval;
use dccc_core::query::CompiledQuery;
use dccc_core::search::{build_systems, exhaustive_search};
use dccc_core::{solve, Error, Method, Query, Regime, SearchConfig};
use std::collections::BTreeMap;

fn queries() -> [Query; 3] {
    [Query::pns("X", "Y1"), Query::pns("X", "Y2"), Query::pns("Y1", "Y2")]
}

#[test]
fn enumeration_matches_the_lp() {
    let config = SearchConfig::exhaustive();
    for i in 0..8 {
        let inst = generate_instance(instance_seed(61, i)).unwrap();
        let skeleton = inst.skeleton();
        for method in [Method::SO, Method::SOE, Method::SE] {
            let sol = solve(&skeleton, &inst.evidence, method, &config).unwrap();
            for q in queries() {
                let iv = sol.bound(&q).unwrap();
                let (lo, hi) = lp_query_interval(&skeleton, &inst.evidence, method, &q, &config).unwrap();
                assert!((iv.lower - lo).abs() < 1e-7, "{method} {q} lower {} vs {lo}", iv.lower);
                assert!((iv.upper - hi).abs() < 1e-7, "{method} {q} upper {} vs {hi}", iv.upper);
            }
        }
    }
}

#[test]
fn sampled_points_stay_inside_the_interval() {
    let config = SearchConfig::exhaustive();
    let inst = generate_instance(77).unwrap();
    let skeleton = inst.skeleton();
    let sol = solve(&skeleton, &inst.evidence, Method::SO, &config).unwrap();
    let system = &build_systems(&skeleton, &inst.evidence, Regime::SemiObservational).unwrap()["U"];
    let samples = sample_feasible(&sol.sets["U"], 200, 5).unwrap();
    let mut pinned = BTreeMap::new();
    pinned.insert("U0".to_string(), sol.sets["U0"].points[0].probabilities.clone());
    for q in queries() {
        let iv = sol.bound(&q).unwrap();
        let compiled = CompiledQuery::new(&skeleton, &q).unwrap();
        let f = LinearFunctional::new(compiled.linear_functional("U", &pinned).unwrap());
        for p in &samples {
            assert!(system.is_satisfied_by(p, 1e-7));
            let v = f.evaluate(p);
            assert!(iv.lower - 1e-9 <= v && v <= iv.upper + 1e-9);
        }
    }
}

#[test]
fn every_lp_vertex_is_enumerated() {
    let inst = generate_instance(91).unwrap();
    let skeleton = inst.skeleton();
    let system = &build_systems(&skeleton, &inst.evidence, Regime::SemiCombined).unwrap()["U"];
    let set = exhaustive_search(system, &SearchConfig::exhaustive()).unwrap();
    for s in 0..16 {
        let f = LinearFunctional::indicator(16, &[s]);
        for sense in [Sense::Min, Sense::Max] {
            let opt = lp_bound(system, &f, sense).unwrap();
            let values = set.points.iter().map(|p| p.probabilities[s]);
            let best = match sense {
                Sense::Min => values.fold(f64::INFINITY, f64::min),
                Sense::Max => values.fold(f64::NEG_INFINITY, f64::max),
            };
            assert!((opt - best).abs() < 1e-7, "state {s} {sense:?}");
        }
    }
}

#[test]
fn raw_tables_are_often_inconsistent_for_both_solvers() {
    let config = SearchConfig::exhaustive();
    let mut infeasible = 0;
    for i in 0..10 {
        let inst = generate_raw_instance(instance_seed(3, i)).unwrap();
        let skeleton = inst.skeleton();
        let sol = solve(&skeleton, &inst.evidence, Method::SOE, &config).unwrap();
        let system = &build_systems(&skeleton, &inst.evidence, Regime::SemiCombined).unwrap()["U"];
        let lp = lp_bound(system, &LinearFunctional::new(vec![0.0; 16]), Sense::Min);
        if sol.sets["U"].is_empty() {
            infeasible += 1;
            assert!(matches!(lp, Err(Error::LpInfeasible)), "instance {i}");
        } else {
            assert!(lp.is_ok(), "instance {i}");
        }
    }
    assert!(infeasible > 0);
}
