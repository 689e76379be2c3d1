use dccc_core::approx::{endogenous_merge, exogenous_split};
use dccc_core::harness::{generate_instance, instance_seed};
use dccc_core::oracle::LinearFunctional;
use dccc_core::{solve, Error, Method, Query, SearchConfig};

#[test]
fn mapped_merge_recovers_the_observational_vertices() {
    for i in 0..20 {
        let inst = generate_instance(instance_seed(31, i)).unwrap();
        let skeleton = inst.skeleton();
        let config = SearchConfig::exhaustive();
        let direct = solve(&skeleton, &inst.evidence, Method::SO, &config).unwrap();
        let mapped = solve(&skeleton, &inst.evidence, Method::MergeExact, &config).unwrap();
        let a = &direct.sets["U"].points;
        let b = &mapped.sets["U"].points;
        assert_eq!(a.len(), b.len(), "instance {i}");
        for p in a {
            assert!(b.iter().any(|q| p.distance(q) < 1e-9), "instance {i}");
        }
        assert!(mapped.sets["U"].complete);
        assert_eq!(mapped.sets["U0"].points.len(), 1);
    }
}

#[test]
fn merged_pns_closed_forms() {
    let forms = [(Query::pns("X", "Y1"), [2, 3, 6, 7]), (Query::pns("X", "Y2"), [1, 3, 9, 11])];
    for i in 0..20 {
        let inst = generate_instance(instance_seed(47, i)).unwrap();
        let sol = solve(&inst.skeleton(), &inst.evidence, Method::MMO, &SearchConfig::exhaustive()).unwrap();
        let set = &sol.sets["U*"];
        for (q, states) in &forms {
            let f = LinearFunctional::indicator(16, states);
            let values: Vec<f64> = set.points.iter().map(|p| f.evaluate(&p.probabilities)).collect();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let iv = sol.bound(q).unwrap();
            assert!((iv.lower - lo).abs() < 1e-9 && (iv.upper - hi).abs() < 1e-9, "{q} instance {i}");
        }
        assert!(matches!(sol.bound(&Query::pns("Y1", "Y2")), Err(Error::NotComputable(_))));
    }
}

#[test]
fn merged_interval_contains_the_direct_one() {
    for i in 0..20 {
        let inst = generate_instance(instance_seed(53, i)).unwrap();
        let config = SearchConfig::exhaustive();
        let so = solve(&inst.skeleton(), &inst.evidence, Method::SO, &config).unwrap();
        let mm = solve(&inst.skeleton(), &inst.evidence, Method::MMO, &config).unwrap();
        for q in [Query::pns("X", "Y1"), Query::pns("X", "Y2")] {
            assert!(so.bound(&q).unwrap().within(&mm.bound(&q).unwrap(), 1e-9), "{q} instance {i}");
        }
    }
}

#[test]
fn split_model_is_markovian() {
    let inst = generate_instance(2).unwrap();
    let split = exogenous_split(&inst.skeleton(), "U").unwrap();
    for id in split.exogenous_ids() {
        assert_eq!(split.children_of(id).unwrap().len(), 1);
    }
    assert_eq!(split.cardinality("U_Y1").unwrap(), 4);
    assert_eq!(split.cardinality("U_Y2").unwrap(), 4);
    let sol = solve(&inst.skeleton(), &inst.evidence, Method::MSO, &SearchConfig::exhaustive()).unwrap();
    for q in [Query::pns("X", "Y1"), Query::pns("X", "Y2"), Query::pns("Y1", "Y2")] {
        let iv = sol.bound(&q).unwrap();
        assert!(0.0 <= iv.lower && iv.lower <= iv.upper && iv.upper <= 1.0);
    }
}

#[test]
fn merge_needs_a_confounder() {
    let m = dccc_core::models::markovian_chain();
    assert!(matches!(endogenous_merge(&m, "U1"), Err(Error::Topology { .. })));
}
