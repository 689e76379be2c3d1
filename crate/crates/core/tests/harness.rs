use dccc_core::harness::{
    generate_instance, instance_seed, summarize_containment, summarize_lengths, Containment, ExperimentConfig,
    RowStatus, CONTAINMENT_TOL,
};
use dccc_core::search::{build_systems, exhaustive_search};
use dccc_core::{run_experiment, Method, Regime, SearchConfig};

fn small(parallel: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::standard(12, 7);
    cfg.parallel = parallel;
    cfg
}

#[test]
fn serial_and_parallel_outputs_are_identical() {
    let a = run_experiment(&small(true)).unwrap().deterministic_outputs().unwrap();
    let b = run_experiment(&small(false)).unwrap().deterministic_outputs().unwrap();
    assert_eq!(a, b);
}

#[test]
fn summaries_are_recomputable_from_rows() {
    let res = run_experiment(&small(true)).unwrap();
    let labels: Vec<String> = res.config.queries.iter().map(|q| q.label()).collect();
    assert_eq!(summarize_lengths(&res.rows, &res.config.regimes, &labels), res.lengths);
    assert_eq!(summarize_containment(&res.rows, &res.config.regimes, &labels), res.containment);
    for c in &res.containment {
        let mut manual = [0usize; 4];
        for i in 0..12 {
            let (Some(l), Some(r)) = (res.row(i, c.left, &c.query), res.row(i, c.right, &c.query)) else {
                continue;
            };
            let (Some(a), Some(b)) = (l.interval, r.interval) else { continue };
            let k = match Containment::classify(a, b, CONTAINMENT_TOL) {
                Containment::Equal => 0,
                Containment::Subset => 1,
                Containment::Superset => 2,
                Containment::None => 3,
            };
            manual[k] += 1;
        }
        assert_eq!(manual, [c.equal, c.subset, c.superset, c.none]);
        assert_eq!(c.n, manual.iter().sum::<usize>());
    }
    for r in &res.rmse {
        let so = res.row(r.model_index, Method::SO, &r.query).unwrap().interval.unwrap();
        assert_eq!((r.reference_lower, r.reference_upper), so);
    }
}

#[test]
fn rows_cover_every_cell_and_record_the_merge_gap() {
    let res = run_experiment(&small(true)).unwrap();
    assert_eq!(res.rows.len(), 12 * 5 * 3);
    for r in &res.rows {
        let expect_gap = r.regime == Method::MMO && r.query == "PNS(Y1,Y2)";
        assert_eq!(r.status == RowStatus::NotComputable, expect_gap);
        if r.status == RowStatus::Ok {
            assert!(r.length().unwrap() >= 0.0);
            assert!(r.complete);
        }
    }
    assert!(res.rmse.iter().all(|r| !(r.regime == Method::MMO && r.query == "PNS(Y1,Y2)")));
}

#[test]
fn generated_evidence_is_feasible_and_reproducible() {
    for i in 0..20 {
        let seed = instance_seed(7, i);
        let a = generate_instance(seed).unwrap();
        let b = generate_instance(seed).unwrap();
        assert_eq!(
            a.evidence.file().to_json_string().unwrap(),
            b.evidence.file().to_json_string().unwrap()
        );
        let truth = a.model.prior("U").unwrap().to_vec();
        for regime in [Regime::SemiObservational, Regime::SemiCombined, Regime::SemiExperimental] {
            let s = &build_systems(&a.skeleton(), &a.evidence, regime).unwrap()["U"];
            assert!(s.is_satisfied_by(&truth, 1e-9));
            assert!(!exhaustive_search(s, &SearchConfig::exhaustive()).unwrap().is_empty());
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = ExperimentConfig::standard(0, 1);
    assert!(run_experiment(&cfg).is_err());
    cfg.n_models = 1;
    cfg.queries.clear();
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn raw_table_runs_record_infeasible_rows() {
    let mut cfg = ExperimentConfig::standard(10, 3);
    cfg.raw_tables = true;
    let res = run_experiment(&cfg).unwrap();
    assert!(res.rows.iter().any(|r| r.status == RowStatus::Infeasible));
    assert_eq!(res.rows.len(), 10 * 5 * 3);
}
