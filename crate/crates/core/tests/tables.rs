use dccc_core::approx::{build_state_mapping, endogenous_merge};
use dccc_core::canonical::build_canonical_semimarkovian_chain;
use dccc_core::harness::generate_instance;
use dccc_core::models;
use dccc_core::search::{build_systems, group_indistinguishable, Regime};
use dccc_core::{CanonicalDomain, ConstraintSystem};

mod common;
use common::*;

fn chain_systems(regime: Regime) -> std::collections::BTreeMap<String, ConstraintSystem> {
    let inst = generate_instance(5).unwrap();
    build_systems(&inst.skeleton(), &inst.evidence, regime).unwrap()
}

#[test]
fn markovian_chain_tables_for_each_child() {
    let inst = generate_instance(5).unwrap();
    let m = models::markovian_chain();
    let ev = inst.evidence.rebind(&m).unwrap();
    let systems = build_systems(&m, &ev, Regime::Markovian).unwrap();
    assert_matrix(&systems["U1"], &U1_TABLE);
    assert_matrix(&systems["U2"], &U1_TABLE);
    assert_matrix(&systems["U0"], &["1 0", "0 1"]);
}

#[test]
fn confounded_domain_definition_table() {
    let s = &chain_systems(Regime::SemiExperimental)["U"];
    let mut rows = Y1_GIVEN_X.to_vec();
    rows.extend(Y2_GIVEN_DO_Y1);
    assert_matrix(s, &rows);
}

#[test]
fn observational_joint_table() {
    assert_matrix(&chain_systems(Regime::SemiObservational)["U"], &JOINT_GIVEN_X);
}

#[test]
fn combined_table() {
    let mut rows = JOINT_GIVEN_X.to_vec();
    rows.extend(Y2_GIVEN_DO_Y1);
    assert_matrix(&chain_systems(Regime::SemiCombined)["U"], &rows);
}

#[test]
fn merged_domain_table() {
    let inst = generate_instance(5).unwrap();
    let (merged, plan) = endogenous_merge(&inst.skeleton(), "U").unwrap();
    let ev = inst.evidence.rebind(&merged).unwrap();
    let systems = build_systems(&merged, &ev, Regime::Markovian).unwrap();
    assert_matrix(&systems[&plan.merged_exogenous], &MERGED);
}

#[test]
fn forbidden_merged_states() {
    let m = models::confounded_chain();
    let (merged, plan) = endogenous_merge(&m, "U").unwrap();
    let semi = build_canonical_semimarkovian_chain(&m, ["Y1", "Y2"]).unwrap();
    let fused = CanonicalDomain::from_model(&merged, &plan.merged_exogenous).unwrap();
    let mapping = build_state_mapping(&semi, &fused).unwrap();
    assert_eq!(mapping.forbidden, vec![1, 4, 11, 14]);
}

#[test]
fn indistinguishable_groups() {
    let groups = group_indistinguishable(&chain_systems(Regime::SemiObservational)["U"]);
    let nontrivial: Vec<Vec<usize>> = groups.into_iter().filter(|g| g.len() > 1).collect();
    assert_eq!(nontrivial, vec![vec![0, 1], vec![2, 3], vec![12, 14], vec![13, 15]]);
    let combined = group_indistinguishable(&chain_systems(Regime::SemiCombined)["U"]);
    assert!(combined.iter().all(|g| g.len() == 1));
}

#[test]
fn treatment_survival_response_table() {
    let m = models::treatment_survival();
    let d = CanonicalDomain::from_model(&m, "R").unwrap();
    let table: Vec<Vec<usize>> = (0..4).map(|s| d.mechanism(s, 0).to_vec()).collect();
    assert_eq!(table, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
}
