#![allow(dead_code)]

use dccc_core::ConstraintSystem;

pub fn parse(rows: &[&str]) -> Vec<Vec<u8>> {
    rows.iter()
        .map(|r| r.split_whitespace().map(|d| d.parse().unwrap()).collect())
        .collect()
}

pub fn assert_matrix(system: &ConstraintSystem, expected: &[&str]) {
    let expected = parse(expected);
    assert_eq!(system.rows(), expected.len(), "row count of {}", system.exogenous());
    for (r, want) in expected.iter().enumerate() {
        assert_eq!(system.row(r), want.as_slice(), "row {r} ({})", system.row_labels()[r]);
    }
}

pub const U1_TABLE: [&str; 4] = ["1 1 0 0", "0 0 1 1", "1 0 1 0", "0 1 0 1"];

pub const Y1_GIVEN_X: [&str; 4] = [
    "1 1 1 1 1 1 1 1 0 0 0 0 0 0 0 0",
    "0 0 0 0 0 0 0 0 1 1 1 1 1 1 1 1",
    "1 1 1 1 0 0 0 0 1 1 1 1 0 0 0 0",
    "0 0 0 0 1 1 1 1 0 0 0 0 1 1 1 1",
];

pub const Y2_GIVEN_DO_Y1: [&str; 4] = [
    "1 1 0 0 1 1 0 0 1 1 0 0 1 1 0 0",
    "0 0 1 1 0 0 1 1 0 0 1 1 0 0 1 1",
    "1 0 1 0 1 0 1 0 1 0 1 0 1 0 1 0",
    "0 1 0 1 0 1 0 1 0 1 0 1 0 1 0 1",
];

pub const JOINT_GIVEN_X: [&str; 8] = [
    "1 1 0 0 1 1 0 0 0 0 0 0 0 0 0 0",
    "0 0 1 1 0 0 1 1 0 0 0 0 0 0 0 0",
    "0 0 0 0 0 0 0 0 1 0 1 0 1 0 1 0",
    "0 0 0 0 0 0 0 0 0 1 0 1 0 1 0 1",
    "1 1 0 0 0 0 0 0 1 1 0 0 0 0 0 0",
    "0 0 1 1 0 0 0 0 0 0 1 1 0 0 0 0",
    "0 0 0 0 1 0 1 0 0 0 0 0 1 0 1 0",
    "0 0 0 0 0 1 0 1 0 0 0 0 0 1 0 1",
];

pub const MERGED: [&str; 8] = [
    "1 1 1 1 0 0 0 0 0 0 0 0 0 0 0 0",
    "0 0 0 0 1 1 1 1 0 0 0 0 0 0 0 0",
    "0 0 0 0 0 0 0 0 1 1 1 1 0 0 0 0",
    "0 0 0 0 0 0 0 0 0 0 0 0 1 1 1 1",
    "1 0 0 0 1 0 0 0 1 0 0 0 1 0 0 0",
    "0 1 0 0 0 1 0 0 0 1 0 0 0 1 0 0",
    "0 0 1 0 0 0 1 0 0 0 1 0 0 0 1 0",
    "0 0 0 1 0 0 0 1 0 0 0 1 0 0 0 1",
];

/// Whether `system` has exactly the rows of `expected`, in order.
pub fn matrix_equals(system: &ConstraintSystem, expected: &[&str]) -> bool {
    let expected = parse(expected);
    system.rows() == expected.len() && expected.iter().enumerate().all(|(r, want)| system.row(r) == want.as_slice())
}
