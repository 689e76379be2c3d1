//! Fixtures shared by the benchmarks under `benches/`.

use dccc_core::harness::{generate_instance, Instance};
use dccc_core::search::build_systems;
use dccc_core::{ConstraintSystem, Regime};

/// A generated binary chain instance.
pub fn instance(seed: u64) -> Instance {
    generate_instance(seed).expect("generated instance")
}

/// The system of the confounded exogenous variable under `regime`.
pub fn confounded_system(inst: &Instance, regime: Regime) -> ConstraintSystem {
    build_systems(&inst.skeleton(), &inst.evidence, regime)
        .expect("systems build")
        .remove("U")
        .expect("confounded variable present")
}
