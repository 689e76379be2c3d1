//! Small reference models used throughout the tests, the benches and the
//! experiment harness.

use std::collections::BTreeMap;

use crate::canonical::{self, DomainChild};
use crate::scm::{PartialScm, StructuralEquation, Variable};

fn child(id: &str, card: usize, parents: &[(&str, usize)]) -> DomainChild {
    DomainChild {
        id: id.to_string(),
        cardinality: card,
        parents: parents.iter().map(|(p, _)| p.to_string()).collect(),
        parent_cards: parents.iter().map(|(_, c)| *c).collect(),
    }
}

fn canonical_equations(domain: &canonical::CanonicalDomain) -> Vec<StructuralEquation> {
    domain
        .children()
        .iter()
        .enumerate()
        .map(|(i, c)| StructuralEquation {
            child: c.id.clone(),
            parents: c
                .parents
                .iter()
                .cloned()
                .chain(std::iter::once(domain.exogenous().to_string()))
                .collect(),
            table: domain.equation_table(i),
        })
        .collect()
}

/// Treatment `T` and survival `S` with exogenous `Q` and `R`.
pub fn treatment_survival() -> PartialScm {
    let vars = vec![
        Variable::endogenous("T", 2),
        Variable::endogenous("S", 2),
        Variable::exogenous("Q", 2),
        Variable::exogenous("R", 4),
    ];
    let eqs = vec![
        StructuralEquation::new("T", &["Q"], vec![0, 1]),
        StructuralEquation::new("S", &["T", "R"], vec![0, 0, 1, 1, 0, 1, 0, 1]),
    ];
    PartialScm::new(vars, eqs, BTreeMap::new()).expect("valid model")
}

/// `X -> Y1 -> Y2`, every endogenous variable with its own exogenous parent.
pub fn markovian_chain() -> PartialScm {
    let x = canonical::markovian_domain("U0", child("X", 2, &[]));
    let y1 = canonical::markovian_domain("U1", child("Y1", 2, &[("X", 2)]));
    let y2 = canonical::markovian_domain("U2", child("Y2", 2, &[("Y1", 2)]));
    let vars = vec![
        Variable::endogenous("X", 2),
        Variable::endogenous("Y1", 2),
        Variable::endogenous("Y2", 2),
        Variable::exogenous("U0", x.size()),
        Variable::exogenous("U1", y1.size()),
        Variable::exogenous("U2", y2.size()),
    ];
    let eqs = [x, y1, y2].iter().flat_map(canonical_equations).collect();
    PartialScm::new(vars, eqs, BTreeMap::new()).expect("valid model")
}

/// `X -> Y1 -> Y2` with `Y1` and `Y2` confounded by a shared exogenous `U`.
pub fn confounded_chain() -> PartialScm {
    confounded_chain_with(2, 2, 2)
}

/// The confounded chain with arbitrary endogenous cardinalities.
pub fn confounded_chain_with(x: usize, y1: usize, y2: usize) -> PartialScm {
    let dx = canonical::markovian_domain("U0", child("X", x, &[]));
    let du = canonical::chain_domain(
        "U",
        child("Y1", y1, &[("X", x)]),
        child("Y2", y2, &[("Y1", y1)]),
    )
    .expect("chain topology");
    let vars = vec![
        Variable::endogenous("X", x),
        Variable::endogenous("Y1", y1),
        Variable::endogenous("Y2", y2),
        Variable::exogenous("U0", dx.size()),
        Variable::exogenous("U", du.size()),
    ];
    let eqs = [dx, du].iter().flat_map(canonical_equations).collect();
    PartialScm::new(vars, eqs, BTreeMap::new()).expect("valid model")
}

pub(crate) fn equations_for(domain: &canonical::CanonicalDomain) -> Vec<StructuralEquation> {
    canonical_equations(domain)
}
