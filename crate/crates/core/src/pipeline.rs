//! Solving a model under one of the supported methods, and bounding
//! queries on the result.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::approx::{build_state_mapping, endogenous_merge, exogenous_split, map_extreme_points, solve_merged};
use crate::canonical::CanonicalDomain;
use crate::error::{Error, Result};
use crate::evidence::Evidence;
use crate::oracle::{lp_interval, LinearFunctional};
use crate::query::{bound_query, CompiledQuery, Query, QueryInterval};
use crate::scm::PartialScm;
use crate::search::{build_systems, run_search, solve_credal, Regime, SearchConfig, SolutionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Direct search with the observational joint.
    SO,
    /// Direct search with the observational joint and `P(Y2 | do(Y1))`.
    SOE,
    /// Direct search with experimental tables.
    SE,
    /// Endogenous merge solved as a Markovian model.
    MMO,
    /// Exogenous split solved as a Markovian model.
    MSO,
    /// Endogenous merge with forbidden states removed, vertices mapped back.
    MergeExact,
    /// Every exogenous variable already has a single child.
    Markov,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::SO,
        Method::SOE,
        Method::SE,
        Method::MMO,
        Method::MSO,
        Method::MergeExact,
        Method::Markov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SO => "s-o",
            Method::SOE => "s-oe",
            Method::SE => "s-e",
            Method::MMO => "mm-o",
            Method::MSO => "ms-o",
            Method::MergeExact => "mm-exact",
            Method::Markov => "markov",
        }
    }

    /// Display label used in reports, such as `S-OE`.
    pub fn label(self) -> String {
        self.name().to_ascii_uppercase()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == lower || (lower == "markovian" && *m == Method::Markov))
            .ok_or_else(|| Error::Config(format!("unknown regime `{s}`")))
    }
}

/// Solution sets together with the model they describe.
#[derive(Debug, Clone)]
pub struct Solution {
    pub method: Method,
    /// The model queries are bounded on, without priors.
    pub skeleton: PartialScm,
    pub sets: BTreeMap<String, SolutionSet>,
}

impl Solution {
    pub fn complete(&self) -> bool {
        self.sets.values().all(|s| s.complete)
    }

    pub fn vertex_count(&self) -> usize {
        self.sets.values().map(|s| s.points.len()).sum()
    }

    pub fn bound(&self, query: &Query) -> Result<QueryInterval> {
        bound_query(&self.sets, &self.skeleton, query)
    }
}

/// The exogenous variable with more than one child, if any.
pub fn confounder(model: &PartialScm) -> Result<Option<String>> {
    let mut found = None;
    for id in model.exogenous_ids() {
        if model.children_of(id)?.len() > 1 {
            if found.is_some() {
                return Err(Error::Unsupported("more than one confounder".into()));
            }
            found = Some(id.to_string());
        }
    }
    Ok(found)
}

fn require_confounder(model: &PartialScm, method: Method) -> Result<String> {
    confounder(model)?.ok_or_else(|| Error::RegimeMismatch {
        regime: method.to_string(),
        reason: "the model has no confounded exogenous variable".into(),
    })
}

/// Solves `model` under `method`.
pub fn solve(model: &PartialScm, evidence: &Evidence, method: Method, config: &SearchConfig) -> Result<Solution> {
    let direct = |regime: Regime| -> Result<Solution> {
        Ok(Solution {
            method,
            skeleton: model.without_priors(),
            sets: solve_credal(model, evidence, regime, config)?,
        })
    };
    match method {
        Method::SO => direct(Regime::SemiObservational),
        Method::SOE => direct(Regime::SemiCombined),
        Method::SE => direct(Regime::SemiExperimental),
        Method::Markov => direct(Regime::Markovian),
        Method::MMO => {
            let u = require_confounder(model, method)?;
            let (merged, _) = endogenous_merge(model, &u)?;
            let ev = evidence.rebind(&merged)?;
            Ok(Solution {
                method,
                sets: solve_credal(&merged, &ev, Regime::Markovian, config)?,
                skeleton: merged.without_priors(),
            })
        }
        Method::MSO => {
            let u = require_confounder(model, method)?;
            let split = exogenous_split(model, &u)?;
            let ev = evidence.rebind(&split)?;
            Ok(Solution {
                method,
                sets: solve_credal(&split, &ev, Regime::Markovian, config)?,
                skeleton: split.without_priors(),
            })
        }
        Method::MergeExact => {
            let u = require_confounder(model, method)?;
            let (merged, plan) = endogenous_merge(model, &u)?;
            if plan.replaced.len() != 1 {
                return Err(Error::Unsupported(
                    "mapping back is implemented for a single replaced exogenous variable".into(),
                ));
            }
            let ev = evidence.rebind(&merged)?;
            let semi = CanonicalDomain::from_model(model, &u)?;
            let merged_domain = CanonicalDomain::from_model(&merged, &plan.merged_exogenous)?;
            let mapping = build_state_mapping(&semi, &merged_domain)?;
            let mut sets = solve_credal(&merged, &ev, Regime::Markovian, config)?;
            sets.remove(&plan.merged_exogenous);
            let found = solve_merged(&merged, &plan, &ev, &mapping, true, config)?;
            let mut mapped = map_extreme_points(&found, &mapping)?;
            mapped.labels = semi.labels().to_vec();
            sets.insert(u, mapped);
            Ok(Solution {
                method,
                skeleton: model.without_priors(),
                sets,
            })
        }
    }
}

impl Method {
    /// The search regime of a direct method.
    pub fn regime(self) -> Option<Regime> {
        match self {
            Method::SO => Some(Regime::SemiObservational),
            Method::SOE => Some(Regime::SemiCombined),
            Method::SE => Some(Regime::SemiExperimental),
            Method::Markov => Some(Regime::Markovian),
            Method::MMO | Method::MSO | Method::MergeExact => None,
        }
    }
}

/// Bounds `query` with the exact LP over the constraint polytope instead of
/// vertex enumeration.
///
/// Exogenous variables whose set is a single point are pinned at it. At most
/// one variable may have a non-trivial set, since the query is only linear
/// in one distribution at a time.
pub fn lp_query_interval(
    model: &PartialScm,
    evidence: &Evidence,
    method: Method,
    query: &Query,
    config: &SearchConfig,
) -> Result<(f64, f64)> {
    let regime = method
        .regime()
        .ok_or_else(|| Error::Unsupported(format!("the LP oracle runs on direct regimes, not `{method}`")))?;
    let skeleton = model.without_priors();
    let compiled = CompiledQuery::new(&skeleton, query)?;
    let systems = build_systems(&skeleton, evidence, regime)?;
    let mut pinned = BTreeMap::new();
    let mut free = Vec::new();
    for (id, system) in &systems {
        let set = run_search(system, config)?;
        match set.points.as_slice() {
            [] => return Err(Error::InfeasibleEvidence(format!("no distribution of `{id}` fits the evidence"))),
            [only] => {
                pinned.insert(id.clone(), only.probabilities.clone());
            }
            _ => free.push(id.clone()),
        }
    }
    let target = match free.as_slice() {
        [] => compiled
            .exogenous
            .last()
            .cloned()
            .ok_or_else(|| Error::InvalidModel("no exogenous variables".into()))?,
        [one] => one.clone(),
        _ => {
            return Err(Error::Unsupported(format!(
                "the query is not linear: {} exogenous sets are not singletons",
                free.len()
            )))
        }
    };
    let coefficients = compiled.linear_functional(&target, &pinned)?;
    let system = systems
        .get(&target)
        .ok_or_else(|| Error::Internal(format!("no system for `{target}`")))?;
    let (lo, hi) = lp_interval(system, &LinearFunctional::new(coefficients))?;
    Ok((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("x".parse::<Method>().is_err());
        assert_eq!(Method::SOE.label(), "S-OE");
    }
}
