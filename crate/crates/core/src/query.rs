//! Counterfactual and interventional queries, and their bounds over
//! solution sets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::canonical::encode_digits_mixed;
use crate::error::{Error, Result};
use crate::scm::PartialScm;
use crate::search::SolutionSet;
use crate::table::{evaluate_full_model, intervention_vector, joint_size, Conditioning, Odometer, ProbTable};

/// Largest number of vertex combinations [`bound_query`] will visit.
pub const MAX_COMBINATIONS: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryKind {
    /// `P(effect_x = y, effect_x' = y')`.
    Pns,
    /// `P(effect = y | do(cause = x))`.
    Interventional,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    pub kind: QueryKind,
    pub cause: String,
    pub effect: String,
    pub x: usize,
    pub x_prime: usize,
    pub y: usize,
    pub y_prime: usize,
}

impl Query {
    pub fn pns(cause: &str, effect: &str) -> Self {
        Self {
            kind: QueryKind::Pns,
            cause: cause.to_string(),
            effect: effect.to_string(),
            x: 1,
            x_prime: 0,
            y: 1,
            y_prime: 0,
        }
    }

    pub fn interventional(cause: &str, x: usize, effect: &str, y: usize) -> Self {
        Self {
            kind: QueryKind::Interventional,
            cause: cause.to_string(),
            effect: effect.to_string(),
            x,
            x_prime: 0,
            y,
            y_prime: 0,
        }
    }

    pub fn with_states(mut self, x: usize, x_prime: usize, y: usize, y_prime: usize) -> Self {
        self.x = x;
        self.x_prime = x_prime;
        self.y = y;
        self.y_prime = y_prime;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.cause == self.effect {
            return Err(Error::InvalidQuery("cause and effect must differ".into()));
        }
        if self.kind == QueryKind::Pns && (self.x == self.x_prime || self.y == self.y_prime) {
            return Err(Error::InvalidQuery("contrasted states must differ".into()));
        }
        Ok(())
    }

    /// Short human label such as `PNS(X,Y1)`.
    pub fn label(&self) -> String {
        match self.kind {
            QueryKind::Pns => format!("PNS({},{})", self.cause, self.effect),
            QueryKind::Interventional => format!(
                "P({}={}|do({}={}))",
                self.effect, self.y, self.cause, self.x
            ),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            QueryKind::Pns => {
                write!(f, "pns:{}:{}", self.cause, self.effect)?;
                if (self.x, self.x_prime, self.y, self.y_prime) != (1, 0, 1, 0) {
                    write!(f, ":{},{},{},{}", self.x, self.x_prime, self.y, self.y_prime)?;
                }
                Ok(())
            }
            QueryKind::Interventional => {
                write!(f, "do:{}:{}:{},{}", self.cause, self.effect, self.x, self.y)
            }
        }
    }
}

impl FromStr for Query {
    type Err = Error;

    /// `pns:<cause>:<effect>[:x,x',y,y']` or `do:<cause>:<effect>[:x,y]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidQuery(format!("cannot parse `{s}`"));
        if !(3..=4).contains(&parts.len()) || parts[1].is_empty() || parts[2].is_empty() {
            return Err(bad());
        }
        let states: Vec<usize> = match parts.get(3) {
            Some(list) => list
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let q = match (parts[0].to_ascii_lowercase().as_str(), states.as_slice()) {
            ("pns", []) => Query::pns(parts[1], parts[2]),
            ("pns", &[x, xp, y, yp]) => Query::pns(parts[1], parts[2]).with_states(x, xp, y, yp),
            ("do", []) => Query::interventional(parts[1], 1, parts[2], 1),
            ("do", &[x, y]) => Query::interventional(parts[1], x, parts[2], y),
            _ => return Err(bad()),
        };
        q.validate()?;
        Ok(q)
    }
}

/// A query reduced to the joint exogenous states on which its event holds,
/// so that its value is a sum of products of exogenous probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledQuery {
    pub query: Query,
    pub exogenous: Vec<String>,
    pub sizes: Vec<usize>,
    pub terms: Vec<Vec<usize>>,
}

/// Where the effect is read: a variable, or one component of a merged one.
fn resolve_effect(model: &PartialScm, effect: &str) -> Result<(usize, Option<(usize, Vec<usize>)>, usize)> {
    if let Some(i) = model.var_index(effect) {
        let v = &model.variables()[i];
        if v.is_exogenous() {
            return Err(Error::NotEndogenous(effect.to_string()));
        }
        return Ok((i, None, v.domain_size));
    }
    for (i, v) in model.variables().iter().enumerate() {
        if let Some(pos) = v.components.iter().position(|c| c.id == effect) {
            let cards = v.components.iter().map(|c| c.domain_size).collect();
            return Ok((i, Some((pos, cards)), v.components[pos].domain_size));
        }
    }
    Err(Error::UnknownVariable(effect.to_string()))
}

fn resolve_cause(model: &PartialScm, cause: &str) -> Result<usize> {
    if model.var_index(cause).is_none() && model.variables().iter().any(|v| v.components.iter().any(|c| c.id == cause)) {
        return Err(Error::NotComputable(format!(
            "`{cause}` is fused into a merged variable and cannot be intervened on alone"
        )));
    }
    let v = model.variable(cause)?;
    if v.is_exogenous() {
        return Err(Error::NotEndogenous(cause.to_string()));
    }
    Ok(v.domain_size)
}

impl CompiledQuery {
    pub fn new(model: &PartialScm, query: &Query) -> Result<Self> {
        query.validate()?;
        let cause_card = resolve_cause(model, &query.cause)?;
        let (effect_var, component, effect_card) = resolve_effect(model, &query.effect)?;
        let pns = query.kind == QueryKind::Pns;
        if query.x >= cause_card || (pns && query.x_prime >= cause_card) {
            return Err(Error::InvalidQuery(format!("`{}` has no such state", query.cause)));
        }
        if query.y >= effect_card || (pns && query.y_prime >= effect_card) {
            return Err(Error::InvalidQuery(format!("`{}` has no such state", query.effect)));
        }
        joint_size(model)?;
        let exogenous: Vec<String> = model.exogenous_ids().iter().map(|s| s.to_string()).collect();
        let sizes: Vec<usize> = exogenous
            .iter()
            .map(|id| model.cardinality(id))
            .collect::<Result<_>>()?;
        let do_x = intervention_vector(model, &[(query.cause.clone(), query.x)])?;
        let do_xp = intervention_vector(model, &[(query.cause.clone(), query.x_prime)])?;
        let read = |values: &[usize]| -> usize {
            let v = values[effect_var];
            match &component {
                Some((pos, cards)) => encode_digits_mixed(v, cards.iter().copied())[*pos],
                None => v,
            }
        };
        let mut values = vec![0; model.variables().len()];
        let mut terms = Vec::new();
        let mut odo = Odometer::new(sizes.clone());
        while let Some(state) = odo.next_state() {
            model.simulate_into(state, &do_x, &mut values);
            let mut hit = read(&values) == query.y;
            if hit && pns {
                model.simulate_into(state, &do_xp, &mut values);
                hit = read(&values) == query.y_prime;
            }
            if hit {
                terms.push(state.to_vec());
            }
            odo.advance();
        }
        Ok(Self {
            query: query.clone(),
            exogenous,
            sizes,
            terms,
        })
    }

    /// Value under one distribution per exogenous variable, in
    /// [`Self::exogenous`] order.
    pub fn value(&self, priors: &[&[f64]]) -> f64 {
        let v: f64 = self
            .terms
            .iter()
            .map(|t| t.iter().zip(priors).map(|(&s, p)| p[s]).product::<f64>())
            .sum();
        v.clamp(0.0, 1.0)
    }

    pub fn value_for(&self, model: &PartialScm) -> Result<f64> {
        let priors = self
            .exogenous
            .iter()
            .map(|id| model.prior(id).ok_or_else(|| Error::MissingPrior(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.value(&priors))
    }

    /// Coefficients of the query as a linear function of the distribution
    /// of `target`, with every other exogenous variable fixed at `pinned`.
    pub fn linear_functional(&self, target: &str, pinned: &BTreeMap<String, Vec<f64>>) -> Result<Vec<f64>> {
        let t = self
            .exogenous
            .iter()
            .position(|e| e == target)
            .ok_or_else(|| Error::NotExogenous(target.to_string()))?;
        let others = self
            .exogenous
            .iter()
            .enumerate()
            .map(|(i, id)| {
                if i == t {
                    Ok(None)
                } else {
                    pinned
                        .get(id)
                        .map(|p| Some(p.as_slice()))
                        .ok_or_else(|| Error::InvalidQuery(format!("`{id}` must be pinned")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut coef = vec![0.0; self.sizes[t]];
        for term in &self.terms {
            let w: f64 = term
                .iter()
                .zip(&others)
                .filter_map(|(&s, p)| p.map(|p| p[s]))
                .product();
            coef[term[t]] += w;
        }
        Ok(coef)
    }
}

/// `PNS` evaluated on a fully specified model by twin-world enumeration.
pub fn evaluate_pns(model: &PartialScm, query: &Query) -> Result<f64> {
    if query.kind != QueryKind::Pns {
        return Err(Error::InvalidQuery("not a PNS query".into()));
    }
    CompiledQuery::new(model, query)?.value_for(model)
}

/// `P(target | do(assignment))` on a fully specified model.
pub fn evaluate_interventional(model: &PartialScm, target: &str, assignment: &[(&str, usize)]) -> Result<ProbTable> {
    let c = Conditioning {
        interventions: assignment.iter().map(|(v, s)| (v.to_string(), *s)).collect(),
        observations: vec![],
    };
    evaluate_full_model(model, &[target], &c)
}

/// Lower and upper bound of a query with the vertex combinations
/// attaining them, one vertex index per exogenous variable.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInterval {
    pub lower: f64,
    pub upper: f64,
    pub exogenous: Vec<String>,
    pub arg_lower: Vec<usize>,
    pub arg_upper: Vec<usize>,
    pub combinations: u64,
}

impl QueryInterval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    /// Whether `self` lies inside `other`, with slack `tol`.
    pub fn within(&self, other: &Self, tol: f64) -> bool {
        self.lower >= other.lower - tol && self.upper <= other.upper + tol
    }
}

/// Bounds `query` by evaluating it at every combination of vertices.
pub fn bound_query(
    solutions: &BTreeMap<String, SolutionSet>,
    skeleton: &PartialScm,
    query: &Query,
) -> Result<QueryInterval> {
    let compiled = CompiledQuery::new(skeleton, query)?;
    bound_compiled(solutions, &compiled)
}

pub fn bound_compiled(solutions: &BTreeMap<String, SolutionSet>, compiled: &CompiledQuery) -> Result<QueryInterval> {
    let mut sets = Vec::with_capacity(compiled.exogenous.len());
    for (id, &size) in compiled.exogenous.iter().zip(&compiled.sizes) {
        let set = solutions
            .get(id)
            .ok_or_else(|| Error::MissingEvidence(format!("no solution set for `{id}`")))?;
        if set.domain_size != size {
            return Err(Error::Shape {
                expected: size,
                found: set.domain_size,
            });
        }
        if set.points.is_empty() {
            return Err(Error::InfeasibleEvidence(id.clone()));
        }
        sets.push(set);
    }
    let count: u128 = sets.iter().map(|s| s.points.len() as u128).product();
    if count > MAX_COMBINATIONS {
        return Err(Error::TooLarge {
            what: "vertex combinations",
            count,
            cap: MAX_COMBINATIONS,
        });
    }
    let radices: Vec<usize> = sets.iter().map(|s| s.points.len()).collect();
    let eval = |k: usize| -> f64 {
        let choice = encode_digits_mixed(k, radices.iter().copied());
        let priors: Vec<&[f64]> = choice
            .iter()
            .zip(&sets)
            .map(|(&c, s)| s.points[c].probabilities.as_slice())
            .collect();
        compiled.value(&priors)
    };
    let pick = |a: (f64, usize), b: (f64, usize), better: fn(f64, f64) -> bool| {
        if better(b.0, a.0) || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    let ((lo, lo_k), (hi, hi_k)) = (0..count as usize)
        .into_par_iter()
        .map(|k| {
            let v = eval(k);
            ((v, k), (v, k))
        })
        .reduce(
            || ((f64::INFINITY, usize::MAX), (f64::NEG_INFINITY, usize::MAX)),
            |(al, ah), (bl, bh)| (pick(al, bl, |x, y| x < y), pick(ah, bh, |x, y| x > y)),
        );
    Ok(QueryInterval {
        lower: lo,
        upper: hi,
        exogenous: compiled.exogenous.clone(),
        arg_lower: encode_digits_mixed(lo_k, radices.iter().copied()),
        arg_upper: encode_digits_mixed(hi_k, radices.iter().copied()),
        combinations: count as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::endogenous_merge;
    use crate::models;
    use crate::system::ExtremePoint;

    #[test]
    fn parse_and_display() {
        let q: Query = "pns:X:Y1".parse().unwrap();
        assert_eq!(q, Query::pns("X", "Y1"));
        assert_eq!(q.to_string(), "pns:X:Y1");
        let q: Query = "pns:X:Y2:0,1,0,1".parse().unwrap();
        assert_eq!((q.x, q.x_prime, q.y, q.y_prime), (0, 1, 0, 1));
        assert_eq!(q.to_string(), "pns:X:Y2:0,1,0,1");
        assert!("pns:X:X".parse::<Query>().is_err());
        assert!("pns:X:Y:1,1,1,0".parse::<Query>().is_err());
        assert!("foo:X:Y".parse::<Query>().is_err());
        let d: Query = "do:X:Y1:0,1".parse().unwrap();
        assert_eq!(d.kind, QueryKind::Interventional);
    }

    fn states_of(c: &CompiledQuery, exo: &str) -> Vec<usize> {
        let i = c.exogenous.iter().position(|e| e == exo).unwrap();
        let mut s: Vec<usize> = c.terms.iter().map(|t| t[i]).collect();
        s.sort();
        s.dedup();
        s
    }

    #[test]
    fn closed_forms_on_the_chain() {
        let m = models::confounded_chain();
        let c = CompiledQuery::new(&m, &Query::pns("X", "Y1")).unwrap();
        assert_eq!(states_of(&c, "U"), vec![4, 5, 6, 7]);
        let c = CompiledQuery::new(&m, &Query::pns("X", "Y2")).unwrap();
        assert_eq!(states_of(&c, "U"), vec![5, 10]);
        let c = CompiledQuery::new(&m, &Query::pns("Y1", "Y2")).unwrap();
        assert_eq!(states_of(&c, "U"), vec![1, 5, 9, 13]);
    }

    #[test]
    fn closed_forms_on_the_merged_model() {
        let (mm, _) = endogenous_merge(&models::confounded_chain(), "U").unwrap();
        let c = CompiledQuery::new(&mm, &Query::pns("X", "Y1")).unwrap();
        assert_eq!(states_of(&c, "U*"), vec![2, 3, 6, 7]);
        let c = CompiledQuery::new(&mm, &Query::pns("X", "Y2")).unwrap();
        assert_eq!(states_of(&c, "U*"), vec![1, 3, 9, 11]);
        assert!(matches!(
            CompiledQuery::new(&mm, &Query::pns("Y1", "Y2")),
            Err(Error::NotComputable(_))
        ));
    }

    #[test]
    fn uniform_survival_is_one_half() {
        let mut priors = BTreeMap::new();
        priors.insert("Q".to_string(), vec![0.5, 0.5]);
        priors.insert("R".to_string(), vec![0.25; 4]);
        let m = models::treatment_survival().with_priors(priors).unwrap();
        for t in 0..2 {
            let p = evaluate_interventional(&m, "S", &[("T", t)]).unwrap();
            assert!(p.values.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn point_mass_u5_forces_identity() {
        let m = models::confounded_chain();
        let mut priors = BTreeMap::new();
        priors.insert("U0".to_string(), vec![0.5, 0.5]);
        let mut u = vec![0.0; 16];
        u[5] = 1.0;
        priors.insert("U".to_string(), u);
        let m = m.with_priors(priors).unwrap();
        let p = evaluate_interventional(&m, "Y2", &[("Y1", 1)]).unwrap();
        assert_eq!(p.values[1], 1.0);
    }

    #[test]
    fn singletons_give_degenerate_interval() {
        let m = models::treatment_survival();
        let mut sets = BTreeMap::new();
        sets.insert(
            "Q".to_string(),
            SolutionSet::singleton(ExtremePoint::new("Q", vec![0.3, 0.7]), vec![0, 1]),
        );
        sets.insert(
            "R".to_string(),
            SolutionSet::singleton(ExtremePoint::new("R", vec![0.1, 0.2, 0.3, 0.4]), (0..4).collect()),
        );
        let i = bound_query(&sets, &m, &Query::pns("T", "S")).unwrap();
        assert_eq!(i.lower, i.upper);
        assert!((i.lower - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_infeasible() {
        let m = models::treatment_survival();
        let mut sets = BTreeMap::new();
        sets.insert(
            "Q".to_string(),
            SolutionSet::singleton(ExtremePoint::new("Q", vec![0.3, 0.7]), vec![0, 1]),
        );
        let mut r = SolutionSet::singleton(ExtremePoint::new("R", vec![0.25; 4]), (0..4).collect());
        r.points.clear();
        sets.insert("R".to_string(), r);
        assert!(matches!(
            bound_query(&sets, &m, &Query::pns("T", "S")),
            Err(Error::InfeasibleEvidence(_))
        ));
    }
}
