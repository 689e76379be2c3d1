//! Dense probability tables and exact evaluation of fully specified models.

use crate::error::{Error, Result};
use crate::scm::PartialScm;

/// A dense table over the joint states of `vars`, row-major with the last
/// variable varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    pub vars: Vec<String>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl ProbTable {
    pub fn new(vars: Vec<String>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = cards.iter().product();
        if vars.len() != cards.len() || values.len() != expected {
            return Err(Error::Shape {
                expected,
                found: values.len(),
            });
        }
        Ok(Self { vars, cards, values })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    pub fn position(&self, var: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }

    pub fn index_of(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&s, &c)| acc * c + s)
    }

    pub fn states_of(&self, index: usize) -> Vec<usize> {
        crate::canonical::encode_digits_mixed(index, self.cards.iter().copied())
    }

    pub fn get(&self, states: &[usize]) -> f64 {
        self.values[self.index_of(states)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sums out every variable not listed; the result follows `keep`'s order.
    pub fn marginal(&self, keep: &[&str]) -> Result<Self> {
        let pos = keep
            .iter()
            .map(|v| self.position(v).ok_or_else(|| Error::UnknownVariable(v.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let cards: Vec<usize> = pos.iter().map(|&p| self.cards[p]).collect();
        let mut out = Self {
            vars: keep.iter().map(|v| v.to_string()).collect(),
            values: vec![0.0; cards.iter().product()],
            cards,
        };
        for (i, &v) in self.values.iter().enumerate() {
            let s = self.states_of(i);
            let sub: Vec<usize> = pos.iter().map(|&p| s[p]).collect();
            let j = out.index_of(&sub);
            out.values[j] += v;
        }
        Ok(out)
    }

    /// `P(targets | context)` flattened context-major, targets innermost.
    /// Fails when some context configuration has zero mass.
    pub fn conditional(&self, targets: &[&str], context: &[&str]) -> Result<Vec<f64>> {
        let axes: Vec<&str> = context.iter().chain(targets).copied().collect();
        let joint = self.marginal(&axes)?;
        let inner: usize = targets
            .iter()
            .map(|t| joint.cards[joint.position(t).expect("present")])
            .product();
        let mut values = joint.values;
        for block in values.chunks_mut(inner) {
            let mass: f64 = block.iter().sum();
            if mass <= 0.0 {
                return Err(Error::ZeroProbability);
            }
            block.iter_mut().for_each(|v| *v /= mass);
        }
        Ok(values)
    }

    /// Pointwise product `self(a) * other(b)` over the union of variables.
    /// Shared variables must agree in cardinality.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (v, &c) in other.vars.iter().zip(&other.cards) {
            match self.position(v) {
                Some(p) if self.cards[p] != c => {
                    return Err(Error::InvalidEvidence(format!("`{v}` has inconsistent cardinality")))
                }
                Some(_) => {}
                None => {
                    vars.push(v.clone());
                    cards.push(c);
                }
            }
        }
        let size: usize = cards.iter().product();
        let mut out = Self {
            vars,
            cards,
            values: vec![0.0; size],
        };
        let left: Vec<usize> = (0..self.vars.len()).collect();
        let right: Vec<usize> = other
            .vars
            .iter()
            .map(|v| out.position(v).expect("merged"))
            .collect();
        for i in 0..size {
            let s = out.states_of(i);
            let a: Vec<usize> = left.iter().map(|&p| s[p]).collect();
            let b: Vec<usize> = right.iter().map(|&p| s[p]).collect();
            out.values[i] = self.get(&a) * other.get(&b);
        }
        Ok(out)
    }
}

/// Interventions and observations applied when evaluating a model.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Conditioning {
    pub interventions: Vec<(String, usize)>,
    pub observations: Vec<(String, usize)>,
}

impl Conditioning {
    pub fn intervene(mut self, var: &str, state: usize) -> Self {
        self.interventions.push((var.to_string(), state));
        self
    }

    pub fn observe(mut self, var: &str, state: usize) -> Self {
        self.observations.push((var.to_string(), state));
        self
    }
}

/// Iterates the joint states of a list of domains, last one fastest.
pub(crate) struct Odometer {
    sizes: Vec<usize>,
    state: Vec<usize>,
    done: bool,
}

impl Odometer {
    pub fn new(sizes: Vec<usize>) -> Self {
        let done = sizes.iter().any(|&s| s == 0);
        Self {
            state: vec![0; sizes.len()],
            sizes,
            done,
        }
    }

    pub fn next_state(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        Some(&self.state)
    }

    pub fn advance(&mut self) {
        for i in (0..self.sizes.len()).rev() {
            self.state[i] += 1;
            if self.state[i] < self.sizes[i] {
                return;
            }
            self.state[i] = 0;
        }
        self.done = true;
    }
}

/// Maximum number of joint exogenous states enumerated by exact evaluation.
pub const MAX_JOINT_STATES: u128 = 10_000_000;

pub(crate) fn joint_size(model: &PartialScm) -> Result<usize> {
    let mut total: u128 = 1;
    for id in model.exogenous_ids() {
        total = total.saturating_mul(model.cardinality(id)? as u128);
    }
    if total > MAX_JOINT_STATES {
        return Err(Error::TooLarge {
            what: "joint exogenous enumeration",
            count: total,
            cap: MAX_JOINT_STATES,
        });
    }
    Ok(total as usize)
}

pub(crate) fn intervention_vector(model: &PartialScm, interventions: &[(String, usize)]) -> Result<Vec<Option<usize>>> {
    let mut out = vec![None; model.variables().len()];
    for (var, s) in interventions {
        let v = model.variable(var)?;
        if v.is_exogenous() {
            return Err(Error::NotEndogenous(var.clone()));
        }
        if *s >= v.domain_size {
            return Err(Error::InvalidQuery(format!("`{var}` has no state {s}")));
        }
        out[model.var_index(var).expect("known")] = Some(*s);
    }
    Ok(out)
}

/// Exact distribution of `targets` under `conditioning`, by summing over
/// joint exogenous states weighted by their priors.
pub fn evaluate_full_model(model: &PartialScm, targets: &[&str], conditioning: &Conditioning) -> Result<ProbTable> {
    let exo = model.exogenous_ids();
    let priors = exo
        .iter()
        .map(|id| model.prior(id).ok_or_else(|| Error::MissingPrior(id.to_string())))
        .collect::<Result<Vec<_>>>()?;
    joint_size(model)?;
    let do_vec = intervention_vector(model, &conditioning.interventions)?;
    let observed = conditioning
        .observations
        .iter()
        .map(|(v, s)| {
            model
                .var_index(v)
                .map(|i| (i, *s))
                .ok_or_else(|| Error::UnknownVariable(v.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let target_idx = targets
        .iter()
        .map(|t| model.var_index(t).ok_or_else(|| Error::UnknownVariable(t.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let cards: Vec<usize> = target_idx
        .iter()
        .map(|&i| model.variables()[i].domain_size)
        .collect();
    let mut table = ProbTable {
        vars: targets.iter().map(|t| t.to_string()).collect(),
        values: vec![0.0; cards.iter().product()],
        cards,
    };

    let mut values = vec![0usize; model.variables().len()];
    let mut odo = Odometer::new(exo.iter().map(|id| model.cardinality(id).expect("known")).collect());
    let mut accepted = 0.0;
    while let Some(state) = odo.next_state() {
        let w: f64 = state.iter().zip(&priors).map(|(&s, p)| p[s]).product();
        if w > 0.0 {
            model.simulate_into(state, &do_vec, &mut values);
            if observed.iter().all(|&(i, s)| values[i] == s) {
                accepted += w;
                let states: Vec<usize> = target_idx.iter().map(|&i| values[i]).collect();
                let k = table.index_of(&states);
                table.values[k] += w;
            }
        }
        odo.advance();
    }
    if accepted <= 0.0 {
        return Err(Error::ZeroProbability);
    }
    table.values.iter_mut().for_each(|v| *v /= accepted);
    Ok(table)
}
