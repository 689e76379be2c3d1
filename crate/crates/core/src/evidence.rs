//! Empirical observational and experimental tables.
//!
//! Observational tables hold `P(targets | context)` with axes ordered
//! context first, then targets, last axis fastest. Experimental tables hold
//! `P(target | do(vars))` with the intervened variables first.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::PartialScm;
use crate::table::ProbTable;

/// Tolerance on the mass of each conditional slice.
pub const SLICE_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationalEntry {
    pub targets: Vec<String>,
    #[serde(default)]
    pub context: Vec<String>,
    pub table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentalEntry {
    pub target: String,
    #[serde(rename = "do", with = "one_or_many")]
    pub do_vars: Vec<String>,
    pub table: Vec<f64>,
}

mod one_or_many {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        One(String),
        Many(Vec<String>),
    }

    pub fn serialize<S: Serializer>(v: &[String], s: S) -> Result<S::Ok, S::Error> {
        match v {
            [one] => one.serialize(s),
            many => many.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::One(s) => vec![s],
            Repr::Many(v) => v,
        })
    }
}

/// On-disk evidence document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceFile {
    #[serde(default)]
    pub observational: Vec<ObservationalEntry>,
    #[serde(default)]
    pub experimental: Vec<ExperimentalEntry>,
}

impl EvidenceFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evidence validated against the cardinalities of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    cards: BTreeMap<String, usize>,
    /// Merged variables of the model and their components.
    composites: BTreeMap<String, Vec<String>>,
    file: EvidenceFile,
}

fn check_slices(values: &[f64], inner: usize, what: &str) -> Result<()> {
    if let Some(x) = values.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidEvidence(format!("{what}: entry {x} is not a probability")));
    }
    for (i, slice) in values.chunks(inner).enumerate() {
        let sum: f64 = slice.iter().sum();
        if (sum - 1.0).abs() > SLICE_SUM_TOL {
            return Err(Error::InvalidEvidence(format!(
                "{what}: slice {i} sums to {sum}"
            )));
        }
    }
    Ok(())
}

fn describe(targets: &[String], context: &[String], interventional: bool) -> String {
    let sep = if interventional { "do(" } else { "" };
    let close = if interventional { ")" } else { "" };
    if context.is_empty() {
        format!("P({})", targets.join(","))
    } else {
        format!("P({} | {sep}{}{close})", targets.join(","), context.join(","))
    }
}

fn same_set(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

impl Evidence {
    /// Validates `file` against `model`: variables must be endogenous with
    /// matching table shapes, and every conditional slice must be normalised.
    pub fn new(model: &PartialScm, file: EvidenceFile) -> Result<Self> {
        let mut cards = BTreeMap::new();
        let mut composites = BTreeMap::new();
        for v in model.variables().iter().filter(|v| !v.is_exogenous()) {
            if v.components.is_empty() {
                cards.insert(v.id.clone(), v.domain_size);
            } else {
                for c in &v.components {
                    cards.insert(c.id.clone(), c.domain_size);
                }
                composites.insert(v.id.clone(), v.components.iter().map(|c| c.id.clone()).collect());
            }
        }
        let card = |id: &String| -> Result<usize> {
            cards
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidEvidence(format!("`{id}` is not an endogenous variable")))
        };
        for e in &file.observational {
            let what = describe(&e.targets, &e.context, false);
            if e.targets.is_empty() {
                return Err(Error::InvalidEvidence(format!("{what}: no targets")));
            }
            let mut all: Vec<&String> = e.context.iter().chain(&e.targets).collect();
            let n = all.len();
            all.sort();
            all.dedup();
            if all.len() != n {
                return Err(Error::InvalidEvidence(format!("{what}: repeated variable")));
            }
            let inner: usize = e.targets.iter().map(card).product::<Result<usize>>()?;
            let outer: usize = e.context.iter().map(card).product::<Result<usize>>()?;
            if e.table.len() != inner * outer {
                return Err(Error::Shape {
                    expected: inner * outer,
                    found: e.table.len(),
                });
            }
            check_slices(&e.table, inner, &what)?;
        }
        for e in &file.experimental {
            let what = describe(std::slice::from_ref(&e.target), &e.do_vars, true);
            if e.do_vars.is_empty() || e.do_vars.contains(&e.target) {
                return Err(Error::InvalidEvidence(format!("{what}: bad intervention set")));
            }
            let inner = card(&e.target)?;
            let outer: usize = e.do_vars.iter().map(card).product::<Result<usize>>()?;
            if e.table.len() != inner * outer {
                return Err(Error::Shape {
                    expected: inner * outer,
                    found: e.table.len(),
                });
            }
            check_slices(&e.table, inner, &what)?;
        }
        Ok(Self {
            cards,
            composites,
            file,
        })
    }

    pub fn load(model: &PartialScm, path: impl AsRef<Path>) -> Result<Self> {
        Self::new(model, EvidenceFile::load(path)?)
    }

    pub fn file(&self) -> &EvidenceFile {
        &self.file
    }

    pub fn into_file(self) -> EvidenceFile {
        self.file
    }

    fn cards_of(&self, vars: &[String]) -> Result<Vec<usize>> {
        vars.iter()
            .map(|v| {
                self.cards
                    .get(v)
                    .copied()
                    .ok_or_else(|| Error::InvalidEvidence(format!("`{v}` is not an endogenous variable")))
            })
            .collect()
    }

    fn as_table(&self, vars: Vec<String>, values: &[f64]) -> Result<ProbTable> {
        let cards = self.cards_of(&vars)?;
        ProbTable::new(vars, cards, values.to_vec())
    }

    fn refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }

    /// `P(targets | context)` flattened context-major, targets innermost.
    ///
    /// Served from a stored table with the same context whose targets cover
    /// the request, or else derived from the joint assembled by the chain
    /// rule over the stored tables.
    pub fn observational(&self, targets: &[String], context: &[String]) -> Result<Vec<f64>> {
        let targets = &self.expand(targets);
        let context = &self.expand(context);
        for e in &self.file.observational {
            if same_set(&e.context, context) && targets.iter().all(|t| e.targets.contains(t)) {
                let vars = e.context.iter().chain(&e.targets).cloned().collect();
                return self
                    .as_table(vars, &e.table)?
                    .conditional(&Self::refs(targets), &Self::refs(context));
            }
        }
        let joint = self.chain_rule_joint();
        let needed = targets.iter().chain(context);
        if needed.clone().all(|v| joint.position(v).is_some()) {
            return joint.conditional(&Self::refs(targets), &Self::refs(context));
        }
        Err(Error::MissingEvidence(describe(targets, context, false)))
    }

    fn chain_rule_joint(&self) -> ProbTable {
        let mut joint = ProbTable::scalar(1.0);
        let mut used = vec![false; self.file.observational.len()];
        loop {
            let next = self.file.observational.iter().enumerate().find(|(i, e)| {
                !used[*i]
                    && e.context.iter().all(|c| joint.position(c).is_some())
                    && e.targets.iter().all(|t| joint.position(t).is_none())
            });
            let Some((i, e)) = next else { break };
            used[i] = true;
            let vars = e.context.iter().chain(&e.targets).cloned().collect();
            match self.as_table(vars, &e.table).and_then(|t| joint.product(&t)) {
                Ok(j) => joint = j,
                Err(_) => break,
            }
        }
        joint
    }

    /// `P(target | do(do_vars))` flattened with intervened variables first.
    pub fn experimental(&self, target: &str, do_vars: &[String]) -> Result<Vec<f64>> {
        if self.composites.contains_key(target) {
            return Err(Error::MissingEvidence(format!("no experimental table for merged `{target}`")));
        }
        let do_vars = &self.expand(do_vars);
        for e in &self.file.experimental {
            if e.target == target && same_set(&e.do_vars, do_vars) {
                let vars = e.do_vars.iter().cloned().chain([e.target.clone()]).collect();
                let t = self.as_table(vars, &e.table)?;
                let order: Vec<&str> = do_vars.iter().map(String::as_str).chain([target]).collect();
                return Ok(t.marginal(&order)?.values);
            }
        }
        Err(Error::MissingEvidence(describe(
            &[target.to_string()],
            do_vars,
            true,
        )))
    }

    /// Replaces merged variables by their components, keeping order.
    fn expand(&self, vars: &[String]) -> Vec<String> {
        vars.iter()
            .flat_map(|v| match self.composites.get(v) {
                Some(parts) => parts.clone(),
                None => vec![v.clone()],
            })
            .collect()
    }

    /// The same tables checked against another model over the same
    /// endogenous variables, such as a merged or split approximation.
    pub fn rebind(&self, model: &PartialScm) -> Result<Self> {
        Self::new(model, self.file.clone())
    }

    pub fn has_observational(&self, targets: &[String], context: &[String]) -> bool {
        self.observational(targets, context).is_ok()
    }

    pub fn has_experimental(&self, target: &str, do_vars: &[String]) -> bool {
        self.experimental(target, do_vars).is_ok()
    }
}
