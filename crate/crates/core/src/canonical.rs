//! Canonical exogenous domains.
//!
//! A canonical domain enumerates every combination of deterministic
//! mechanisms an exogenous variable can select for its endogenous children.
//! For a single child with `q` states and `p` parent configurations, state
//! `i` selects the function whose value at configuration `j` is digit `j` of
//! the `p`-digit base-`q` encoding of `i` (most significant digit first).
//! For a two-child chain the states enumerate the product of both children's
//! function sets, first child's function varying slowest.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scm::PartialScm;

/// One endogenous child of an exogenous variable, as seen from its domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainChild {
    pub id: String,
    pub cardinality: usize,
    /// Endogenous parents, in the order of the model's equation.
    pub parents: Vec<String>,
    pub parent_cards: Vec<usize>,
}

impl DomainChild {
    pub fn configurations(&self) -> usize {
        self.parent_cards.iter().product()
    }
}

/// The states of one exogenous variable together with the mechanism each
/// state selects for every child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalDomain {
    exogenous: String,
    children: Vec<DomainChild>,
    /// Endogenous parents of the children that are not children themselves.
    external: Vec<(String, usize)>,
    /// `mechanisms[state][child][parent configuration]`.
    mechanisms: Vec<Vec<Vec<usize>>>,
    labels: Vec<usize>,
}

/// Digits of `index` in base `base`, `width` digits, most significant first.
pub fn encode_digits(mut index: usize, base: usize, width: usize) -> Vec<usize> {
    let mut digits = vec![0; width];
    for d in digits.iter_mut().rev() {
        *d = index % base;
        index /= base;
    }
    digits
}

pub fn decode_digits(digits: &[usize], base: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * base + d)
}

fn function_count(child: &DomainChild) -> Result<usize> {
    let p = u32::try_from(child.configurations())
        .map_err(|_| Error::Unsupported(format!("too many parent configurations for `{}`", child.id)))?;
    child
        .cardinality
        .checked_pow(p)
        .ok_or_else(|| Error::Unsupported(format!("canonical domain of `{}` overflows", child.id)))
}

fn external_of(children: &[DomainChild]) -> Vec<(String, usize)> {
    let mut external: Vec<(String, usize)> = Vec::new();
    for c in children {
        for (p, &card) in c.parents.iter().zip(&c.parent_cards) {
            if children.iter().all(|o| &o.id != p) && external.iter().all(|(e, _)| e != p) {
                external.push((p.clone(), card));
            }
        }
    }
    external
}

/// Canonical domain of an exogenous variable with a single child.
pub fn markovian_domain(exogenous: &str, child: DomainChild) -> CanonicalDomain {
    let p = child.configurations();
    let q = child.cardinality;
    let size = function_count(&child).expect("domain size fits in usize");
    let mechanisms = (0..size).map(|i| vec![encode_digits(i, q, p)]).collect();
    let children = vec![child];
    CanonicalDomain {
        exogenous: exogenous.to_string(),
        external: external_of(&children),
        children,
        mechanisms,
        labels: (0..size).collect(),
    }
}

/// Canonical domain of an exogenous variable shared by `first` and `second`,
/// where `second`'s only endogenous parent is `first`.
pub fn chain_domain(exogenous: &str, first: DomainChild, second: DomainChild) -> Result<CanonicalDomain> {
    if second.parents != [first.id.clone()] {
        return Err(Error::Unsupported(format!(
            "`{}` must have `{}` as its only endogenous parent",
            second.id, first.id
        )));
    }
    if first.parents.contains(&second.id) {
        return Err(Error::InvalidModel("chain children form a cycle".into()));
    }
    let n1 = function_count(&first)?;
    let n2 = function_count(&second)?;
    let size = n1
        .checked_mul(n2)
        .ok_or_else(|| Error::Unsupported("chain domain overflows".into()))?;
    let (p1, q1) = (first.configurations(), first.cardinality);
    let (p2, q2) = (second.configurations(), second.cardinality);
    let mechanisms = (0..size)
        .map(|i| vec![encode_digits(i / n2, q1, p1), encode_digits(i % n2, q2, p2)])
        .collect();
    let children = vec![first, second];
    Ok(CanonicalDomain {
        exogenous: exogenous.to_string(),
        external: external_of(&children),
        children,
        mechanisms,
        labels: (0..size).collect(),
    })
}

fn domain_child(model: &PartialScm, id: &str) -> Result<DomainChild> {
    let parents = model.endogenous_parents(id)?.to_vec();
    let parent_cards = parents
        .iter()
        .map(|p| model.cardinality(p))
        .collect::<Result<_>>()?;
    Ok(DomainChild {
        id: id.to_string(),
        cardinality: model.cardinality(id)?,
        parents,
        parent_cards,
    })
}

/// Canonical domain for the exogenous parent of a Markovian `child`.
pub fn build_canonical_markovian(model: &PartialScm, child: &str) -> Result<CanonicalDomain> {
    let exo = model.exogenous_parent(child)?;
    let siblings = model.children_of(exo)?;
    if siblings.len() != 1 {
        return Err(Error::Topology {
            exogenous: exo.to_string(),
            children: siblings.len(),
            expected: "a Markovian exogenous variable has exactly one child",
        });
    }
    Ok(markovian_domain(exo, domain_child(model, child)?))
}

/// Canonical domain for the exogenous variable shared by a two-child chain.
pub fn build_canonical_semimarkovian_chain(
    model: &PartialScm,
    children: [&str; 2],
) -> Result<CanonicalDomain> {
    let [first, second] = children;
    let exo = model.exogenous_parent(first)?;
    if model.exogenous_parent(second)? != exo {
        return Err(Error::Unsupported(format!(
            "`{first}` and `{second}` do not share an exogenous parent"
        )));
    }
    let all = model.children_of(exo)?;
    if all.len() != 2 {
        return Err(Error::Topology {
            exogenous: exo.to_string(),
            children: all.len(),
            expected: "the chain builder needs exactly two children",
        });
    }
    chain_domain(exo, domain_child(model, first)?, domain_child(model, second)?)
}

impl CanonicalDomain {
    /// Reads the domain of `exogenous` off the explicit equation tables of
    /// `model`, including any states removed by reductions.
    pub fn from_model(model: &PartialScm, exogenous: &str) -> Result<Self> {
        let ids = model.children_of(exogenous)?;
        let size = model.cardinality(exogenous)?;
        let children = ids
            .iter()
            .map(|id| domain_child(model, id))
            .collect::<Result<Vec<_>>>()?;
        let tables: Vec<&[usize]> = ids
            .iter()
            .map(|id| model.equation(id).expect("endogenous").table.as_slice())
            .collect();
        let mechanisms = (0..size)
            .map(|u| {
                children
                    .iter()
                    .zip(&tables)
                    .map(|(c, t)| (0..c.configurations()).map(|cfg| t[cfg * size + u]).collect())
                    .collect()
            })
            .collect();
        Ok(Self {
            exogenous: exogenous.to_string(),
            external: external_of(&children),
            children,
            mechanisms,
            labels: model.state_labels(exogenous)?,
        })
    }

    pub fn exogenous(&self) -> &str {
        &self.exogenous
    }

    pub fn size(&self) -> usize {
        self.mechanisms.len()
    }

    pub fn children(&self) -> &[DomainChild] {
        &self.children
    }

    pub fn child_position(&self, id: &str) -> Option<usize> {
        self.children.iter().position(|c| c.id == id)
    }

    pub fn external(&self) -> &[(String, usize)] {
        &self.external
    }

    pub fn external_configurations(&self) -> usize {
        self.external.iter().map(|(_, c)| c).product()
    }

    /// Original canonical index of each state.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Table of the function state `state` selects for child `child`, over
    /// that child's parent configurations.
    pub fn mechanism(&self, state: usize, child: usize) -> &[usize] {
        &self.mechanisms[state][child]
    }

    /// Explicit equation table for child `child`: row-major over its
    /// endogenous parents, then this domain's states.
    pub fn equation_table(&self, child: usize) -> Vec<usize> {
        let size = self.size();
        let configs = self.children[child].configurations();
        let mut table = vec![0; configs * size];
        for (u, m) in self.mechanisms.iter().enumerate() {
            for cfg in 0..configs {
                table[cfg * size + u] = m[child][cfg];
            }
        }
        table
    }

    /// Child values under `state` given values for some variables. Assigned
    /// children are treated as intervened. `None` marks children whose value
    /// depends on an unassigned variable.
    pub fn respond(&self, state: usize, assigned: &HashMap<&str, usize>) -> Vec<Option<usize>> {
        let mut values: Vec<Option<usize>> = Vec::with_capacity(self.children.len());
        for (ci, child) in self.children.iter().enumerate() {
            if let Some(&v) = assigned.get(child.id.as_str()) {
                values.push(Some(v));
                continue;
            }
            let mut cfg = Some(0usize);
            for (p, &card) in child.parents.iter().zip(&child.parent_cards) {
                let v = match self.child_position(p) {
                    Some(pi) if pi < ci => values[pi],
                    Some(_) => None,
                    None => assigned.get(p.as_str()).copied(),
                };
                cfg = cfg.zip(v).map(|(c, v)| c * card + v);
            }
            values.push(cfg.map(|c| self.mechanisms[state][ci][c]));
        }
        values
    }

    /// Joint child response to external configuration `ext_cfg`, encoded as
    /// a single index with the first child most significant.
    pub fn joint_response(&self, state: usize, ext_cfg: usize) -> usize {
        let digits = encode_digits_mixed(ext_cfg, self.external.iter().map(|(_, c)| *c));
        let assigned: HashMap<&str, usize> = self
            .external
            .iter()
            .map(|(id, _)| id.as_str())
            .zip(digits)
            .collect();
        self.respond(state, &assigned)
            .into_iter()
            .zip(&self.children)
            .fold(0, |acc, (v, c)| acc * c.cardinality + v.expect("all externals assigned"))
    }

    /// For a two-child chain, the composed mechanism of the second child as a
    /// function of the first child's external parents.
    pub fn composed(&self, state: usize) -> Result<Vec<usize>> {
        if self.children.len() != 2 {
            return Err(Error::Unsupported("composition needs a two-child chain".into()));
        }
        let f1 = &self.mechanisms[state][0];
        let f2 = &self.mechanisms[state][1];
        Ok(f1.iter().map(|&y1| f2[y1]).collect())
    }

    /// Keeps only the listed state positions.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self {
            exogenous: self.exogenous.clone(),
            children: self.children.clone(),
            external: self.external.clone(),
            mechanisms: keep.iter().map(|&i| self.mechanisms[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Mixed-radix digits of `index`, most significant first.
pub(crate) fn encode_digits_mixed(mut index: usize, radices: impl DoubleEndedIterator<Item = usize> + ExactSizeIterator) -> Vec<usize> {
    let mut digits = vec![0; radices.len()];
    for (d, r) in digits.iter_mut().rev().zip(radices.rev()) {
        *d = index % r;
        index /= r;
    }
    digits
}
