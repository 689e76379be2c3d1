//! Discrete structural causal models.
//!
//! A [`PartialScm`] holds endogenous and exogenous variables, one
//! deterministic structural equation per endogenous variable, and optional
//! priors over the exogenous variables. Every endogenous variable has exactly
//! one exogenous parent, listed last among its parents.
//!
//! Joint parent configurations are indexed row-major with the last-listed
//! parent varying fastest, so the exogenous state is always the innermost
//! coordinate of an equation table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical::{self, DomainChild};
use crate::error::{Error, Result};

/// Tolerance on the total mass of a prior.
pub const PRIOR_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Endogenous,
    Exogenous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub id: String,
    pub kind: VarKind,
    pub domain_size: usize,
    /// Component variables when this variable is the product of several
    /// merged endogenous variables, first component most significant.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub domain_size: usize,
}

impl Variable {
    pub fn endogenous(id: impl Into<String>, domain_size: usize) -> Self {
        Self {
            id: id.into(),
            kind: VarKind::Endogenous,
            domain_size,
            components: Vec::new(),
        }
    }

    pub fn exogenous(id: impl Into<String>, domain_size: usize) -> Self {
        Self {
            id: id.into(),
            kind: VarKind::Exogenous,
            domain_size,
            components: Vec::new(),
        }
    }

    pub fn is_exogenous(&self) -> bool {
        self.kind == VarKind::Exogenous
    }
}

/// `child = table[joint parent index]`, with the exogenous parent last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralEquation {
    pub child: String,
    pub parents: Vec<String>,
    pub table: Vec<usize>,
}

impl StructuralEquation {
    pub fn new(child: impl Into<String>, parents: &[&str], table: Vec<usize>) -> Self {
        Self {
            child: child.into(),
            parents: parents.iter().map(|p| p.to_string()).collect(),
            table,
        }
    }

    pub fn exogenous_parent(&self) -> &str {
        self.parents.last().map(String::as_str).unwrap_or_default()
    }

    pub fn endogenous_parents(&self) -> &[String] {
        &self.parents[..self.parents.len().saturating_sub(1)]
    }
}

/// Which states of an exogenous variable survive after reductions.
#[derive(Debug, Clone, PartialEq, Eq)]
struct StateLabels {
    original_size: usize,
    kept: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Node {
    var: usize,
    endo_parents: Vec<usize>,
    endo_cards: Vec<usize>,
    exo: usize,
    exo_size: usize,
    equation: usize,
}

#[derive(Debug, Clone)]
pub struct PartialScm {
    variables: Vec<Variable>,
    equations: Vec<StructuralEquation>,
    priors: BTreeMap<String, Vec<f64>>,
    labels: BTreeMap<String, StateLabels>,
    index: HashMap<String, usize>,
    /// Endogenous variables in topological order.
    nodes: Vec<Node>,
    exogenous: Vec<usize>,
}

impl PartialEq for PartialScm {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
            && self.equations == other.equations
            && self.priors == other.priors
            && self.labels == other.labels
    }
}

impl PartialScm {
    pub fn new(
        variables: Vec<Variable>,
        equations: Vec<StructuralEquation>,
        priors: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        Self::assemble(variables, equations, priors, BTreeMap::new())
    }

    fn assemble(
        variables: Vec<Variable>,
        equations: Vec<StructuralEquation>,
        priors: BTreeMap<String, Vec<f64>>,
        labels: BTreeMap<String, StateLabels>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(variables.len());
        for (i, v) in variables.iter().enumerate() {
            if v.id.is_empty() {
                return Err(Error::InvalidModel("empty variable id".into()));
            }
            if index.insert(v.id.clone(), i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate variable `{}`", v.id)));
            }
            if v.domain_size == 0 {
                return Err(Error::InvalidModel(format!("`{}` has an empty domain", v.id)));
            }
            if !v.components.is_empty() {
                let product: usize = v.components.iter().map(|c| c.domain_size).product();
                if product != v.domain_size || v.is_exogenous() {
                    return Err(Error::InvalidModel(format!(
                        "components of `{}` do not match its domain",
                        v.id
                    )));
                }
            }
        }

        let mut equation_of: Vec<Option<usize>> = vec![None; variables.len()];
        for (e, eq) in equations.iter().enumerate() {
            let &child = index
                .get(&eq.child)
                .ok_or_else(|| Error::UnknownVariable(eq.child.clone()))?;
            if variables[child].is_exogenous() {
                return Err(Error::InvalidModel(format!(
                    "exogenous `{}` cannot have a structural equation",
                    eq.child
                )));
            }
            if equation_of[child].replace(e).is_some() {
                return Err(Error::InvalidModel(format!("`{}` has two equations", eq.child)));
            }
            let Some((exo, endo)) = eq.parents.split_last() else {
                return Err(Error::InvalidModel(format!("`{}` has no exogenous parent", eq.child)));
            };
            let &exo_idx = index.get(exo).ok_or_else(|| Error::UnknownVariable(exo.clone()))?;
            if !variables[exo_idx].is_exogenous() {
                return Err(Error::InvalidModel(format!(
                    "last parent of `{}` must be exogenous",
                    eq.child
                )));
            }
            let mut expected = variables[exo_idx].domain_size;
            let mut seen = BTreeSet::new();
            for p in endo {
                let &pi = index.get(p).ok_or_else(|| Error::UnknownVariable(p.clone()))?;
                if variables[pi].is_exogenous() {
                    return Err(Error::InvalidModel(format!(
                        "`{}` has more than one exogenous parent",
                        eq.child
                    )));
                }
                if pi == child || !seen.insert(pi) {
                    return Err(Error::InvalidModel(format!("bad parent list for `{}`", eq.child)));
                }
                expected *= variables[pi].domain_size;
            }
            if eq.table.len() != expected {
                return Err(Error::Shape {
                    expected,
                    found: eq.table.len(),
                });
            }
            let card = variables[child].domain_size;
            if let Some(bad) = eq.table.iter().find(|&&s| s >= card) {
                return Err(Error::InvalidModel(format!(
                    "table of `{}` maps to state {bad} outside its domain",
                    eq.child
                )));
            }
        }
        for (i, v) in variables.iter().enumerate() {
            if !v.is_exogenous() && equation_of[i].is_none() {
                return Err(Error::InvalidModel(format!("`{}` has no structural equation", v.id)));
            }
        }

        // Kahn's algorithm over endogenous edges, ties broken by declaration order.
        let n = variables.len();
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, e) in equation_of.iter().enumerate() {
            if let Some(e) = e {
                for p in equations[*e].endogenous_parents() {
                    let pi = index[p];
                    out[pi].push(i);
                    indegree[i] += 1;
                }
            }
        }
        let mut ready: BTreeSet<usize> = (0..n)
            .filter(|&i| !variables[i].is_exogenous() && indegree[i] == 0)
            .collect();
        let mut order = Vec::new();
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &out[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        let endo_count = variables.iter().filter(|v| !v.is_exogenous()).count();
        if order.len() != endo_count {
            return Err(Error::InvalidModel("graph has a directed cycle".into()));
        }

        let nodes = order
            .into_iter()
            .map(|var| {
                let e = equation_of[var].expect("checked above");
                let eq = &equations[e];
                let endo_parents: Vec<usize> =
                    eq.endogenous_parents().iter().map(|p| index[p]).collect();
                let endo_cards = endo_parents.iter().map(|&p| variables[p].domain_size).collect();
                let exo = index[eq.exogenous_parent()];
                Node {
                    var,
                    endo_parents,
                    endo_cards,
                    exo,
                    exo_size: variables[exo].domain_size,
                    equation: e,
                }
            })
            .collect();

        for (id, p) in &priors {
            let &i = index.get(id).ok_or_else(|| Error::UnknownVariable(id.clone()))?;
            if !variables[i].is_exogenous() {
                return Err(Error::NotExogenous(id.clone()));
            }
            check_distribution(p, variables[i].domain_size)
                .map_err(|m| Error::InvalidModel(format!("prior of `{id}`: {m}")))?;
        }
        for (id, l) in &labels {
            let i = index[id];
            if l.kept.len() != variables[i].domain_size {
                return Err(Error::Internal(format!("stale state labels for `{id}`")));
            }
        }

        let exogenous = (0..n).filter(|&i| variables[i].is_exogenous()).collect();
        Ok(Self {
            variables,
            equations,
            priors,
            labels,
            index,
            nodes,
            exogenous,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn equations(&self) -> &[StructuralEquation] {
        &self.equations
    }

    pub fn priors(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.priors
    }

    pub fn prior(&self, id: &str) -> Option<&[f64]> {
        self.priors.get(id).map(Vec::as_slice)
    }

    pub fn variable(&self, id: &str) -> Result<&Variable> {
        self.index
            .get(id)
            .map(|&i| &self.variables[i])
            .ok_or_else(|| Error::UnknownVariable(id.to_string()))
    }

    pub fn var_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn cardinality(&self, id: &str) -> Result<usize> {
        self.variable(id).map(|v| v.domain_size)
    }

    pub fn equation(&self, child: &str) -> Option<&StructuralEquation> {
        self.equations.iter().find(|e| e.child == child)
    }

    /// Exogenous variable ids in declaration order.
    pub fn exogenous_ids(&self) -> Vec<&str> {
        self.exogenous.iter().map(|&i| self.variables[i].id.as_str()).collect()
    }

    /// Endogenous variable ids in topological order.
    pub fn endogenous_ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| self.variables[n.var].id.as_str()).collect()
    }

    /// Endogenous children of an exogenous variable, in topological order.
    pub fn children_of(&self, exogenous: &str) -> Result<Vec<&str>> {
        let v = self.variable(exogenous)?;
        if !v.is_exogenous() {
            return Err(Error::NotExogenous(exogenous.to_string()));
        }
        let u = self.index[exogenous];
        Ok(self
            .nodes
            .iter()
            .filter(|n| n.exo == u)
            .map(|n| self.variables[n.var].id.as_str())
            .collect())
    }

    pub fn exogenous_parent(&self, child: &str) -> Result<&str> {
        self.endogenous_equation(child).map(|e| e.exogenous_parent())
    }

    pub fn endogenous_parents(&self, child: &str) -> Result<&[String]> {
        self.endogenous_equation(child).map(|e| e.endogenous_parents())
    }

    fn endogenous_equation(&self, child: &str) -> Result<&StructuralEquation> {
        let v = self.variable(child)?;
        if v.is_exogenous() {
            return Err(Error::NotEndogenous(child.to_string()));
        }
        Ok(self.equation(child).expect("validated"))
    }

    /// True when every exogenous variable carries a prior.
    pub fn is_fully_specified(&self) -> bool {
        self.exogenous
            .iter()
            .all(|&i| self.priors.contains_key(&self.variables[i].id))
    }

    /// Original canonical indices of the states still present in `exogenous`.
    pub fn state_labels(&self, exogenous: &str) -> Result<Vec<usize>> {
        let v = self.variable(exogenous)?;
        if !v.is_exogenous() {
            return Err(Error::NotExogenous(exogenous.to_string()));
        }
        Ok(match self.labels.get(exogenous) {
            Some(l) => l.kept.clone(),
            None => (0..v.domain_size).collect(),
        })
    }

    /// Domain size of `exogenous` before any reduction.
    pub fn original_size(&self, exogenous: &str) -> Result<usize> {
        let v = self.variable(exogenous)?;
        Ok(self
            .labels
            .get(exogenous)
            .map_or(v.domain_size, |l| l.original_size))
    }

    /// Same structure with a new set of exogenous priors.
    pub fn with_priors(&self, priors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        Self::assemble(
            self.variables.clone(),
            self.equations.clone(),
            priors,
            self.labels.clone(),
        )
    }

    pub fn without_priors(&self) -> Self {
        let mut m = self.clone();
        m.priors.clear();
        m
    }

    /// Removes exogenous states, identified by their original canonical
    /// indices. Removing a state that is already gone is a no-op, so the
    /// result does not depend on how the removals are grouped or ordered.
    pub fn reduce(&self, states: &[(&str, usize)]) -> Result<Self> {
        let mut removed: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for &(id, s) in states {
            let v = self.variable(id)?;
            if !v.is_exogenous() {
                return Err(Error::NotExogenous(id.to_string()));
            }
            if s >= self.original_size(id)? {
                return Err(Error::StateOutOfRange {
                    exogenous: id.to_string(),
                    state: s,
                });
            }
            removed.entry(id).or_default().insert(s);
        }
        if removed.is_empty() {
            return Ok(self.clone());
        }

        let mut variables = self.variables.clone();
        let mut equations = self.equations.clone();
        let mut priors = self.priors.clone();
        let mut labels = self.labels.clone();
        for (id, gone) in removed {
            let current = self.state_labels(id)?;
            let keep_pos: Vec<usize> = (0..current.len())
                .filter(|&p| !gone.contains(&current[p]))
                .collect();
            if keep_pos.len() == current.len() {
                continue;
            }
            if keep_pos.is_empty() {
                return Err(Error::EmptyDomain(id.to_string()));
            }
            let old = current.len();
            let new = keep_pos.len();
            for eq in equations.iter_mut().filter(|e| e.exogenous_parent() == id) {
                let rows = eq.table.len() / old;
                eq.table = (0..rows)
                    .flat_map(|r| keep_pos.iter().map(move |&p| r * old + p))
                    .map(|i| eq.table[i])
                    .collect();
            }
            if let Some(p) = priors.get_mut(id) {
                let kept: Vec<f64> = keep_pos.iter().map(|&i| p[i]).collect();
                let mass: f64 = kept.iter().sum();
                if mass <= 0.0 {
                    return Err(Error::EmptyDomain(id.to_string()));
                }
                *p = kept.into_iter().map(|x| x / mass).collect();
            }
            let original_size = self.original_size(id)?;
            labels.insert(
                id.to_string(),
                StateLabels {
                    original_size,
                    kept: keep_pos.iter().map(|&p| current[p]).collect(),
                },
            );
            variables[self.index[id]].domain_size = new;
        }
        Self::assemble(variables, equations, priors, labels)
    }

    /// Values of every variable (indexed like [`Self::variables`]) for one
    /// joint exogenous state. `exo_states` is aligned with
    /// [`Self::exogenous_ids`]; `interventions` is indexed by variable and
    /// overrides the structural equation of the variables it fixes.
    pub fn simulate_into(&self, exo_states: &[usize], interventions: &[Option<usize>], out: &mut [usize]) {
        debug_assert_eq!(exo_states.len(), self.exogenous.len());
        for (&var, &s) in self.exogenous.iter().zip(exo_states) {
            out[var] = s;
        }
        for node in &self.nodes {
            if let Some(v) = interventions.get(node.var).copied().flatten() {
                out[node.var] = v;
                continue;
            }
            let mut cfg = 0;
            for (&p, &card) in node.endo_parents.iter().zip(&node.endo_cards) {
                cfg = cfg * card + out[p];
            }
            let table = &self.equations[node.equation].table;
            out[node.var] = table[cfg * node.exo_size + out[node.exo]];
        }
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            variables: self
                .variables
                .iter()
                .map(|v| VariableEntry {
                    id: v.id.clone(),
                    kind: v.kind,
                    domain_size: Some(v.domain_size),
                    components: v.components.clone(),
                })
                .collect(),
            equations: self
                .equations
                .iter()
                .map(|e| EquationEntry {
                    child: e.child.clone(),
                    parents: e.parents.clone(),
                    table: Some(e.table.clone()),
                    canonical: false,
                })
                .collect(),
            priors: if self.priors.is_empty() {
                None
            } else {
                Some(self.priors.clone())
            },
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(s)?.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

/// Checks that `p` is a probability vector of length `len`.
pub(crate) fn check_distribution(p: &[f64], len: usize) -> std::result::Result<(), String> {
    if p.len() != len {
        return Err(format!("expected {len} entries, found {}", p.len()));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(format!("entry {x} is not a probability"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PRIOR_SUM_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub variables: Vec<VariableEntry>,
    pub equations: Vec<EquationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableEntry {
    pub id: String,
    pub kind: VarKind,
    /// May be omitted for an exogenous variable whose children are all canonical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquationEntry {
    pub child: String,
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub canonical: bool,
}

impl ModelFile {
    /// Resolves canonical equations into explicit tables and validates.
    pub fn into_model(self) -> Result<PartialScm> {
        let sizes: HashMap<&str, Option<usize>> = self
            .variables
            .iter()
            .map(|v| (v.id.as_str(), v.domain_size))
            .collect();
        let endo_size = |id: &str| -> Result<usize> {
            sizes
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownVariable(id.to_string()))?
                .ok_or_else(|| Error::InvalidModel(format!("`{id}` needs a domain_size")))
        };

        // Group canonical equations by their exogenous parent.
        let mut canonical_groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.equations.iter().enumerate() {
            match (e.canonical, &e.table) {
                (true, None) => {
                    let exo = e.parents.last().ok_or_else(|| {
                        Error::InvalidModel(format!("`{}` has no exogenous parent", e.child))
                    })?;
                    canonical_groups.entry(exo.clone()).or_default().push(i);
                }
                (false, Some(_)) => {}
                _ => {
                    return Err(Error::InvalidModel(format!(
                        "equation for `{}` needs exactly one of `table` or `canonical: true`",
                        e.child
                    )))
                }
            }
        }

        let mut tables: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut exo_sizes: HashMap<String, usize> = HashMap::new();
        for (exo, members) in &canonical_groups {
            let all_children = self
                .equations
                .iter()
                .filter(|e| e.parents.last() == Some(exo))
                .count();
            if all_children != members.len() {
                return Err(Error::InvalidModel(format!(
                    "children of `{exo}` must be all canonical or all explicit"
                )));
            }
            let mut children = Vec::with_capacity(members.len());
            for &i in members {
                let e = &self.equations[i];
                let parents: Vec<String> = e.parents[..e.parents.len() - 1].to_vec();
                let parent_cards = parents.iter().map(|p| endo_size(p)).collect::<Result<_>>()?;
                children.push(DomainChild {
                    id: e.child.clone(),
                    cardinality: endo_size(&e.child)?,
                    parents,
                    parent_cards,
                });
            }
            let domain = match children.len() {
                1 => canonical::markovian_domain(exo, children.pop().expect("one child")),
                2 => {
                    // Order the pair so that the second child reads the first.
                    if children[0].parents.contains(&children[1].id) {
                        children.swap(0, 1);
                    }
                    let second = children.pop().expect("two children");
                    let first = children.pop().expect("two children");
                    canonical::chain_domain(exo, first, second)?
                }
                n => {
                    return Err(Error::Topology {
                        exogenous: exo.clone(),
                        children: n,
                        expected: "canonical domains cover one child or a two-child chain",
                    })
                }
            };
            for &i in members {
                let pos = domain
                    .child_position(&self.equations[i].child)
                    .expect("child belongs to its domain");
                tables.insert(i, domain.equation_table(pos));
            }
            exo_sizes.insert(exo.clone(), domain.size());
        }

        let variables = self
            .variables
            .into_iter()
            .map(|v| {
                let size = match (v.domain_size, exo_sizes.get(&v.id)) {
                    (Some(d), Some(&c)) if d != c => {
                        return Err(Error::InvalidModel(format!(
                            "`{}` declares {d} states but its canonical domain has {c}",
                            v.id
                        )))
                    }
                    (Some(d), _) => d,
                    (None, Some(&c)) => c,
                    (None, None) => {
                        return Err(Error::InvalidModel(format!("`{}` needs a domain_size", v.id)))
                    }
                };
                Ok(Variable {
                    id: v.id,
                    kind: v.kind,
                    domain_size: size,
                    components: v.components,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let equations = self
            .equations
            .into_iter()
            .enumerate()
            .map(|(i, e)| StructuralEquation {
                table: e.table.or_else(|| tables.remove(&i)).unwrap_or_default(),
                child: e.child,
                parents: e.parents,
            })
            .collect();
        PartialScm::new(variables, equations, self.priors.unwrap_or_default())
    }
}
