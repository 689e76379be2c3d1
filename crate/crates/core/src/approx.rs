//! Markovian approximations of a confounded model.
//!
//! The endogenous merge fuses every variable tied to a confounder into one
//! product-domain variable with a single fresh exogenous parent, whose
//! canonical domain allows strictly more mechanisms than the confounded
//! model. The exogenous split gives each child of the confounder its own
//! independent exogenous parent. A [`StateMapping`] relates merged states to
//! the confounded domain, so vertices found on the merged model can be
//! carried back.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;

use crate::canonical::{encode_digits_mixed, markovian_domain, CanonicalDomain, DomainChild};
use crate::error::{Error, Result};
use crate::evidence::Evidence;
use crate::models::equations_for;
use crate::scm::{Component, PartialScm, StructuralEquation, Variable};
use crate::search::{run_search, sort_dedup, SearchConfig, SolutionSet};
use crate::system::{build_markovian_system, ExtremePoint, NEGATIVE_TOL, SUPPORT_TOL};

/// Largest number of group choices expanded for one merged vertex.
pub const MAX_CHOICES: u64 = 1 << 20;

/// How a confounded group of variables was fused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeSpec {
    /// The confounder the merge started from.
    pub exogenous: String,
    pub merged_id: String,
    /// Fused variables in topological order, first most significant.
    pub members: Vec<Component>,
    pub merged_domain_size: usize,
    /// Endogenous parents of the fused group from outside it.
    pub external: Vec<(String, usize)>,
    /// Exogenous variables replaced by the merge.
    pub replaced: Vec<String>,
    pub merged_exogenous: String,
    pub merged_exogenous_size: usize,
}

fn endogenous_children(model: &PartialScm) -> HashMap<&str, Vec<&str>> {
    let mut out: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in model.equations() {
        for p in e.endogenous_parents() {
            out.entry(p.as_str()).or_default().push(e.child.as_str());
        }
    }
    out
}

fn reachable<'a>(start: &BTreeSet<&'a str>, next: impl Fn(&'a str) -> Vec<&'a str>) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<&str> = start.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for w in next(v) {
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen
}

/// The variables fused by a merge starting at `exogenous`: its children,
/// variables lying on a directed path between two of them, and every
/// variable sharing an exogenous parent with one of them, to a fixpoint.
pub fn merge_closure(model: &PartialScm, exogenous: &str) -> Result<Vec<String>> {
    let children = endogenous_children(model);
    let mut members: BTreeSet<&str> = model.children_of(exogenous)?.into_iter().collect();
    loop {
        let down = reachable(&members, |v| children.get(v).cloned().unwrap_or_default());
        let up = reachable(&members, |v| {
            model
                .endogenous_parents(v)
                .map(|p| p.iter().map(String::as_str).collect())
                .unwrap_or_default()
        });
        let exos: BTreeSet<&str> = members
            .iter()
            .map(|m| model.exogenous_parent(m).expect("endogenous"))
            .collect();
        let mut grown = members.clone();
        for v in model.endogenous_ids() {
            let between = down.contains(v) && up.contains(v);
            let shares = exos.contains(model.exogenous_parent(v)?);
            if between || shares {
                grown.insert(v);
            }
        }
        if grown.len() == members.len() {
            break;
        }
        members = grown;
    }
    Ok(model
        .endogenous_ids()
        .into_iter()
        .filter(|v| members.contains(v))
        .map(str::to_string)
        .collect())
}

fn fresh_id(model: &PartialScm, base: String) -> String {
    let mut id = base;
    while model.var_index(&id).is_some() {
        id.push('\'');
    }
    id
}

/// Rewrites an equation whose endogenous parents include fused members so
/// that it reads the merged variable instead.
fn rewire(
    model: &PartialScm,
    eq: &StructuralEquation,
    plan: &MergeSpec,
) -> Result<StructuralEquation> {
    let member_pos: HashMap<&str, usize> = plan
        .members
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let old: Vec<&String> = eq.endogenous_parents().iter().collect();
    if old.iter().all(|p| !member_pos.contains_key(p.as_str())) {
        return Ok(eq.clone());
    }
    let mut parents: Vec<String> = Vec::new();
    for p in &old {
        let name = if member_pos.contains_key(p.as_str()) {
            plan.merged_id.clone()
        } else {
            (*p).clone()
        };
        if !parents.contains(&name) {
            parents.push(name);
        }
    }
    let card = |id: &str| -> Result<usize> {
        if id == plan.merged_id {
            Ok(plan.merged_domain_size)
        } else {
            model.cardinality(id)
        }
    };
    let new_cards: Vec<usize> = parents.iter().map(|p| card(p)).collect::<Result<_>>()?;
    let old_cards: Vec<usize> = old.iter().map(|p| model.cardinality(p)).collect::<Result<_>>()?;
    let member_cards: Vec<usize> = plan.members.iter().map(|c| c.domain_size).collect();
    let exo = eq.exogenous_parent();
    let exo_size = model.cardinality(exo)?;
    let configs: usize = new_cards.iter().product();
    let mut table = Vec::with_capacity(configs * exo_size);
    for cfg in 0..configs {
        let values = encode_digits_mixed(cfg, new_cards.iter().copied());
        let lookup: HashMap<&str, usize> = parents.iter().map(String::as_str).zip(values).collect();
        let merged = lookup.get(plan.merged_id.as_str()).copied().unwrap_or(0);
        let parts = encode_digits_mixed(merged, member_cards.iter().copied());
        let old_cfg = old.iter().zip(&old_cards).fold(0, |acc, (p, &k)| {
            let v = match member_pos.get(p.as_str()) {
                Some(&i) => parts[i],
                None => lookup[p.as_str()],
            };
            acc * k + v
        });
        for u in 0..exo_size {
            table.push(eq.table[old_cfg * exo_size + u]);
        }
    }
    parents.push(exo.to_string());
    Ok(StructuralEquation {
        child: eq.child.clone(),
        parents,
        table,
    })
}

/// Fuses the variables confounded by `exogenous` into one Markovian
/// variable with a canonical exogenous parent.
pub fn endogenous_merge(model: &PartialScm, exogenous: &str) -> Result<(PartialScm, MergeSpec)> {
    let children = model.children_of(exogenous)?;
    if children.len() < 2 {
        return Err(Error::Topology {
            exogenous: exogenous.to_string(),
            children: children.len(),
            expected: "merging needs at least two children",
        });
    }
    let members = merge_closure(model, exogenous)?;
    let replaced: Vec<String> = {
        let mut r: Vec<String> = Vec::new();
        for id in model.exogenous_ids() {
            let kids = model.children_of(id)?;
            if kids.iter().any(|k| members.iter().any(|m| m == k)) {
                r.push(id.to_string());
            }
        }
        r
    };
    let mut external: Vec<(String, usize)> = Vec::new();
    for m in &members {
        for p in model.endogenous_parents(m)? {
            if !members.contains(p) && external.iter().all(|(e, _)| e != p) {
                external.push((p.clone(), model.cardinality(p)?));
            }
        }
    }
    let components: Vec<Component> = members
        .iter()
        .map(|m| {
            Ok(Component {
                id: m.clone(),
                domain_size: model.cardinality(m)?,
            })
        })
        .collect::<Result<_>>()?;
    let merged_domain_size: usize = components.iter().map(|c| c.domain_size).product();
    let merged_id = fresh_id(model, format!("({})", members.join(",")));
    let merged_exogenous = fresh_id(model, format!("{exogenous}*"));
    let domain = markovian_domain(
        &merged_exogenous,
        DomainChild {
            id: merged_id.clone(),
            cardinality: merged_domain_size,
            parents: external.iter().map(|(p, _)| p.clone()).collect(),
            parent_cards: external.iter().map(|(_, c)| *c).collect(),
        },
    );
    let plan = MergeSpec {
        exogenous: exogenous.to_string(),
        merged_id: merged_id.clone(),
        members: components.clone(),
        merged_domain_size,
        external,
        replaced: replaced.clone(),
        merged_exogenous: merged_exogenous.clone(),
        merged_exogenous_size: domain.size(),
    };

    let mut variables = Vec::new();
    let mut placed_endo = false;
    let mut placed_exo = false;
    for v in model.variables() {
        if members.contains(&v.id) {
            if !placed_endo {
                variables.push(Variable {
                    id: merged_id.clone(),
                    kind: v.kind,
                    domain_size: merged_domain_size,
                    components: components.clone(),
                });
                placed_endo = true;
            }
        } else if replaced.contains(&v.id) {
            if !placed_exo {
                variables.push(Variable::exogenous(merged_exogenous.clone(), domain.size()));
                placed_exo = true;
            }
        } else {
            variables.push(v.clone());
        }
    }
    let mut equations = Vec::new();
    let mut placed_eq = false;
    for e in model.equations() {
        if members.contains(&e.child) {
            if !placed_eq {
                equations.extend(equations_for(&domain));
                placed_eq = true;
            }
        } else {
            equations.push(rewire(model, e, &plan)?);
        }
    }
    let priors = model
        .priors()
        .iter()
        .filter(|(id, _)| !replaced.contains(id))
        .map(|(id, p)| (id.clone(), p.clone()))
        .collect();
    Ok((PartialScm::new(variables, equations, priors)?, plan))
}

/// Replaces a two-child confounder by one independent canonical exogenous
/// parent per child.
pub fn exogenous_split(model: &PartialScm, exogenous: &str) -> Result<PartialScm> {
    let children: Vec<String> = model
        .children_of(exogenous)?
        .into_iter()
        .map(str::to_string)
        .collect();
    if children.len() != 2 {
        return Err(Error::Topology {
            exogenous: exogenous.to_string(),
            children: children.len(),
            expected: "splitting needs exactly two children",
        });
    }
    let mut domains = Vec::new();
    for c in &children {
        let parents = model.endogenous_parents(c)?.to_vec();
        let parent_cards = parents.iter().map(|p| model.cardinality(p)).collect::<Result<_>>()?;
        let id = fresh_id(model, format!("{exogenous}_{c}"));
        domains.push(markovian_domain(
            &id,
            DomainChild {
                id: c.clone(),
                cardinality: model.cardinality(c)?,
                parents,
                parent_cards,
            },
        ));
    }
    let mut variables = Vec::new();
    for v in model.variables() {
        if v.id == exogenous {
            for d in &domains {
                variables.push(Variable::exogenous(d.exogenous(), d.size()));
            }
        } else {
            variables.push(v.clone());
        }
    }
    let equations = model
        .equations()
        .iter()
        .map(|e| match children.iter().position(|c| *c == e.child) {
            Some(i) => equations_for(&domains[i]).remove(0),
            None => e.clone(),
        })
        .collect();
    let mut priors = model.priors().clone();
    priors.remove(exogenous);
    PartialScm::new(variables, equations, priors)
}

/// Correspondence between merged states and confounded states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMapping {
    pub semi_exogenous: String,
    pub merged_exogenous: String,
    pub semi_size: usize,
    pub merged_size: usize,
    /// Merged states whose mechanism no confounded state realises.
    pub forbidden: Vec<usize>,
    /// Each remaining merged state and the confounded states producing the
    /// same joint response to every external configuration.
    pub groups: BTreeMap<usize, Vec<usize>>,
}

/// Matches the states of a merged domain with those of the confounded
/// domain by their joint responses.
pub fn build_state_mapping(semi: &CanonicalDomain, merged: &CanonicalDomain) -> Result<StateMapping> {
    if merged.children().len() != 1 {
        return Err(Error::SignatureMismatch("the merged domain must have one child".into()));
    }
    let joint: usize = semi.children().iter().map(|c| c.cardinality).product();
    let mc = &merged.children()[0];
    if mc.cardinality != joint {
        return Err(Error::SignatureMismatch(format!(
            "merged child has {} states, the confounded children {joint}",
            mc.cardinality
        )));
    }
    let ext: Vec<(String, usize)> = mc.parents.iter().cloned().zip(mc.parent_cards.iter().copied()).collect();
    if ext != semi.external() {
        return Err(Error::SignatureMismatch("external parents differ".into()));
    }
    let configs = semi.external_configurations();
    let signature = |u: usize| -> Vec<usize> { (0..configs).map(|c| semi.joint_response(u, c)).collect() };
    let mut by_signature: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for u in 0..semi.size() {
        by_signature.entry(signature(u)).or_default().push(u);
    }
    let mut forbidden = Vec::new();
    let mut groups = BTreeMap::new();
    for s in 0..merged.size() {
        match by_signature.get(merged.mechanism(s, 0)) {
            Some(members) => {
                groups.insert(s, members.clone());
            }
            None => forbidden.push(s),
        }
    }
    Ok(StateMapping {
        semi_exogenous: semi.exogenous().to_string(),
        merged_exogenous: merged.exogenous().to_string(),
        semi_size: semi.size(),
        merged_size: merged.size(),
        forbidden,
        groups,
    })
}

impl StateMapping {
    /// Two-column CSV: merged state, confounded state (empty when forbidden).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([self.merged_exogenous.as_str(), self.semi_exogenous.as_str()])?;
        for s in 0..self.merged_size {
            match self.groups.get(&s) {
                Some(members) => {
                    for m in members {
                        w.write_record([s.to_string(), m.to_string()])?;
                    }
                }
                None => w.write_record([s.to_string(), String::new()])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Carries merged vertices back to the confounded domain: every choice of
/// one member per active group yields one point.
pub fn map_extreme_points(merged: &SolutionSet, mapping: &StateMapping) -> Result<SolutionSet> {
    if merged.domain_size != mapping.merged_size {
        return Err(Error::SignatureMismatch(format!(
            "solution set has {} states, mapping expects {}",
            merged.domain_size, mapping.merged_size
        )));
    }
    for p in &merged.points {
        for &f in &mapping.forbidden {
            if p.probabilities[f] > NEGATIVE_TOL {
                return Err(Error::ForbiddenMass {
                    state: f,
                    mass: p.probabilities[f],
                });
            }
        }
    }
    let expanded: Vec<(Vec<ExtremePoint>, bool)> = merged
        .points
        .par_iter()
        .map(|p| expand_point(p, mapping))
        .collect();
    let mut capped = false;
    let mut raw = Vec::new();
    for (pts, c) in expanded {
        capped |= c;
        raw.extend(pts);
    }
    Ok(SolutionSet {
        exogenous: mapping.semi_exogenous.clone(),
        domain_size: mapping.semi_size,
        labels: (0..mapping.semi_size).collect(),
        points: sort_dedup(raw),
        complete: merged.complete && !capped,
        stats: merged.stats,
    })
}

fn expand_point(p: &ExtremePoint, mapping: &StateMapping) -> (Vec<ExtremePoint>, bool) {
    let active: Vec<(f64, &[usize])> = p
        .probabilities
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > SUPPORT_TOL)
        .filter_map(|(s, &m)| mapping.groups.get(&s).map(|g| (m, g.as_slice())))
        .collect();
    let total = active
        .iter()
        .try_fold(1u64, |acc, (_, g)| acc.checked_mul(g.len() as u64))
        .unwrap_or(u64::MAX);
    let capped = total > MAX_CHOICES;
    if capped {
        log::warn!(
            "merged vertex expands to {total} points; keeping the first {MAX_CHOICES}"
        );
    }
    let radices: Vec<usize> = active.iter().map(|(_, g)| g.len()).collect();
    let out = (0..total.min(MAX_CHOICES) as usize)
        .map(|k| {
            let choice = encode_digits_mixed(k, radices.iter().copied());
            let mut probs = vec![0.0; mapping.semi_size];
            for ((mass, group), c) in active.iter().zip(choice) {
                probs[group[c]] += mass;
            }
            ExtremePoint::new(mapping.semi_exogenous.clone(), probs)
        })
        .collect();
    (out, capped)
}

/// Marginals of a joint distribution over a product of domains, last
/// domain fastest.
pub fn marginalise(joint: &[f64], sizes: &[usize]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    for (i, &p) in joint.iter().enumerate() {
        for (k, d) in encode_digits_mixed(i, sizes.iter().copied()).into_iter().enumerate() {
            out[k][d] += p;
        }
    }
    out
}

/// Searches the merged model's fused variable. With `restrict` the
/// forbidden states are removed first, which makes the merged search an
/// exact solver for the confounded model; without it the merged model is
/// used as a relaxation.
pub fn solve_merged(
    merged_model: &PartialScm,
    plan: &MergeSpec,
    evidence: &Evidence,
    mapping: &StateMapping,
    restrict: bool,
    config: &SearchConfig,
) -> Result<SolutionSet> {
    let id = plan.merged_exogenous.as_str();
    let model = if restrict {
        let gone: Vec<(&str, usize)> = mapping.forbidden.iter().map(|&s| (id, s)).collect();
        merged_model.reduce(&gone)?
    } else {
        merged_model.clone()
    };
    let domain = CanonicalDomain::from_model(&model, id)?;
    let system = build_markovian_system(&domain, evidence)?;
    let set = run_search(&system, config)?;
    if !restrict {
        return Ok(set);
    }
    let labels = model.state_labels(id)?;
    let full = merged_model.cardinality(id)?;
    let points = set
        .points
        .iter()
        .map(|p| {
            let mut probs = vec![0.0; full];
            for (pos, &v) in p.probabilities.iter().enumerate() {
                probs[labels[pos]] = v;
            }
            ExtremePoint::new(id, probs)
        })
        .collect();
    Ok(SolutionSet {
        exogenous: id.to_string(),
        domain_size: full,
        labels: (0..full).collect(),
        points: sort_dedup(points),
        complete: set.complete,
        stats: set.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::build_canonical_semimarkovian_chain;
    use crate::models;

    fn merged_pair() -> (CanonicalDomain, CanonicalDomain) {
        let m = models::confounded_chain();
        let (mm, plan) = endogenous_merge(&m, "U").unwrap();
        let semi = build_canonical_semimarkovian_chain(&m, ["Y1", "Y2"]).unwrap();
        let merged = CanonicalDomain::from_model(&mm, &plan.merged_exogenous).unwrap();
        (semi, merged)
    }

    #[test]
    fn merge_builds_product_variable() {
        let m = models::confounded_chain();
        let (mm, plan) = endogenous_merge(&m, "U").unwrap();
        assert_eq!(plan.merged_id, "(Y1,Y2)");
        assert_eq!(plan.merged_domain_size, 4);
        assert_eq!(plan.merged_exogenous_size, 16);
        assert_eq!(plan.replaced, vec!["U".to_string()]);
        assert_eq!(mm.endogenous_ids(), vec!["X", "(Y1,Y2)"]);
        let d = CanonicalDomain::from_model(&mm, "U*").unwrap();
        // u*1: f(X) = (0, X), encoded as merged states 0 and 1
        assert_eq!(d.mechanism(1, 0), &[0, 1]);
    }

    #[test]
    fn merge_counts_mixed_domains() {
        let m = models::confounded_chain_with(2, 2, 3);
        let (_, plan) = endogenous_merge(&m, "U").unwrap();
        assert_eq!(plan.merged_domain_size, 6);
        assert_eq!(plan.merged_exogenous_size, 36);
    }

    #[test]
    fn merge_rejects_single_child() {
        let m = models::markovian_chain();
        assert!(matches!(endogenous_merge(&m, "U1"), Err(Error::Topology { .. })));
    }

    #[test]
    fn split_gives_two_markovian_parents() {
        let m = models::confounded_chain();
        let s = exogenous_split(&m, "U").unwrap();
        assert_eq!(s.exogenous_ids(), vec!["U0", "U_Y1", "U_Y2"]);
        assert_eq!(s.cardinality("U_Y1").unwrap(), 4);
        assert_eq!(s.cardinality("U_Y2").unwrap(), 4);
        assert!(exogenous_split(&m, "U0").is_err());
    }

    #[test]
    fn forbidden_and_groups() {
        let (semi, merged) = merged_pair();
        let map = build_state_mapping(&semi, &merged).unwrap();
        assert_eq!(map.forbidden, vec![1, 4, 11, 14]);
        assert_eq!(map.groups[&0], vec![0, 1]);
        assert_eq!(map.groups.len(), 12);
        let total: usize = map.groups.values().map(Vec::len).sum();
        assert_eq!(total, 16);
    }

    #[test]
    fn single_child_mapping_is_identity() {
        let m = models::markovian_chain();
        let d = CanonicalDomain::from_model(&m, "U1").unwrap();
        let child = d.children()[0].clone();
        let again = markovian_domain("V", child);
        let map = build_state_mapping(&d, &again).unwrap();
        assert!(map.forbidden.is_empty());
        assert!(map.groups.iter().all(|(k, v)| v == &vec![*k]));
    }

    #[test]
    fn vertex_on_grouped_state_expands_twice() {
        let (semi, merged) = merged_pair();
        let map = build_state_mapping(&semi, &merged).unwrap();
        let p = ExtremePoint::point_mass("U*", 16, 0);
        let set = SolutionSet::singleton(p, (0..16).collect());
        let out = map_extreme_points(&set, &map).unwrap();
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.points[0].support, vec![1]);
        assert_eq!(out.points[1].support, vec![0]);
    }

    #[test]
    fn forbidden_mass_is_an_error() {
        let (semi, merged) = merged_pair();
        let map = build_state_mapping(&semi, &merged).unwrap();
        let set = SolutionSet::singleton(ExtremePoint::point_mass("U*", 16, 4), (0..16).collect());
        assert!(matches!(
            map_extreme_points(&set, &map),
            Err(Error::ForbiddenMass { state: 4, .. })
        ));
    }

    #[test]
    fn marginals_of_product() {
        let joint = [0.1, 0.2, 0.3, 0.4];
        let m = marginalise(&joint, &[2, 2]);
        assert!((m[0][0] - 0.3).abs() < 1e-15);
        assert!((m[1][1] - 0.6).abs() < 1e-15);
    }
}
