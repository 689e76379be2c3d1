//! Vertex enumeration over candidate supports.
//!
//! A support is a set of `r` columns (by default `r` is the system rank).
//! Setting every other state to zero leaves a square or overdetermined
//! system whose unique nonnegative solution, when it exists, is a vertex of
//! the credal set. Supports are visited in colexicographic order, split into
//! contiguous ranges that may be solved in parallel, and the results are
//! merged, sorted and deduplicated so the output never depends on the
//! degree of parallelism.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::canonical::CanonicalDomain;
use crate::error::{Error, Result};
use crate::evidence::Evidence;
use crate::scm::PartialScm;
use crate::system::{
    build_markovian_system, build_semimarkovian_combined, build_semimarkovian_experimental,
    build_semimarkovian_observational, ConstraintSystem, ExtremePoint, Infeasible, Scratch, Solved,
};

/// Points closer than this in every coordinate are the same vertex.
pub const DEDUP_TOL: f64 = 1e-9;
/// Rows with a right-hand side above this must be covered by a support.
pub const COVER_TOL: f64 = 1e-9;

const CHUNK: u64 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    #[default]
    Exhaustive,
    Heuristic,
}

/// Caps how many selected columns may hit each of the `rows` constraints
/// with the smallest right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowProbability {
    pub rows: usize,
    pub cap: usize,
}

impl Default for LowProbability {
    fn default() -> Self {
        Self { rows: 2, cap: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Heuristics {
    pub coverage: bool,
    pub low_probability: Option<LowProbability>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Number of columns per support; the system rank when unset.
    pub support_size: Option<usize>,
    pub heuristics: Heuristics,
    /// Keep at most this many vertices (the smallest in sorted order).
    pub max_solutions: Option<usize>,
    /// Visit at most this many supports, in colexicographic order.
    pub max_supports: Option<u64>,
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            mode: SearchMode::Exhaustive,
            support_size: None,
            heuristics: Heuristics::default(),
            max_solutions: None,
            max_supports: None,
            parallel: true,
        }
    }
}

impl SearchConfig {
    pub fn exhaustive() -> Self {
        Self::default()
    }

    pub fn heuristic(heuristics: Heuristics) -> Self {
        Self {
            mode: SearchMode::Heuristic,
            heuristics,
            ..Self::default()
        }
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

/// Counters describing one search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    pub supports_total: u64,
    pub supports_visited: u64,
    pub supports_solved: u64,
    pub rank_deficient: u64,
    pub inconsistent: u64,
    pub negative: u64,
    pub raw_points: u64,
}

impl SearchStats {
    fn add(&mut self, o: &Self) {
        self.supports_visited += o.supports_visited;
        self.supports_solved += o.supports_solved;
        self.rank_deficient += o.rank_deficient;
        self.inconsistent += o.inconsistent;
        self.negative += o.negative;
        self.raw_points += o.raw_points;
    }
}

/// The vertices found for one exogenous variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub exogenous: String,
    pub domain_size: usize,
    /// Original canonical index of each state.
    pub labels: Vec<usize>,
    pub points: Vec<ExtremePoint>,
    /// True when every candidate support was visited without any lossy
    /// filter, so every vertex is present.
    pub complete: bool,
    pub stats: SearchStats,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// A set holding one given point.
    pub fn singleton(point: ExtremePoint, labels: Vec<usize>) -> Self {
        Self {
            exogenous: point.exogenous.clone(),
            domain_size: point.probabilities.len(),
            labels,
            points: vec![point],
            complete: true,
            stats: SearchStats::default(),
        }
    }
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    Some(acc as u64)
}

/// Colexicographic unranking: the combination with the given rank.
pub fn unrank_colex(mut rank: u64, n: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    let mut hi = n;
    for i in (1..=k).rev() {
        let mut c = hi - 1;
        while binomial(c as u64, i as u64).unwrap_or(u64::MAX) > rank {
            c -= 1;
        }
        rank -= binomial(c as u64, i as u64).unwrap_or(0);
        out[i - 1] = c;
        hi = c;
    }
    out
}

/// Advances to the next combination in colexicographic order.
pub fn next_colex(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in 0..k {
        let limit = if i + 1 < k { c[i + 1] } else { n };
        if c[i] + 1 < limit {
            c[i] += 1;
            for (j, x) in c.iter_mut().enumerate().take(i) {
                *x = j;
            }
            return true;
        }
    }
    false
}

/// Partition of the columns by identical coefficient vectors, each group
/// sorted, groups ordered by their smallest member.
pub fn group_indistinguishable(system: &ConstraintSystem) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for c in 0..system.columns() {
        groups.entry(system.column(c)).or_default().push(c);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Precomputed filters on supports.
struct Filter {
    group_of: Option<Vec<usize>>,
    masks: Vec<Vec<u64>>,
    required: Option<Vec<u64>>,
    low: Vec<(usize, usize)>,
}

impl Filter {
    fn new(system: &ConstraintSystem, config: &SearchConfig) -> Self {
        let words = system.rows().div_ceil(64).max(1);
        let masks = (0..system.columns())
            .map(|c| {
                let mut m = vec![0u64; words];
                for r in 0..system.rows() {
                    if system.coefficient(r, c) == 1 {
                        m[r / 64] |= 1 << (r % 64);
                    }
                }
                m
            })
            .collect();
        let heuristic = config.mode == SearchMode::Heuristic;
        let group_of = heuristic.then(|| {
            let mut g = vec![0; system.columns()];
            for (i, grp) in group_indistinguishable(system).iter().enumerate() {
                for &c in grp {
                    g[c] = i;
                }
            }
            g
        });
        let required = (heuristic && config.heuristics.coverage).then(|| {
            let mut m = vec![0u64; words];
            for (r, &b) in system.rhs().iter().enumerate() {
                if b > COVER_TOL {
                    m[r / 64] |= 1 << (r % 64);
                }
            }
            m
        });
        let low = match (heuristic, config.heuristics.low_probability) {
            (true, Some(lp)) => {
                let mut rows: Vec<usize> = (0..system.rows()).collect();
                rows.sort_by(|&a, &b| system.rhs()[a].total_cmp(&system.rhs()[b]).then(a.cmp(&b)));
                rows.into_iter().take(lp.rows).map(|r| (r, lp.cap)).collect()
            }
            _ => Vec::new(),
        };
        Self {
            group_of,
            masks,
            required,
            low,
        }
    }

    fn accepts(&self, support: &[usize], seen: &mut Vec<usize>) -> bool {
        if let Some(g) = &self.group_of {
            seen.clear();
            for &c in support {
                if seen.contains(&g[c]) {
                    return false;
                }
                seen.push(g[c]);
            }
        }
        if let Some(req) = &self.required {
            for (w, &need) in req.iter().enumerate() {
                let covered = support.iter().fold(0u64, |acc, &c| acc | self.masks[c][w]);
                if covered & need != need {
                    return false;
                }
            }
        }
        for &(r, cap) in &self.low {
            let hits = support
                .iter()
                .filter(|&&c| self.masks[c][r / 64] >> (r % 64) & 1 == 1)
                .count();
            if hits > cap {
                return false;
            }
        }
        true
    }
}

fn lexicographic(a: &ExtremePoint, b: &ExtremePoint) -> Ordering {
    a.probabilities
        .iter()
        .zip(&b.probabilities)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Sorts lexicographically and drops points within [`DEDUP_TOL`] of an
/// earlier kept point.
pub fn sort_dedup(mut points: Vec<ExtremePoint>) -> Vec<ExtremePoint> {
    points.sort_by(lexicographic);
    let mut kept: Vec<ExtremePoint> = Vec::new();
    for p in points {
        let dup = kept
            .iter()
            .rev()
            .any(|k| k.distance(&p) <= DEDUP_TOL);
        if !dup {
            kept.push(p);
        }
    }
    kept
}

fn run_range(
    system: &ConstraintSystem,
    filter: &Filter,
    start: u64,
    len: u64,
    n: usize,
    r: usize,
    scratch: &mut Scratch,
) -> Result<(Vec<ExtremePoint>, SearchStats)> {
    let mut stats = SearchStats::default();
    let mut points = Vec::new();
    let mut support = unrank_colex(start, n, r);
    let mut seen = Vec::with_capacity(r);
    for i in 0..len {
        if i > 0 && !next_colex(&mut support, n) {
            break;
        }
        stats.supports_visited += 1;
        if !filter.accepts(&support, &mut seen) {
            continue;
        }
        stats.supports_solved += 1;
        match system.solve_support_with(&support, scratch)? {
            Solved::Point(p) => {
                stats.raw_points += 1;
                points.push(p);
            }
            Solved::Infeasible(Infeasible::RankDeficient) => stats.rank_deficient += 1,
            Solved::Infeasible(Infeasible::Inconsistent) => stats.inconsistent += 1,
            Solved::Infeasible(Infeasible::Negative) => stats.negative += 1,
        }
    }
    Ok((points, stats))
}

fn search(system: &ConstraintSystem, config: &SearchConfig) -> Result<SolutionSet> {
    let n = system.columns();
    let r = match config.support_size {
        Some(s) if s > n => {
            return Err(Error::Config(format!(
                "support size {s} exceeds the {n} available states"
            )))
        }
        Some(0) => return Err(Error::Config("support size must be positive".into())),
        Some(s) => s,
        None => system.rank().min(n),
    };
    let total = binomial(n as u64, r as u64).ok_or(Error::TooLarge {
        what: "support enumeration",
        count: u128::MAX,
        cap: u128::from(u64::MAX),
    })?;
    let budget = config.max_supports.map_or(total, |b| b.min(total));
    let filter = Filter::new(system, config);
    let ranges: Vec<(u64, u64)> = (0..budget.div_ceil(CHUNK))
        .map(|i| (i * CHUNK, CHUNK.min(budget - i * CHUNK)))
        .collect();

    let parts: Vec<Result<(Vec<ExtremePoint>, SearchStats)>> = if config.parallel {
        ranges
            .par_iter()
            .map_init(Scratch::default, |scratch, &(s, l)| {
                run_range(system, &filter, s, l, n, r, scratch)
            })
            .collect()
    } else {
        let mut scratch = Scratch::default();
        ranges
            .iter()
            .map(|&(s, l)| run_range(system, &filter, s, l, n, r, &mut scratch))
            .collect()
    };

    let mut stats = SearchStats {
        supports_total: total,
        ..SearchStats::default()
    };
    let mut raw = Vec::new();
    for part in parts {
        let (pts, st) = part?;
        stats.add(&st);
        raw.extend(pts);
    }
    let mut points = sort_dedup(raw);
    let mut complete = budget == total
        && (config.mode == SearchMode::Exhaustive || config.heuristics.low_probability.is_none());
    if let Some(cap) = config.max_solutions {
        if points.len() > cap {
            points.truncate(cap);
            complete = false;
        }
    }
    Ok(SolutionSet {
        exogenous: system.exogenous().to_string(),
        domain_size: n,
        labels: system.col_labels().to_vec(),
        points,
        complete,
        stats,
    })
}

/// Tries every support of the configured size.
pub fn exhaustive_search(system: &ConstraintSystem, config: &SearchConfig) -> Result<SolutionSet> {
    let config = SearchConfig {
        mode: SearchMode::Exhaustive,
        ..config.clone()
    };
    search(system, &config)
}

/// Tries only supports with at most one column per indistinguishable
/// group, further filtered by the configured heuristics.
pub fn pruned_search(system: &ConstraintSystem, config: &SearchConfig) -> Result<SolutionSet> {
    let config = SearchConfig {
        mode: SearchMode::Heuristic,
        ..config.clone()
    };
    search(system, &config)
}

/// Runs the search selected by `config.mode`.
pub fn run_search(system: &ConstraintSystem, config: &SearchConfig) -> Result<SolutionSet> {
    search(system, config)
}

/// Evidence regime for the confounded exogenous variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    /// Observational joint only.
    SemiObservational,
    /// Observational joint plus `P(Y2 | do(Y1))`.
    SemiCombined,
    /// Experimental tables only.
    SemiExperimental,
    /// Every exogenous variable has a single child.
    Markovian,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::SemiObservational => "s-o",
            Regime::SemiCombined => "s-oe",
            Regime::SemiExperimental => "s-e",
            Regime::Markovian => "markov",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s-o" => Ok(Regime::SemiObservational),
            "s-oe" => Ok(Regime::SemiCombined),
            "s-e" => Ok(Regime::SemiExperimental),
            "markov" | "markovian" => Ok(Regime::Markovian),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The constraint system of every exogenous variable of `model` under
/// `regime`, keyed by exogenous id.
pub fn build_systems(
    model: &PartialScm,
    evidence: &Evidence,
    regime: Regime,
) -> Result<BTreeMap<String, ConstraintSystem>> {
    let mut out = BTreeMap::new();
    for exo in model.exogenous_ids() {
        let children = model.children_of(exo)?;
        let domain = CanonicalDomain::from_model(model, exo)?;
        let mismatch = |e: Error| match e {
            Error::MissingEvidence(what) => Error::RegimeMismatch {
                regime: regime.to_string(),
                reason: format!("evidence lacks {what}"),
            },
            other => other,
        };
        let system = match children.len() {
            0 => continue,
            1 => build_markovian_system(&domain, evidence).map_err(mismatch)?,
            2 => {
                let c = domain.children();
                if c[1].parents != [c[0].id.clone()] {
                    return Err(Error::Unsupported(format!(
                        "children of `{exo}` do not form a chain"
                    )));
                }
                match regime {
                    Regime::SemiObservational => build_semimarkovian_observational(&domain, evidence),
                    Regime::SemiCombined => build_semimarkovian_combined(&domain, evidence),
                    Regime::SemiExperimental => build_semimarkovian_experimental(&domain, evidence),
                    Regime::Markovian => {
                        return Err(Error::RegimeMismatch {
                            regime: regime.to_string(),
                            reason: format!("`{exo}` confounds two variables"),
                        })
                    }
                }
                .map_err(mismatch)?
            }
            n => {
                return Err(Error::Topology {
                    exogenous: exo.to_string(),
                    children: n,
                    expected: "direct search handles one child or a two-child chain; merge first",
                })
            }
        };
        out.insert(exo.to_string(), system);
    }
    Ok(out)
}

/// One solution set per exogenous variable of `model`.
pub fn solve_credal(
    model: &PartialScm,
    evidence: &Evidence,
    regime: Regime,
    config: &SearchConfig,
) -> Result<BTreeMap<String, SolutionSet>> {
    build_systems(model, evidence, regime)?
        .into_iter()
        .map(|(id, s)| run_search(&s, config).map(|set| (id, set)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::build_canonical_semimarkovian_chain;
    use crate::evidence::{EvidenceFile, ObservationalEntry};
    use crate::models;

    fn treatment_survival() -> ConstraintSystem {
        let m = models::treatment_survival();
        let d = CanonicalDomain::from_model(&m, "R").unwrap();
        let file = EvidenceFile {
            observational: vec![ObservationalEntry {
                targets: vec!["S".into()],
                context: vec!["T".into()],
                table: vec![0.462, 0.538, 0.323, 0.677],
            }],
            experimental: vec![],
        };
        build_markovian_system(&d, &Evidence::new(&m, file).unwrap()).unwrap()
    }

    #[test]
    fn colex_walks_every_combination_once() {
        let n = 7;
        let k = 3;
        let mut c = unrank_colex(0, n, k);
        let mut seen = vec![c.clone()];
        while next_colex(&mut c, n) {
            seen.push(c.clone());
        }
        assert_eq!(seen.len() as u64, binomial(7, 3).unwrap());
        for (rank, comb) in seen.iter().enumerate() {
            assert_eq!(&unrank_colex(rank as u64, n, k), comb);
        }
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), seen.len());
    }

    #[test]
    fn treatment_survival_has_two_vertices() {
        let set = exhaustive_search(&treatment_survival(), &SearchConfig::default()).unwrap();
        assert!(set.complete);
        assert_eq!(set.points.len(), 2);
        let expect = [[0.0, 0.462, 0.323, 0.215], [0.323, 0.139, 0.0, 0.538]];
        for (p, e) in set.points.iter().zip(expect) {
            for (a, b) in p.probabilities.iter().zip(e) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn groups_of_observational_chain() {
        let m = models::confounded_chain();
        let d = build_canonical_semimarkovian_chain(&m, ["Y1", "Y2"]).unwrap();
        let file = EvidenceFile {
            observational: vec![ObservationalEntry {
                targets: vec!["Y1".into(), "Y2".into()],
                context: vec!["X".into()],
                table: vec![0.25; 8],
            }],
            experimental: vec![],
        };
        let s = build_semimarkovian_observational(&d, &Evidence::new(&m, file).unwrap()).unwrap();
        let nontrivial: Vec<Vec<usize>> = group_indistinguishable(&s)
            .into_iter()
            .filter(|g| g.len() > 1)
            .collect();
        assert_eq!(nontrivial, vec![vec![0, 1], vec![2, 3], vec![12, 14], vec![13, 15]]);
    }

    #[test]
    fn identity_matrix_groups_are_singletons() {
        let m: Vec<u8> = (0..9).map(|i| u8::from(i % 4 == 0)).collect();
        let s = ConstraintSystem::new("U", 3, m, vec![0.2, 0.3, 0.5], None).unwrap();
        assert!(group_indistinguishable(&s).iter().all(|g| g.len() == 1));
    }

    #[test]
    fn low_probability_budget_zero_empties_the_set() {
        let cfg = SearchConfig::heuristic(Heuristics {
            coverage: false,
            low_probability: Some(LowProbability { rows: 1, cap: 0 }),
        });
        let set = pruned_search(&treatment_survival(), &cfg).unwrap();
        assert!(set.points.is_empty());
        assert!(!set.complete);
    }

    #[test]
    fn budget_marks_incomplete() {
        let cfg = SearchConfig {
            max_supports: Some(1),
            ..SearchConfig::default()
        };
        let set = exhaustive_search(&treatment_survival(), &cfg).unwrap();
        assert!(!set.complete);
        assert_eq!(set.stats.supports_visited, 1);
    }

    #[test]
    fn oversized_support_is_a_config_error() {
        let cfg = SearchConfig {
            support_size: Some(5),
            ..SearchConfig::default()
        };
        assert!(matches!(exhaustive_search(&treatment_survival(), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn inconsistent_evidence_gives_empty_set() {
        let s = treatment_survival().with_rhs(vec![0.5, 0.5, 0.9, 0.3]).unwrap();
        let set = exhaustive_search(&s, &SearchConfig::default()).unwrap();
        assert!(set.points.is_empty());
        assert!(set.complete);
    }
}
