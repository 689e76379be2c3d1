//! Random instance generation and the batch experiment over regimes and
//! queries.
//!
//! Every instance is a fully specified confounded chain whose priors are
//! drawn from a flat Dirichlet. Evidence tables are computed exactly from
//! it, so observational and experimental tables always agree with each
//! other. The raw-table variant instead draws every conditional slice
//! independently and may be infeasible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evidence::{Evidence, EvidenceFile, ExperimentalEntry, ObservationalEntry};
use crate::models::confounded_chain_with;
use crate::pipeline::{solve, Method};
use crate::query::{Query, QueryInterval};
use crate::scm::PartialScm;
use crate::search::SearchConfig;
use crate::table::{evaluate_full_model, Conditioning};

/// Tolerance used when classifying interval containment.
pub const CONTAINMENT_TOL: f64 = 1e-9;

/// Mixes a base seed with an instance index.
pub fn instance_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn flat_dirichlet(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// A sampled model and the evidence it implies.
#[derive(Debug, Clone)]
pub struct Instance {
    /// The generating model, priors included.
    pub model: PartialScm,
    pub evidence: Evidence,
}

impl Instance {
    pub fn skeleton(&self) -> PartialScm {
        self.model.without_priors()
    }
}

/// Samples a binary confounded chain and derives its evidence.
pub fn generate_instance(seed: u64) -> Result<Instance> {
    generate_instance_with(seed, (2, 2, 2))
}

/// Like [`generate_instance`] with cardinalities for `X`, `Y1` and `Y2`.
pub fn generate_instance_with(seed: u64, cards: (usize, usize, usize)) -> Result<Instance> {
    let skeleton = confounded_chain_with(cards.0, cards.1, cards.2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut priors = BTreeMap::new();
    for id in skeleton.exogenous_ids() {
        let n = skeleton.cardinality(id)?;
        priors.insert(id.to_string(), flat_dirichlet(&mut rng, n));
    }
    let model = skeleton.with_priors(priors)?;
    let file = derive_evidence(&model)?;
    let evidence = Evidence::new(&skeleton, file)?;
    Ok(Instance { model, evidence })
}

/// Evidence of a fully specified chain: `P(X)`, `P(Y1,Y2|X)`,
/// `P(Y1|do(X))` and `P(Y2|do(Y1))`.
pub fn derive_evidence(model: &PartialScm) -> Result<EvidenceFile> {
    let joint = evaluate_full_model(model, &["X", "Y1", "Y2"], &Conditioning::default())?;
    let px = joint.marginal(&["X"])?.values;
    let py = joint.conditional(&["Y1", "Y2"], &["X"])?;
    let interventional = |cause: &str, effect: &str| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for state in 0..model.cardinality(cause)? {
            let c = Conditioning::default().intervene(cause, state);
            out.extend(evaluate_full_model(model, &[effect], &c)?.values);
        }
        Ok(out)
    };
    Ok(EvidenceFile {
        observational: vec![
            ObservationalEntry {
                targets: vec!["X".into()],
                context: vec![],
                table: px,
            },
            ObservationalEntry {
                targets: vec!["Y1".into(), "Y2".into()],
                context: vec!["X".into()],
                table: py,
            },
        ],
        experimental: vec![
            ExperimentalEntry {
                target: "Y1".into(),
                do_vars: vec!["X".into()],
                table: interventional("X", "Y1")?,
            },
            ExperimentalEntry {
                target: "Y2".into(),
                do_vars: vec!["Y1".into()],
                table: interventional("Y1", "Y2")?,
            },
        ],
    })
}

/// Draws every evidence slice independently from a flat Dirichlet.
pub fn generate_raw_instance(seed: u64) -> Result<Instance> {
    let skeleton = confounded_chain_with(2, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slices = |count: usize, width: usize| -> Vec<f64> {
        (0..count).flat_map(|_| flat_dirichlet(&mut rng, width)).collect()
    };
    let file = EvidenceFile {
        observational: vec![
            ObservationalEntry {
                targets: vec!["X".into()],
                context: vec![],
                table: slices(1, 2),
            },
            ObservationalEntry {
                targets: vec!["Y1".into(), "Y2".into()],
                context: vec!["X".into()],
                table: slices(2, 4),
            },
        ],
        experimental: vec![
            ExperimentalEntry {
                target: "Y1".into(),
                do_vars: vec!["X".into()],
                table: slices(2, 2),
            },
            ExperimentalEntry {
                target: "Y2".into(),
                do_vars: vec!["Y1".into()],
                table: slices(2, 2),
            },
        ],
    };
    let evidence = Evidence::new(&skeleton, file)?;
    Ok(Instance {
        model: skeleton,
        evidence,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_models: usize,
    pub seed: u64,
    pub regimes: Vec<Method>,
    pub queries: Vec<Query>,
    pub search: SearchConfig,
    pub raw_tables: bool,
    pub parallel: bool,
}

impl ExperimentConfig {
    /// All five regimes and the three PNS queries of the chain.
    pub fn standard(n_models: usize, seed: u64) -> Self {
        ExperimentConfig {
            n_models,
            seed,
            regimes: vec![Method::SO, Method::SOE, Method::SE, Method::MMO, Method::MSO],
            queries: vec![Query::pns("X", "Y1"), Query::pns("X", "Y2"), Query::pns("Y1", "Y2")],
            search: SearchConfig::exhaustive().serial(),
            raw_tables: false,
            parallel: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(Error::Config("n_models must be at least 1".into()));
        }
        if self.queries.is_empty() {
            return Err(Error::Config("at least one query is required".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("at least one regime is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    NotComputable,
    Infeasible,
    Error,
}

impl RowStatus {
    pub fn name(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::NotComputable => "not_computable",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub model_index: usize,
    pub regime: Method,
    pub query: String,
    pub interval: Option<(f64, f64)>,
    pub wallclock_ms: f64,
    pub n_vertices: usize,
    pub complete: bool,
    pub status: RowStatus,
    pub message: String,
}

impl ExperimentRow {
    pub fn lower(&self) -> Option<f64> {
        self.interval.map(|i| i.0)
    }

    pub fn upper(&self) -> Option<f64> {
        self.interval.map(|i| i.1)
    }

    pub fn length(&self) -> Option<f64> {
        self.interval.map(|(l, u)| u - l)
    }
}

fn classify_error(e: &Error) -> RowStatus {
    match e {
        Error::NotComputable(_) => RowStatus::NotComputable,
        Error::InfeasibleEvidence(_) => RowStatus::Infeasible,
        _ => RowStatus::Error,
    }
}

fn run_instance(config: &ExperimentConfig, index: usize, search: &SearchConfig) -> Vec<ExperimentRow> {
    let seed = instance_seed(config.seed, index as u64);
    let instance = if config.raw_tables {
        generate_raw_instance(seed)
    } else {
        generate_instance(seed)
    };
    let mut rows = Vec::with_capacity(config.regimes.len() * config.queries.len());
    let failed = |regime: Method, query: &Query, e: &Error, ms: f64| ExperimentRow {
        model_index: index,
        regime,
        query: query.label(),
        interval: None,
        wallclock_ms: ms,
        n_vertices: 0,
        complete: false,
        status: classify_error(e),
        message: e.to_string(),
    };
    let instance = match instance {
        Ok(i) => i,
        Err(e) => {
            for &regime in &config.regimes {
                for q in &config.queries {
                    rows.push(failed(regime, q, &e, 0.0));
                }
            }
            return rows;
        }
    };
    let skeleton = instance.skeleton();
    for &regime in &config.regimes {
        let start = Instant::now();
        let solved = solve(&skeleton, &instance.evidence, regime, search);
        let solve_ms = start.elapsed().as_secs_f64() * 1e3;
        let solution = match solved {
            Ok(s) => s,
            Err(e) => {
                for q in &config.queries {
                    rows.push(failed(regime, q, &e, solve_ms));
                }
                continue;
            }
        };
        for q in &config.queries {
            let start = Instant::now();
            let bounded: Result<QueryInterval> = solution.bound(q);
            let ms = solve_ms + start.elapsed().as_secs_f64() * 1e3;
            rows.push(match bounded {
                Ok(iv) => ExperimentRow {
                    model_index: index,
                    regime,
                    query: q.label(),
                    interval: Some((iv.lower, iv.upper)),
                    wallclock_ms: ms,
                    n_vertices: solution.vertex_count(),
                    complete: solution.complete(),
                    status: RowStatus::Ok,
                    message: String::new(),
                },
                Err(e) => ExperimentRow {
                    n_vertices: solution.vertex_count(),
                    complete: solution.complete(),
                    ..failed(regime, q, &e, ms)
                },
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthSummary {
    pub regime: Method,
    pub query: String,
    pub n_ok: usize,
    pub n_not_computable: usize,
    pub n_infeasible: usize,
    pub n_error: usize,
    /// Means over the rows with an interval; `None` when there are none.
    pub mean_lower: Option<f64>,
    pub mean_upper: Option<f64>,
    pub mean_length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Equal,
    Subset,
    Superset,
    None,
}

impl Containment {
    pub fn classify(left: (f64, f64), right: (f64, f64), tol: f64) -> Self {
        let inside = |a: (f64, f64), b: (f64, f64)| a.0 >= b.0 - tol && a.1 <= b.1 + tol;
        match (inside(left, right), inside(right, left)) {
            (true, true) => Containment::Equal,
            (true, false) => Containment::Subset,
            (false, true) => Containment::Superset,
            (false, false) => Containment::None,
        }
    }
}

/// Counts of how the `left` interval relates to the `right` one.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentSummary {
    pub query: String,
    pub left: Method,
    pub right: Method,
    pub n: usize,
    pub equal: usize,
    pub subset: usize,
    pub superset: usize,
    pub none: usize,
}

impl ContainmentSummary {
    /// Instances where `left` is not inside `right`.
    pub fn not_within(&self) -> usize {
        self.superset + self.none
    }

    pub fn pct(&self, count: usize) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub model_index: usize,
    pub regime: Method,
    pub query: String,
    pub lower: f64,
    pub upper: f64,
    pub reference_lower: f64,
    pub reference_upper: f64,
    pub rmse: f64,
}

/// Regime pairs reported in the containment summary.
pub const CONTAINMENT_PAIRS: [(Method, Method); 5] = [
    (Method::SOE, Method::SO),
    (Method::SOE, Method::SE),
    (Method::SO, Method::SE),
    (Method::SO, Method::MMO),
    (Method::MSO, Method::SO),
];

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
    pub lengths: Vec<LengthSummary>,
    pub containment: Vec<ContainmentSummary>,
    pub rmse: Vec<RmseRow>,
}

impl ExperimentResult {
    pub fn row(&self, index: usize, regime: Method, query: &str) -> Option<&ExperimentRow> {
        self.rows
            .iter()
            .find(|r| r.model_index == index && r.regime == regime && r.query == query)
    }

    pub fn containment_for(&self, query: &str, left: Method, right: Method) -> Option<&ContainmentSummary> {
        self.containment
            .iter()
            .find(|c| c.query == query && c.left == left && c.right == right)
    }

    pub fn length_for(&self, regime: Method, query: &str) -> Option<&LengthSummary> {
        self.lengths.iter().find(|l| l.regime == regime && l.query == query)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let rows: Vec<ExperimentRow> = if config.parallel {
        let search = config.search.clone().serial();
        (0..config.n_models)
            .into_par_iter()
            .flat_map_iter(|i| run_instance(config, i, &search))
            .collect()
    } else {
        let search = config.search.clone().serial();
        (0..config.n_models).flat_map(|i| run_instance(config, i, &search)).collect()
    };
    let labels: Vec<String> = config.queries.iter().map(Query::label).collect();
    let lengths = summarize_lengths(&rows, &config.regimes, &labels);
    let containment = summarize_containment(&rows, &config.regimes, &labels);
    let rmse = summarize_rmse(&rows, &config.regimes);
    Ok(ExperimentResult {
        config: config.clone(),
        rows,
        lengths,
        containment,
        rmse,
    })
}

type RowKey<'a> = (usize, Method, &'a str);

fn index_rows(rows: &[ExperimentRow]) -> BTreeMap<RowKey<'_>, (f64, f64)> {
    rows.iter()
        .filter_map(|r| r.interval.map(|iv| ((r.model_index, r.regime, r.query.as_str()), iv)))
        .collect()
}

pub fn summarize_lengths(rows: &[ExperimentRow], regimes: &[Method], queries: &[String]) -> Vec<LengthSummary> {
    let mut out = Vec::new();
    for &regime in regimes {
        for q in queries {
            let mut s = LengthSummary {
                regime,
                query: q.clone(),
                n_ok: 0,
                n_not_computable: 0,
                n_infeasible: 0,
                n_error: 0,
                mean_lower: None,
                mean_upper: None,
                mean_length: None,
            };
            let (mut lo, mut hi, mut len) = (0.0, 0.0, 0.0);
            for r in rows.iter().filter(|r| r.regime == regime && &r.query == q) {
                match r.status {
                    RowStatus::Ok => {
                        let (l, u) = r.interval.unwrap_or((0.0, 0.0));
                        s.n_ok += 1;
                        lo += l;
                        hi += u;
                        len += u - l;
                    }
                    RowStatus::NotComputable => s.n_not_computable += 1,
                    RowStatus::Infeasible => s.n_infeasible += 1,
                    RowStatus::Error => s.n_error += 1,
                }
            }
            if s.n_ok > 0 {
                let n = s.n_ok as f64;
                s.mean_lower = Some(lo / n);
                s.mean_upper = Some(hi / n);
                s.mean_length = Some(len / n);
            }
            out.push(s);
        }
    }
    out
}

pub fn summarize_containment(rows: &[ExperimentRow], regimes: &[Method], queries: &[String]) -> Vec<ContainmentSummary> {
    let index = index_rows(rows);
    let instances: Vec<usize> = {
        let mut v: Vec<usize> = rows.iter().map(|r| r.model_index).collect();
        v.dedup();
        v
    };
    let mut out = Vec::new();
    for q in queries {
        for &(left, right) in &CONTAINMENT_PAIRS {
            if !regimes.contains(&left) || !regimes.contains(&right) {
                continue;
            }
            let mut s = ContainmentSummary {
                query: q.clone(),
                left,
                right,
                n: 0,
                equal: 0,
                subset: 0,
                superset: 0,
                none: 0,
            };
            for &i in &instances {
                let (Some(&a), Some(&b)) = (index.get(&(i, left, q.as_str())), index.get(&(i, right, q.as_str()))) else {
                    continue;
                };
                s.n += 1;
                match Containment::classify(a, b, CONTAINMENT_TOL) {
                    Containment::Equal => s.equal += 1,
                    Containment::Subset => s.subset += 1,
                    Containment::Superset => s.superset += 1,
                    Containment::None => s.none += 1,
                }
            }
            out.push(s);
        }
    }
    out
}

/// Endpoint error of each approximation against the direct observational
/// regime.
pub fn summarize_rmse(rows: &[ExperimentRow], regimes: &[Method]) -> Vec<RmseRow> {
    if !regimes.contains(&Method::SO) {
        return Vec::new();
    }
    let index = index_rows(rows);
    let approximations: Vec<Method> = regimes
        .iter()
        .copied()
        .filter(|m| matches!(m, Method::MMO | Method::MSO))
        .collect();
    let mut out = Vec::new();
    for r in rows {
        if !approximations.contains(&r.regime) {
            continue;
        }
        let (Some((l, u)), Some(&(rl, ru))) = (r.interval, index.get(&(r.model_index, Method::SO, r.query.as_str())))
        else {
            continue;
        };
        out.push(RmseRow {
            model_index: r.model_index,
            regime: r.regime,
            query: r.query.clone(),
            lower: l,
            upper: u,
            reference_lower: rl,
            reference_upper: ru,
            rmse: (((l - rl).powi(2) + (u - ru).powi(2)) / 2.0).sqrt(),
        });
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column sets of the four output files.
pub const ROWS_HEADER: [&str; 11] = [
    "model_index",
    "regime",
    "query",
    "lower",
    "upper",
    "length",
    "wallclock_ms",
    "n_vertices",
    "complete",
    "status",
    "message",
];
pub const LENGTHS_HEADER: [&str; 9] = [
    "regime",
    "query",
    "n_ok",
    "n_not_computable",
    "n_infeasible",
    "n_error",
    "mean_lower",
    "mean_upper",
    "mean_length",
];
pub const CONTAINMENT_HEADER: [&str; 13] = [
    "query",
    "left",
    "right",
    "n",
    "equal",
    "subset",
    "superset",
    "none",
    "pct_equal",
    "pct_subset",
    "pct_superset",
    "pct_none",
    "pct_not_within",
];
pub const RMSE_HEADER: [&str; 8] = [
    "model_index",
    "regime",
    "query",
    "lower",
    "upper",
    "lower_s_o",
    "upper_s_o",
    "rmse=sqrt(((lower-lower_s_o)^2+(upper-upper_s_o)^2)/2)",
];

impl ExperimentResult {
    /// Writes `rows.csv`; `wallclock` false leaves that column empty.
    pub fn write_rows<W: Write>(&self, out: W, wallclock: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ROWS_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.model_index.to_string(),
                r.regime.label(),
                r.query.clone(),
                opt(r.lower()),
                opt(r.upper()),
                opt(r.length()),
                if wallclock { format!("{:.3}", r.wallclock_ms) } else { String::new() },
                r.n_vertices.to_string(),
                r.complete.to_string(),
                r.status.name().to_string(),
                r.message.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_lengths<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LENGTHS_HEADER)?;
        for s in &self.lengths {
            w.write_record([
                s.regime.label(),
                s.query.clone(),
                s.n_ok.to_string(),
                s.n_not_computable.to_string(),
                s.n_infeasible.to_string(),
                s.n_error.to_string(),
                opt(s.mean_lower),
                opt(s.mean_upper),
                opt(s.mean_length),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_containment<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CONTAINMENT_HEADER)?;
        for s in &self.containment {
            w.write_record([
                s.query.clone(),
                s.left.label(),
                s.right.label(),
                s.n.to_string(),
                s.equal.to_string(),
                s.subset.to_string(),
                s.superset.to_string(),
                s.none.to_string(),
                format!("{:.1}", s.pct(s.equal)),
                format!("{:.1}", s.pct(s.subset)),
                format!("{:.1}", s.pct(s.superset)),
                format!("{:.1}", s.pct(s.none)),
                format!("{:.1}", s.pct(s.not_within())),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_rmse<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RMSE_HEADER)?;
        for r in &self.rmse {
            w.write_record([
                r.model_index.to_string(),
                r.regime.label(),
                r.query.clone(),
                r.lower.to_string(),
                r.upper.to_string(),
                r.reference_lower.to_string(),
                r.reference_upper.to_string(),
                r.rmse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the four CSV files into `dir`, creating it if needed.
    pub fn write_all(&self, dir: impl AsRef<Path>, wallclock: bool) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.write_rows(fs::File::create(dir.join("rows.csv"))?, wallclock)?;
        self.write_lengths(fs::File::create(dir.join("summary_lengths.csv"))?)?;
        self.write_containment(fs::File::create(dir.join("summary_containment.csv"))?)?;
        self.write_rmse(fs::File::create(dir.join("summary_rmse.csv"))?)?;
        Ok(())
    }

    /// The four files as strings, wallclock column emptied.
    pub fn deterministic_outputs(&self) -> Result<[String; 4]> {
        let render = |f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<String> {
            let mut buf = Vec::new();
            f(&mut buf)?;
            String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
        };
        Ok([
            render(&|b| self.write_rows(b, false))?,
            render(&|b| self.write_lengths(b))?,
            render(&|b| self.write_containment(b))?,
            render(&|b| self.write_rmse(b))?,
        ])
    }
}
