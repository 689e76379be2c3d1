use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dccc_core::approx::{build_state_mapping, endogenous_merge};
use dccc_core::harness::{generate_instance, generate_raw_instance, instance_seed, ExperimentConfig};
use dccc_core::pipeline::{confounder, lp_query_interval, solve, Method};
use dccc_core::search::{build_systems, Heuristics, LowProbability, SearchConfig, SearchMode, SolutionSet};
use dccc_core::{CanonicalDomain, Evidence, PartialScm, Query};

#[derive(Parser)]
#[command(name = "dccc", version, about = "Credal-set enumeration and counterfactual bounds for discrete causal models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the vertices of every exogenous credal set.
    Solve {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bound a query over the enumerated credal sets.
    Bound {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        search: SearchArgs,
        /// `pns:<cause>:<effect>[:x,x',y,y']` or `do:<cause>:<effect>[:x,y]`.
        #[arg(long)]
        query: Query,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare enumeration bounds with the exact LP.
    OracleCheck {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        query: Query,
        #[arg(long, default_value_t = 1e-7)]
        tolerance: f64,
    },
    /// Run the batch experiment and write its CSV files.
    Experiment {
        #[arg(long = "n", default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "s-o,s-oe,s-e,mm-o,ms-o")]
        regimes: Vec<Method>,
        #[arg(long, value_delimiter = ',', default_value = "pns:X:Y1,pns:X:Y2,pns:Y1:Y2")]
        queries: Vec<Query>,
        /// Draw evidence slices independently instead of from a sampled model.
        #[arg(long)]
        raw_tables: bool,
        #[arg(long)]
        serial: bool,
        /// Leave the wallclock column empty so reruns are byte-identical.
        #[arg(long)]
        no_wallclock: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the model and evidence of one generated instance.
    Generate {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Use the seed of this instance of an experiment run.
        #[arg(long)]
        index: Option<u64>,
        #[arg(long)]
        raw_tables: bool,
        /// Keep the sampled priors in the model file.
        #[arg(long)]
        with_priors: bool,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        evidence_out: PathBuf,
    },
    /// Dump a constraint system as CSV.
    System {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        exogenous: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the correspondence between merged and original exogenous states.
    Mapping {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        exogenous: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    evidence: PathBuf,
    /// s-o, s-oe, s-e, markov, mm-o, ms-o or mm-exact.
    #[arg(long)]
    regime: Method,
}

impl Input {
    fn load(&self) -> Result<(PartialScm, Evidence)> {
        let model = PartialScm::load(&self.model).with_context(|| format!("reading {}", self.model.display()))?;
        let evidence =
            Evidence::load(&model, &self.evidence).with_context(|| format!("reading {}", self.evidence.display()))?;
        Ok((model, evidence))
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value = "exhaustive", value_parser = ["exhaustive", "heuristic"])]
    mode: String,
    /// Skip supports leaving a positive constraint uncovered.
    #[arg(long)]
    coverage: bool,
    /// `k,cap`: at most `cap` selected columns on each of the `k` lowest rows.
    #[arg(long)]
    lowprob: Option<String>,
    #[arg(long)]
    support_size: Option<usize>,
    #[arg(long)]
    max_solutions: Option<usize>,
    #[arg(long)]
    max_supports: Option<u64>,
    #[arg(long)]
    serial: bool,
}

impl SearchArgs {
    fn config(&self) -> Result<SearchConfig> {
        let low_probability = match &self.lowprob {
            None => None,
            Some(raw) => {
                let (k, cap) = raw.split_once(',').context("--lowprob expects `k,cap`")?;
                Some(LowProbability {
                    rows: k.trim().parse().context("--lowprob row count")?,
                    cap: cap.trim().parse().context("--lowprob cap")?,
                })
            }
        };
        let mode = if self.mode == "heuristic" {
            SearchMode::Heuristic
        } else {
            SearchMode::Exhaustive
        };
        if mode == SearchMode::Exhaustive && (self.coverage || low_probability.is_some()) {
            bail!("--coverage and --lowprob require --mode heuristic");
        }
        Ok(SearchConfig {
            mode,
            support_size: self.support_size,
            heuristics: Heuristics {
                coverage: self.coverage,
                low_probability,
            },
            max_solutions: self.max_solutions,
            max_supports: self.max_supports,
            parallel: !self.serial,
        })
    }
}

#[derive(Serialize)]
struct SetReport {
    domain_size: usize,
    labels: Vec<usize>,
    complete: bool,
    supports_total: u64,
    supports_visited: u64,
    vertices: Vec<Vec<f64>>,
}

impl From<&SolutionSet> for SetReport {
    fn from(s: &SolutionSet) -> Self {
        Self {
            domain_size: s.domain_size,
            labels: s.labels.clone(),
            complete: s.complete,
            supports_total: s.stats.supports_total,
            supports_visited: s.stats.supports_visited,
            vertices: s.points.iter().map(|p| p.probabilities.clone()).collect(),
        }
    }
}

#[derive(Serialize)]
struct SolveReport {
    regime: String,
    exogenous: BTreeMap<String, SetReport>,
}

#[derive(Serialize)]
struct BoundReport {
    query: String,
    regime: String,
    lower: f64,
    upper: f64,
    complete: bool,
    vertex_counts: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct OracleReport {
    query: String,
    regime: String,
    dccc: [f64; 2],
    lp: [f64; 2],
    tolerance: f64,
    pass: bool,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { input, search, out } => {
            let (model, evidence) = input.load()?;
            let solution = solve(&model, &evidence, input.regime, &search.config()?)?;
            let report = SolveReport {
                regime: input.regime.to_string(),
                exogenous: solution.sets.iter().map(|(k, v)| (k.clone(), v.into())).collect(),
            };
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)
        }
        Command::Bound {
            input,
            search,
            query,
            out,
        } => {
            let (model, evidence) = input.load()?;
            let solution = solve(&model, &evidence, input.regime, &search.config()?)?;
            let iv = solution.bound(&query)?;
            let report = BoundReport {
                query: query.to_string(),
                regime: input.regime.to_string(),
                lower: iv.lower,
                upper: iv.upper,
                complete: solution.complete(),
                vertex_counts: solution.sets.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
            };
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)
        }
        Command::OracleCheck { input, query, tolerance } => {
            let (model, evidence) = input.load()?;
            let config = SearchConfig::exhaustive();
            let iv = solve(&model, &evidence, input.regime, &config)?.bound(&query)?;
            let (lo, hi) = lp_query_interval(&model, &evidence, input.regime, &query, &config)?;
            let pass = (iv.lower - lo).abs() <= tolerance && (iv.upper - hi).abs() <= tolerance;
            let report = OracleReport {
                query: query.to_string(),
                regime: input.regime.to_string(),
                dccc: [iv.lower, iv.upper],
                lp: [lo, hi],
                tolerance,
                pass,
            };
            emit(None, &serde_json::to_string_pretty(&report)?)?;
            if !pass {
                bail!("enumeration and LP bounds disagree");
            }
            Ok(())
        }
        Command::Experiment {
            n,
            seed,
            regimes,
            queries,
            raw_tables,
            serial,
            no_wallclock,
            out,
        } => {
            let mut config = ExperimentConfig::standard(n, seed);
            config.regimes = regimes;
            config.queries = queries;
            config.raw_tables = raw_tables;
            config.parallel = !serial;
            let start = std::time::Instant::now();
            let result = dccc_core::run_experiment(&config)?;
            result.write_all(&out, !no_wallclock)?;
            log::info!("{} rows in {:.1} s", result.rows.len(), start.elapsed().as_secs_f64());
            eprintln!(
                "wrote {} rows to {} in {:.1} s",
                result.rows.len(),
                out.display(),
                start.elapsed().as_secs_f64()
            );
            Ok(())
        }
        Command::Generate {
            seed,
            index,
            raw_tables,
            with_priors,
            model_out,
            evidence_out,
        } => {
            let seed = index.map_or(seed, |i| instance_seed(seed, i));
            let instance = if raw_tables {
                generate_raw_instance(seed)?
            } else {
                generate_instance(seed)?
            };
            let model = if with_priors {
                instance.model.clone()
            } else {
                instance.skeleton()
            };
            emit(Some(&model_out), &model.to_json_string()?)?;
            emit(Some(&evidence_out), &instance.evidence.file().to_json_string()?)
        }
        Command::System { input, exogenous, out } => {
            let (model, evidence) = input.load()?;
            let Some(regime) = input.regime.regime() else {
                bail!("system dumps are available for s-o, s-oe, s-e and markov");
            };
            let systems = build_systems(&model, &evidence, regime)?;
            let system = systems
                .get(&exogenous)
                .with_context(|| format!("no system for `{exogenous}`"))?;
            let mut buf = Vec::new();
            system.write_csv(&mut buf)?;
            emit(out.as_deref(), &String::from_utf8(buf)?)
        }
        Command::Mapping { model, exogenous, out } => {
            let model = PartialScm::load(&model)?;
            let exo = match exogenous {
                Some(e) => e,
                None => confounder(&model)?.context("the model has no confounded exogenous variable")?,
            };
            let (merged, plan) = endogenous_merge(&model, &exo)?;
            let semi = CanonicalDomain::from_model(&model, &exo)?;
            let fused = CanonicalDomain::from_model(&merged, &plan.merged_exogenous)?;
            let mapping = build_state_mapping(&semi, &fused)?;
            let mut buf = Vec::new();
            mapping.write_csv(&mut buf)?;
            emit(out.as_deref(), &String::from_utf8(buf)?)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
