pub mod canonical;
pub mod error;
pub mod models;
pub mod scm;
pub mod table;
pub mod evidence;
pub mod system;
pub mod search;
pub mod approx;
pub mod oracle;
pub mod query;
pub mod pipeline;
pub mod harness;

pub use canonical::CanonicalDomain;
pub use error::{Error, Result};
pub use evidence::{Evidence, EvidenceFile};
pub use harness::{generate_instance, run_experiment, ExperimentConfig, ExperimentResult, ExperimentRow};
pub use pipeline::{solve, Method, Solution};
pub use query::{bound_query, Query, QueryInterval};
pub use scm::PartialScm;
pub use search::{solve_credal, Regime, SearchConfig, SearchMode, SolutionSet};
pub use system::{ConstraintSystem, ExtremePoint};
