use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("`{0}` is not an endogenous variable")]
    NotEndogenous(String),

    #[error("`{0}` is not an exogenous variable")]
    NotExogenous(String),

    #[error("exogenous `{exogenous}` has {children} endogenous children; {expected}")]
    Topology {
        exogenous: String,
        children: usize,
        expected: &'static str,
    },

    #[error("unsupported topology: {0}")]
    Unsupported(String),

    #[error("exogenous `{exogenous}` has no state {state}")]
    StateOutOfRange { exogenous: String, state: usize },

    #[error("reduction would remove every state of `{0}`")]
    EmptyDomain(String),

    #[error("conditioning event has zero probability")]
    ZeroProbability,

    #[error("missing prior for exogenous `{0}`")]
    MissingPrior(String),

    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),

    #[error("missing evidence: {0}")]
    MissingEvidence(String),

    #[error("table shape mismatch: expected {expected} entries, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("support index {index} out of range for {columns} columns")]
    SupportOutOfRange { index: usize, columns: usize },

    #[error("invalid search configuration: {0}")]
    Config(String),

    #[error("regime {regime} does not apply: {reason}")]
    RegimeMismatch { regime: String, reason: String },

    #[error("no exogenous distribution is consistent with the evidence for `{0}`")]
    InfeasibleEvidence(String),

    #[error("query is not computable on this model: {0}")]
    NotComputable(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("{what} needs {count} combinations, above the cap of {cap}")]
    TooLarge { what: &'static str, count: u128, cap: u128 },

    #[error("merged point places mass {mass:e} on forbidden state {state}")]
    ForbiddenMass { state: usize, mass: f64 },

    #[error("domain signatures differ: {0}")]
    SignatureMismatch(String),

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
