use thiserror::Error;

/// Errors produced by the analysis, synthesis and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("negative hold duration {0} s")]
    NegativeDuration(f64),

    #[error("linear system is inconsistent (residual {residual:.3e} > {bound:.3e})")]
    InconsistentSystem { residual: f64, bound: f64 },

    #[error("sampling ratio {ratio} has no rational approximation with denominator <= {max_denominator}")]
    IrrationalRatio { ratio: f64, max_denominator: i64 },

    #[error("invalid timing: {0}")]
    InvalidTiming(String),

    #[error("sample index must be >= 1")]
    ZeroSampleIndex,

    #[error("normalized disruption time {0} is outside (0, 1]")]
    DisruptionTimeOutOfRange(String),

    #[error("no input redundancy: ker CPi is trivial")]
    NoRedundancy,

    #[error("B_d is rank deficient (rank {rank} < {p})")]
    RankDeficientBd { rank: usize, p: usize },

    #[error("Phi* annihilates ker CPi: no disruptive direction exists")]
    InfeasibleEta,

    #[error("||Phi* eta|| is numerically zero ({0:.3e})")]
    DegenerateDisruption(f64),

    #[error("threshold H_{k} = {value} must be strictly positive")]
    NonPositiveThreshold { k: usize, value: f64 },

    #[error("probe time {t} s is outside the trace span [0, {end}]")]
    ProbeOutOfSpan { t: f64, end: f64 },

    #[error("invalid tolerances: {0}")]
    InvalidTolerances(String),

    #[error("scenario field `{field}`: {message}")]
    Scenario { field: String, message: String },

    #[error("attack infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            field: field.into(),
            message: message.into(),
        }
    }
}
