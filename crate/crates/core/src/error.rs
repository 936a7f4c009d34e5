use std::path::PathBuf;

use thiserror::Error;

use crate::graph::GraphViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("graphs disagree on node count: expected {expected}, found {found}")]
    NodeCountMismatch { expected: usize, found: usize },

    #[error("invalid digraph: {}", format_violations(.0))]
    InvalidGraph(Vec<GraphViolation>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("matrix of order {0} exceeds the dense eigenvalue limit of 16")]
    MatrixTooLarge(usize),

    #[error("adaptation gain matrix is singular")]
    SingularGain,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("step [{t}, {}] straddles the switching instant {switch_time}", t + dt)]
    StepStraddlesSwitch { t: f64, dt: f64, switch_time: f64 },

    #[error("state became non-finite at t = {t}")]
    BlowUp { t: f64 },

    #[error("assumption not satisfied: {0} (set sim.waive_assumptions to run anyway)")]
    AssumptionViolated(String),

    #[error("rate fit needs at least {required} samples above the floor, found {found}")]
    InsufficientSamples { found: usize, required: usize },

    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn for_agent(self, agent: usize) -> Self {
        Error::Agent {
            agent,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the integrated state leaving the finite
    /// range, as opposed to bad inputs.
    pub fn is_runtime_blowup(&self) -> bool {
        match self {
            Error::BlowUp { .. } => true,
            Error::Agent { source, .. } => source.is_runtime_blowup(),
            _ => false,
        }
    }
}

/// A configuration problem, located by a JSON-style field path such as
/// `agents[2].theta`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn format_violations(v: &[GraphViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
