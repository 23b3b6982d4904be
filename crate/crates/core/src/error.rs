use std::path::PathBuf;

use thiserror::Error;

/// Optional model capabilities that some algorithms require.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    NegHessTheta,
    ExactMStep,
    ExactEmStep,
    PriorSampling,
    TermCounts,
}

impl std::fmt::Display for Capability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Capability::NegHessTheta => "neg_hess_theta",
            Capability::ExactMStep => "exact_m_step",
            Capability::ExactEmStep => "exact_em_step",
            Capability::PriorSampling => "prior sampling",
            Capability::TermCounts => "theta term counts",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("model `{model}` does not provide {capability}")]
    Unsupported {
        model: String,
        capability: Capability,
    },

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("numerical divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("singular or indefinite Hessian sum at step {step}")]
    SingularHessian { step: usize },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("requested {requested} rows but only {available} are available")]
    Capacity { requested: usize, available: usize },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("{0}")]
    InsufficientSamples(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn unsupported(model: &str, capability: Capability) -> Self {
        Error::Unsupported {
            model: model.to_string(),
            capability,
        }
    }

    /// Step index carried by run-time numerical failures.
    pub fn step(&self) -> Option<usize> {
        match self {
            Error::Divergence { step, .. } | Error::SingularHessian { step } => Some(*step),
            _ => None,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::SingularHessian { .. })
    }

    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Format { .. } | Error::Capacity { .. } | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
