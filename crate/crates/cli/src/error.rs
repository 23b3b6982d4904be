use std::fmt;

/// Failure classes the binary reports through its exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    Numerical,
    Verify,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Config => 1,
            FailureKind::Data => 2,
            FailureKind::Numerical => 3,
            FailureKind::Verify => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: FailureKind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            FailureKind::Config => "config error",
            FailureKind::Data => "data error",
            FailureKind::Numerical => "numerical failure",
            FailureKind::Verify => "verification failed",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Data, message: message.into() }
    }

    pub fn verify(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Verify, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl From<particle_em::Error> for CliError {
    fn from(e: particle_em::Error) -> Self {
        let kind = if e.is_numerical() {
            FailureKind::Numerical
        } else if e.is_data() {
            FailureKind::Data
        } else {
            FailureKind::Config
        };
        Self { kind, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
