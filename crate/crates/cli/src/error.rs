use std::fmt;

/// Failure class, one per process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: FailureKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: FailureKind::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: FailureKind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Config => 2,
            FailureKind::Data => 3,
            FailureKind::Numerical => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            FailureKind::Config => "configuration error",
            FailureKind::Data => "data error",
            FailureKind::Numerical => "numerical failure",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<hdgranger::Error> for CliError {
    fn from(e: hdgranger::Error) -> Self {
        use hdgranger::Error as E;
        let kind = match &e {
            E::Configuration(_)
            | E::InvalidGroups(_)
            | E::GroupMismatch(_)
            | E::RankDeficient(_) => FailureKind::Config,
            E::Io(_)
            | E::Parse { .. }
            | E::InvalidData(_)
            | E::DegenerateColumn { .. }
            | E::EmptyInput(_)
            | E::Dimension(_) => FailureKind::Data,
            E::SolverDivergence(_)
            | E::NearSingularDesign { .. }
            | E::DegenerateVariance { .. }
            | E::DeficientRestriction { .. }
            | E::NonFinite(_) => FailureKind::Numerical,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
