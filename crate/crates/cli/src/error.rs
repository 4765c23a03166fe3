use pucci_core::domain::DomainError;
use pucci_core::nondegeneracy::NondegeneracyError;
use pucci_core::operators::OperatorError;
use pucci_core::radial::RadialError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("nonexistence regime: {0}")]
    Nonexistence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Nonexistence(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<OperatorError> for CliError {
    fn from(e: OperatorError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<RadialError> for CliError {
    fn from(e: RadialError) -> Self {
        match e {
            RadialError::Supercritical { .. } => CliError::Nonexistence(e.to_string()),
            RadialError::InvalidProblem(_) | RadialError::InvalidBracket { .. } | RadialError::Origin(_) => {
                CliError::Config(e.to_string())
            }
            RadialError::Integration(_) | RadialError::ResidualTooLarge { .. } => CliError::Solver(e.to_string()),
        }
    }
}

impl From<NondegeneracyError> for CliError {
    fn from(e: NondegeneracyError) -> Self {
        match e {
            NondegeneracyError::Radial(inner) => inner.into(),
            NondegeneracyError::InvalidInput(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        if e.is_solver_failure() {
            return CliError::Solver(e.to_string());
        }
        match root(&e) {
            DomainError::Radial(RadialError::Supercritical { .. }) | DomainError::Precondition(_) => {
                CliError::Nonexistence(e.to_string())
            }
            DomainError::Radial(RadialError::Integration(_) | RadialError::ResidualTooLarge { .. }) => {
                CliError::Solver(e.to_string())
            }
            DomainError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn root(e: &DomainError) -> &DomainError {
    match e {
        DomainError::ContinuationFailure { source, .. } | DomainError::HomotopyFailure { source, .. } => root(source),
        _ => e,
    }
}
