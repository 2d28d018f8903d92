use thiserror::Error;

/// Failures of a CLI command, each mapped to a documented exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Solver(#[from] periodic_eval::Error),

    #[error("Monte Carlo estimate disagrees with the analytic value: {0}")]
    Mismatch(String),

    #[error("no sufficient condition covers this case ({0}); pass --tau-cap to report a supremum over (0, cap]")]
    NoProposition(String),

    #[error("grid point {parameter} = {value}: {source}")]
    GridPoint {
        parameter: String,
        value: f64,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    /// 2 configuration, 3 assumption violated, 4 solver failure,
    /// 5 Monte Carlo mismatch, 6 no applicable condition.
    pub fn exit_code(&self) -> i32 {
        use periodic_eval::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Solver(e) => match e {
                E::AssumptionViolated { .. } => 3,
                E::NonConvergence { .. } | E::BracketFailure(_) | E::NumericalFault(_) | E::NonFinite(_) => 4,
                E::DimensionMismatch(_)
                | E::SingularVolatility { .. }
                | E::Degenerate { .. }
                | E::InvalidParameter(_)
                | E::DomainError(_)
                | E::ParameterOutOfRange(_) => 2,
            },
            CliError::Mismatch(_) => 5,
            CliError::NoProposition(_) => 6,
            CliError::GridPoint { source, .. } => source.exit_code(),
        }
    }
}
