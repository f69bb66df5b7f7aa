use thiserror::Error;

/// Errors raised by the model, solvers and optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid well {well}: {reason}")]
    InvalidWell { well: String, reason: String },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("simulation failed at step {step}: {reason}")]
    Simulation { step: usize, reason: String },

    #[error("response matrices need {needed} bytes, cap is {cap}")]
    MemoryCap { needed: u64, cap: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("case file parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Attaches a stage label to the error side of a result.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
