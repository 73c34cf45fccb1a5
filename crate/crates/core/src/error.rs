use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Hilbert space of {sites} sites exceeds the addressable capacity")]
    Capacity { sites: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("cannot resolve {requested} distinct levels: {message}")]
    LevelResolution { requested: usize, message: String },

    #[error("negative eigenvalue {value:.3e} in {context}")]
    NotPositive { value: f64, context: &'static str },

    #[error("local fidelity optimization did not converge (best value {best:.12})")]
    OptimizerNoConvergence { best: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("discontinuity refinement failed: {0}")]
    Refinement(String),

    #[error("sweep point {param}: {source}")]
    AtPoint {
        param: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("schema: {0}")]
    Schema(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NoConvergence { .. }
            | Error::LevelResolution { .. }
            | Error::NotPositive { .. }
            | Error::OptimizerNoConvergence { .. }
            | Error::Fit(_)
            | Error::Refinement(_) => true,
            Error::AtPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
