use thiserror::Error;

/// Everything that can go wrong while integrating, differentiating, or
/// driving the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown Runge-Kutta method `{0}`")]
    UnknownMethod(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("unknown engine `{0}`")]
    UnknownEngine(String),

    #[error("invalid tableau `{name}`: {reason}")]
    InvalidTableau { name: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dynamics returned a non-finite value at stage {stage} (t = {t})")]
    NonFiniteDynamics { stage: usize, t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step limit of {0} exceeded")]
    TooManySteps(usize),

    #[error("tape already consumed by a reverse sweep")]
    TapeConsumed,

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed parameter file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownMethod(_) => "UnknownMethod",
            Error::UnknownProblem(_) => "UnknownProblem",
            Error::UnknownEngine(_) => "UnknownEngine",
            Error::InvalidTableau { .. } => "InvalidTableau",
            Error::Shape(_) => "ShapeError",
            Error::NonFiniteDynamics { .. } => "NonFiniteDynamics",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::TooManySteps(_) => "TooManySteps",
            Error::TapeConsumed => "TapeConsumed",
            Error::Divergence { .. } => "Divergence",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
        }
    }

    /// True for errors caused by a bad identifier or argument rather than by
    /// the computation itself.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::UnknownMethod(_)
                | Error::UnknownProblem(_)
                | Error::UnknownEngine(_)
                | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: expected length {want}, got {got}")));
    }
    Ok(())
}
