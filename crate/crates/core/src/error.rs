use thiserror::Error;

/// Errors raised by the scattering library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value violates its precondition.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The sampling grid is too coarse for the requested filters.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// Scattering depth outside the supported range.
    #[error("unsupported depth {0} (supported: 1 or 2)")]
    UnsupportedDepth(usize),

    /// A path set handed to the graph compiler is not closed under prefixes.
    #[error("malformed path set: {0}")]
    MalformedPaths(String),

    /// Two tensor collections do not share the same path set.
    #[error("incompatible tensors: {0}")]
    IncompatibleTensors(String),

    /// An energy ratio was requested for a zero-energy input.
    #[error("undefined ratio: input energy is zero")]
    UndefinedRatio,

    /// Gradient descent blew up.
    #[error("divergence at iteration {iteration}: E = {error:.6e} exceeds 1e3 x E0 = {initial:.6e}")]
    Divergence {
        iteration: usize,
        error: f64,
        initial: f64,
        trace: Vec<crate::synthesis::TraceEntry>,
    },

    /// Mismatched buffer sizes inside a numerical kernel.
    #[error("internal size mismatch: {0}")]
    SizeMismatch(String),

    /// Malformed serialized data.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
