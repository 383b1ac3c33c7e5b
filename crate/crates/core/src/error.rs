use thiserror::Error;

/// Errors surfaced by kernel, regression, and correction operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("block size {block} out of range for n = {n}")]
    BlockOutOfRange { block: usize, n: usize },

    #[error("matrix not positive definite: pivot {pivot:.3e} at row {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("ill-conditioned system in {context}: condition estimate {cond:.3e} exceeds {limit:.3e}")]
    IllConditioned {
        context: &'static str,
        cond: f64,
        limit: f64,
    },

    #[error("degenerate decay: eta*gamma = 1 leaves the closed form undefined")]
    DegenerateDecay,

    #[error("degenerate Schur complement: gamma + k - q = {value:.3e}")]
    DegenerateSchur { value: f64 },

    #[error("singular correction block (gamma_o I + K_nn); add jitter via gamma_o > 0")]
    SingularCorrectionBlock,

    #[error("past/new kernel degeneracy: Schur complement Q is singular")]
    SingularSchurBlock,

    #[error("explicit features required: kernel `{kind}` exposes no feature map")]
    ExplicitFeaturesRequired { kind: &'static str },

    #[error("precomputed kernel cannot evaluate outside its stored set: {context}")]
    PrecomputedCrossEval { context: String },

    #[error("gram matrix failed validation: {reason}")]
    InvalidGram { reason: String },

    #[error("storage guard exceeded: n = {n} is above the dense limit {limit}")]
    StorageGuard { n: usize, limit: usize },

    #[error("grid gram stayed singular after {attempts} jitter escalations")]
    JitterExhausted { attempts: usize },

    #[error("unsupported serialization: {reason}")]
    Unsupported { reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("{context}: {source}")]
    WithContext {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap with run context (e.g. the seed and learner that hit it).
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::WithContext {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::WithContext { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
