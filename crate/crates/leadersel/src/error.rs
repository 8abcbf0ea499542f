use thiserror::Error;

/// Errors surfaced by the selection and certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or graph dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A graph violated its structural invariants.
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// A model is missing a required component (typically gains).
    #[error("configuration error: {0}")]
    Configuration(String),

    /// An iterative numerical kernel failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A Lyapunov/Sylvester solve hit the spectral solvability condition.
    #[error("spectral clash: {0}")]
    SpectralClash(String),

    /// Near-zero denominator in a spectral quantity.
    #[error("singular quantity: {0}")]
    Singular(String),

    /// Requested computation exceeds the supported problem size.
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// No stabilizing gain exists for the requested mode.
    #[error("gain synthesis impossible for mode {mode}: eigenvalue {eigenvalue} is unreachable from the leader set")]
    SynthesisImpossible { mode: usize, eigenvalue: String },

    /// The selection precondition fails: every shifted mode is already stable.
    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    /// Domain error in a scalar formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration file.
    #[error("config error: {0}")]
    Config(String),

    /// I/O while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
