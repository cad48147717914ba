use thiserror::Error;

/// Error type shared by every module in this crate.
///
/// Variants map onto the failure classes surfaced by the CLI: callers can
/// match on the variant to pick an exit code without parsing messages.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's preconditions (dimension mismatch,
    /// tape/params mismatch, out-of-range argument).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numerical routine failed to produce a finite/converged result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// ODE integration produced a non-finite state.
    #[error("integration failure at step {step}: {msg}")]
    Integration { step: usize, msg: String },

    /// An iterative solver diverged.
    #[error("solver diverged at iteration {iteration}: {msg}")]
    Diverged { iteration: usize, msg: String },

    /// Training loss blew up.
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    /// A request exceeded a documented capability limit (e.g. dense
    /// Jacobians above the supported dimension).
    #[error("capability limit: {0}")]
    Capability(String),

    /// Bad configuration: unknown preset name, missing checkpoint, malformed
    /// config file.
    #[error("configuration error: {0}")]
    Config(String),

    /// Degenerate input that the algorithm refuses to patch over silently.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable class tag, one per failure family.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract-violation",
            Error::Numerical(_) => "numerical-failure",
            Error::Integration { .. } => "integration-failure",
            Error::Diverged { .. } => "solver-diverged",
            Error::TrainingDiverged { .. } => "training-diverged",
            Error::Capability(_) => "capability-limit",
            Error::Config(_) => "configuration-error",
            Error::Degenerate(_) => "degenerate-input",
            Error::Io(_) => "io-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
