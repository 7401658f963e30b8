use thiserror::Error;

/// Crate-wide error type. `Config` carries the file line and field that
/// failed validation so the CLI can point at the offending input; the
/// numerical variants carry enough context to identify the failing object.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error (line {line}, field `{field}`): {msg}")]
    Config {
        line: usize,
        field: String,
        msg: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hurwitz: eigenvalue {re:.6e} {im:+.6e}i has nonnegative real part")]
    NotHurwitz { re: f64, im: f64 },

    #[error("pair (A, B) is not stabilizable: eigenvalue {re:.6e} {im:+.6e}i is uncontrollable")]
    NotStabilizable { re: f64, im: f64 },

    #[error("ill-conditioned matrix equation: {0}")]
    Conditioning(String),

    #[error("Newton iteration stalled after {iterations} steps (residual {residual:.3e})")]
    NewtonStagnation { iterations: usize, residual: f64 },

    #[error("simulation diverged at t = {t:.6}: {msg}")]
    Instability { t: f64, msg: String },

    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    #[error("consistency check `{name}` failed: {msg}")]
    CheckFailed { name: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems,
    /// 3 for numerical/runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidInput(_) => 2,
            _ => 3,
        }
    }
}
