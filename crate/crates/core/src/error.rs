use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge for {what}: relative change {change:.3e} at order {order}")]
    QuadratureNonConvergence {
        what: String,
        change: f64,
        order: usize,
    },

    #[error("elliptic integral needs k^2 < 1, got {0}")]
    EllipticDomain(f64),

    #[error("kernel evaluation failed at (m={m}, n={n}, zeta={zeta}): {source}")]
    Kernel {
        m: usize,
        n: usize,
        zeta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("box too small: {0}")]
    GridTooSmall(String),

    #[error("support reaches the end of the grid (extent {0})")]
    GridExtension(f64),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("requested N = {n} exceeds Z = {z}; strong TF binds at most Z electrons")]
    NExceedsZ { n: f64, z: f64 },

    #[error("channel truncation: channel {m} holds mass {mass:.3e} above threshold {threshold:.3e}")]
    ChannelTruncation { m: usize, mass: f64, threshold: f64 },

    #[error("channel/grid mismatch: {0}")]
    Mismatch(String),

    #[error("insufficient points for fit: got {0}, need at least 4")]
    InsufficientPoints(usize),

    #[error("kernel cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
