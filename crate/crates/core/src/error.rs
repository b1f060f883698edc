use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid size {0} must be a power of two and at least 8")]
    GridSize(usize),
    #[error("half-length must be positive and finite, got {0}")]
    HalfLength(f64),
    #[error("fractional order {s} outside {range}")]
    FracOrder { s: f64, range: &'static str },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("input has a nonzero mean ({0:e}); the inverse operator is undefined on the zero mode")]
    ZeroMode(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("inadmissible horizon: {condition} (largest admissible time {max_time})")]
    InadmissibleHorizon { condition: String, max_time: f64 },
    #[error("Picard iteration is not contracting at step size {dt}")]
    NonContraction { dt: f64 },
    #[error("Picard iteration exceeded {0} sweeps")]
    PicardMaxIter(usize),
    #[error("blow-up at t = {t}: {quantity} = {value:e} exceeds ceiling {ceiling:e}")]
    BlowUp {
        t: f64,
        quantity: &'static str,
        value: f64,
        ceiling: f64,
    },
    #[error("level crossing: v(x) = k within tolerance at x = {0}")]
    UndefinedSign(f64),
    #[error("need at least {needed} trajectory samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("test function support leaks outside {0}")]
    SupportLeakage(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
