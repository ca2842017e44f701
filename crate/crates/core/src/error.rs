use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid bounds inverted: q_min = {q_min} is not below q_max = {q_max}")]
    InvertedBounds { q_min: f64, q_max: f64 },
    #[error("n_points = {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("n_points = {0} is below the minimum of 8")]
    TooFewPoints(usize),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("packet support [{lo}, {hi}] escapes the grid [{q_min}, {q_max}]")]
    PacketEscapesGrid { lo: f64, hi: f64, q_min: f64, q_max: f64 },
    #[error("node threshold {0} masks every grid point")]
    AllPointsMasked(f64),
    #[error("grids or time meshes do not match")]
    GridMismatch,
    #[error("norm drifted by {drift:e} at step {step}")]
    UnstableStep { step: usize, drift: f64 },
    #[error("kernel width sqrt(hbar*eps/m) = {width} is below dq/2 = {half_dq}")]
    UnresolvableKernel { width: f64, half_dq: f64 },
    #[error("seed {0} lies outside the grid")]
    SeedOutOfRange(f64),
    #[error("classical solver diverged: {0}")]
    SolverDiverged(String),
    #[error("need at least {needed} inputs, got {got}")]
    NotEnoughInputs { needed: usize, got: usize },
}
