use thiserror::Error;

pub type Result<T> = std::result::Result<T, OitError>;

#[derive(Debug, Error)]
pub enum OitError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("density must be strictly positive")]
    NotStrict,

    #[error("densities are antipodal (angle {theta}); the geodesic is not unique")]
    Antipodal { theta: f64 },

    #[error("log-derivative denominator vanishes (min {min:e})")]
    DegenerateDenominator { min: f64 },

    #[error("step too large: eps*|v|_inf = {displacement:e} exceeds spacing {limit:e}")]
    StepTooLarge { displacement: f64, limit: f64 },

    #[error("warp folded: min Jacobian {min_jacobian:e} at iteration {iteration}")]
    Folded { min_jacobian: f64, iteration: usize },

    #[error("energy increased from {before:e} to {after:e} at iteration {iteration}")]
    EnergyIncrease { before: f64, after: f64, iteration: usize },

    #[error("argument {x} outside [0, {total_volume}]")]
    OutOfDomain { x: f64, total_volume: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Underfilled(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
