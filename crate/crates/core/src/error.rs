use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value from `{what}` at {at}")]
    NonFiniteSample { what: String, at: String },

    #[error("domain length ell(t) = {value} is not positive at t = {t}")]
    DegenerateDomain { t: f64, value: f64 },

    #[error("parameter `{name}` = {value} outside admissible range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid problem data: {0}")]
    InvalidInput(String),

    #[error("coefficient c(x,t) requested without a trajectory")]
    MissingTrajectory,

    #[error("drift B(x,t) is unbounded at x = 0 for K = {k}")]
    SingularB { k: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("tridiagonal solve failed at row {row} (pivot {pivot})")]
    LinearSolveFailure { row: usize, pivot: f64 },

    #[error("trajectory minimum {min} on the control window is below the floor {floor}")]
    TrajectoryDegenerate { min: f64, floor: f64 },

    #[error("s/a(s) is not integrable near the degeneracy: {0}")]
    NonIntegrableDegeneracy(String),

    #[error("lambda = {lambda} violates 3A* < 2Â; smallest admissible lambda found: {suggested}")]
    LambdaTooSmall { lambda: f64, suggested: f64 },

    #[error("weight invariant `{name}` violated: {detail}")]
    WeightInvariant { name: &'static str, detail: String },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:.3e}, best {best:.3e})")]
    CgStalled {
        iterations: usize,
        residual: f64,
        best: f64,
    },

    #[error("weighted quadrature overflowed: {0}")]
    WeightOverflow(String),

    #[error("fixed point diverged after {iterations} outer iterations (last change {last_change:.3e})")]
    FixedPointDiverged {
        iterations: usize,
        last_change: f64,
        history: Vec<f64>,
    },

    #[error("fixed point did not reach tolerance in {iterations} outer iterations (last change {last_change:.3e})")]
    FixedPointNotConverged { iterations: usize, last_change: f64 },

    #[error("trajectory floor violated on the control window: min |y~| = {min}, floor = {floor}")]
    TrajectoryFloorViolated { min: f64, floor: f64 },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
