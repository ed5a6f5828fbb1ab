use thiserror::Error;

/// Failures raised by the solvers. Every variant carries the values needed to
/// reproduce the failing call.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("diffusion coefficient is not positive at x = {x}: a(x) = {value}")]
    NonPositiveDiffusion { x: f64, value: f64 },

    #[error("non-finite {what} at p = {p}, x = {x}")]
    NonFinite { what: &'static str, p: f64, x: f64 },

    #[error("lower envelope is not coercive: it rises by {rise} over the grid, margin {margin}")]
    NotCoercive { rise: f64, margin: f64 },

    #[error("level {lambda} lies below the envelope ground {ground}")]
    BelowGround { lambda: f64, ground: f64 },

    #[error("level {lambda} lies above the envelope value {top} at the grid edge")]
    BeyondGrid { lambda: f64, top: f64 },

    #[error("step size underflow at x = {x} (h = {h})")]
    StepUnderflow { x: f64, h: f64 },

    #[error("barriers are not ordered at x = {x}: lower {lower} >= upper {upper}")]
    NotOrdered { x: f64, lower: f64, upper: f64 },

    #[error("barriers admit no trapped solution: {detail}")]
    WrongSigns { detail: String },

    #[error("gap inventory changed when the level grid was halved: {detail}")]
    SweepTooCoarse { detail: String },

    #[error("theta = {theta} lies outside the sampled range [{lo}, {hi}]")]
    OutOfRange { theta: f64, lo: f64, hi: f64 },

    #[error("gap index {index} requested but {count} gaps were found")]
    NoGap { index: usize, count: usize },

    #[error("no bridge trajectory left the strip before x = {x_max} ({tried} starting points tried)")]
    NoFiniteExit { x_max: f64, tried: usize },

    #[error("bridge trajectory from c = {start} left through the starting branch at x = {exit_x}")]
    WrongSideExit { start: f64, exit_x: f64 },

    #[error("time step {dt} exceeds the monotonicity limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("discrete gradient {max_gradient} exceeded the limit {limit} at t = {t}")]
    GradientBlowup { max_gradient: f64, limit: f64, t: f64 },

    #[error("no trapping region and no surviving pullback trajectory at level {lambda}")]
    NoTrapping { lambda: f64 },

    #[error("pullback trajectories at level {lambda} did not coalesce: {detail}")]
    NonCoalescent { lambda: f64, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression error: {0}")]
    Expression(String),
}

pub type Result<T> = std::result::Result<T, Error>;
