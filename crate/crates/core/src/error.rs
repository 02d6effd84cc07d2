use thiserror::Error;

/// Errors raised by the model, analysis and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid function has {found} samples but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{what} must be strictly positive (found {value} at node {index})")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{what} must be finite (found {value} at node {index})")]
    NonFinite {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error(
        "Lotka-Sharpe bracket not found within |zeta| <= {bound}: F({lo}) = {f_lo}, F({hi}) = {f_hi}"
    )]
    BracketNotFound {
        bound: f64,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("bisection did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error(
        "infeasible setpoint u* = {u_star}: requires 0 < u* < min(zeta1, zeta2), i.e. u* in (0, {upper})"
    )]
    InfeasibleSetpoint { u_star: f64, upper: f64 },

    #[error("gain constraint violated: {0}")]
    GainConstraint(String),

    #[error("Lyapunov configuration invalid: {0}")]
    LyapunovConfig(String),

    #[error("boundary node is singular: w0 * k(0) = {value} >= 1 (refine the age grid)")]
    SingularBoundary { value: f64 },

    #[error("prey collapse at t = {t}: interaction integral of g2 * x1 is {integral}")]
    PreyCollapse { t: f64, integral: f64 },

    #[error("state left the admissible set: {what} = {value}")]
    Inadmissible { what: &'static str, value: f64 },

    #[error("non-finite state produced at t = {t}")]
    Blowup { t: f64 },

    #[error(
        "birth-kernel condition cannot be verified at this resolution: min over kappa of J = {j_min} >= 1"
    )]
    AssumptionUnverified { j_min: f64 },

    #[error("trajectory does not carry the {0} series")]
    MissingSeries(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
