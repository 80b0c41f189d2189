use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: estimate {estimate:e} above tolerance {tol:e}")]
    Quadrature { estimate: f64, tol: f64 },

    #[error("no bracket for equilibrium: E = {e} exceeds F0 = {f_max} on the search interval")]
    Bracket { e: f64, f_max: f64 },

    #[error("fixed point did not converge after {} iterations (last residual {:e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { history: Vec<f64> },

    #[error("query out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("body velocity {v} left the scheduling bounds [{lo}, {hi}] at t = {t}")]
    VelocityBounds { v: f64, lo: f64, hi: f64, t: f64 },

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),
}

pub type Result<T> = std::result::Result<T, Error>;
