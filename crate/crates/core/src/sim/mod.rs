//! Deterministic numerical kernel shared by the lab engines: adaptive
//! explicit Runge–Kutta integration with dense output, and the sampled
//! [`TimeSeries`] every simulation returns.
//!
//! All functions here are pure; nothing is cached between calls.

mod ode;
mod series;

pub use ode::{
    integrate_ivp, integrate_to_grid, uniform_grid, FnSystem, OdeSystem, SolverSettings,
    SolverStats,
};
pub use series::{format_float, sample_at, TimeSeries};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("initial state has {found} components, system dimension is {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid integration span [{t0}, {t1}]")]
    InvalidSpan { t0: f64, t1: f64 },
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("step budget of {steps} exhausted at t = {t} (stiff or diverging system)")]
    TooManySteps { t: f64, steps: u64 },
    #[error("step size underflow (h = {h}) at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite derivative at t = {t}")]
    NonFiniteDerivative { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("t = {t} outside sampled range [{first}, {last}]")]
    OutOfRange { t: f64, first: f64, last: f64 },
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
}
