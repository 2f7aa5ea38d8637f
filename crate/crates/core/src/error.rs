use thiserror::Error;

/// Errors raised by the solver suite.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} outside control horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("CFL violation: max speed {max_speed} with dt {dt} and dx {dx} exceeds cfl {cfl}")]
    Cfl {
        max_speed: f64,
        dt: f64,
        dx: f64,
        cfl: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("measure is not normalized: total mass {mass}")]
    Unnormalized { mass: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no root of w*exp(-2w) = {c}: right-hand side must be below 1/(2e) = {bound}")]
    NoRoot { c: f64, bound: f64 },

    #[error("{0}")]
    Infeasible(String),

    #[error("weight w_bar = 0 is rank deficient; steady states need an invertible weight")]
    RankDeficient,

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
