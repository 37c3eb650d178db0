use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scenario or simulation parameter is out of its valid range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("correlation matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("pilot length {nt} is below N*K = {required}; pilots would not be orthogonal")]
    PilotsNotOrthogonal { nt: usize, required: usize },

    #[error("distance {distance} m is below the minimum BS-UE distance {min} m")]
    TooClose { distance: f64, min: f64 },

    #[error("infeasible eigenmode set: stacked rows are rank deficient")]
    InfeasibleEigenmodeSet,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("set packing instance has {count} candidates; exact search is limited to {limit}")]
    PackingTooLarge { count: usize, limit: usize },

    #[error("UE {ue} is scheduled by more than one selected cluster")]
    UeScheduledTwice { ue: usize },

    #[error("invalid cluster map: {0}")]
    ClusterMap(String),

    #[error("drop {drop}, block {block}: {source}")]
    InBlock {
        drop: usize,
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed results file: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by user-supplied configuration rather than
    /// by the simulation itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Config(_)
                | Error::NotPsd { .. }
                | Error::PilotsNotOrthogonal { .. }
                | Error::ClusterMap(_)
        )
    }
}
