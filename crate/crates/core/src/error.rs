use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid walk: {0}")]
    InvalidWalk(String),

    #[error("resource limit: {what} needs {needed} cells, cap is {cap}")]
    ResourceLimit { what: &'static str, needed: usize, cap: usize },

    #[error("{what} = {value} is out of range ({allowed})")]
    OutOfRange { what: &'static str, value: String, allowed: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration target sigma^2 = {target} is outside (0, 1)")]
    Calibration { target: f64 },

    #[error("test function vanishes at every lattice point of its window")]
    EmptySupport,

    #[error("field entry {value:e} exceeds the overflow guard at step {step}")]
    Overflow { step: usize, value: f64 },

    #[error("z-grid spacing {spacing} exceeds sqrt(eps)/4 = {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("traces come from different disorder streams")]
    StreamMismatch,

    #[error("unsupported test function: {0}")]
    UnsupportedTestFunction(String),

    #[error("tolerance not met: {0}")]
    Tolerance(String),

    #[error("enumeration over {sites} sites exceeds the limit of {limit}")]
    TooManySites { sites: usize, limit: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("replicas failed: {0:?}")]
    ReplicaFailures(Vec<(u64, String)>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(what: &'static str, value: impl ToString, allowed: &str) -> Error {
    Error::OutOfRange { what, value: value.to_string(), allowed: allowed.to_string() }
}
