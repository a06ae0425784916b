use thiserror::Error;

use crate::invasion::InvasionRun;
use crate::lattice::Site;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sites {0} and {1} are not nearest neighbours")]
    InvalidEdge(Site, Site),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("site {0} is outside the coordinate limits")]
    OutOfBounds(Site),

    #[error("resource limit exceeded: {what}")]
    ResourceLimit {
        what: String,
        partial: Option<Box<InvasionRun>>,
    },

    #[error("run cannot be certified: {0}")]
    NotCertifiable(String),

    #[error("p = {p} is not above p_c = {p_c}; the correlation length diverges")]
    Subcritical { p: f64, p_c: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rejected after {attempts} attempts ({accepted} accepted, rate {rate:.3e})")]
    Rejected {
        attempts: u64,
        accepted: u64,
        rate: f64,
    },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn resource(what: impl Into<String>) -> Self {
        Error::ResourceLimit { what: what.into(), partial: None }
    }

    /// Domain errors (subcritical p, unsupported sigma, bad parameters) as
    /// opposed to resource exhaustion or malformed input.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Subcritical { .. }
                | Error::Unsupported(_)
                | Error::Domain(_)
                | Error::NotCertifiable(_)
                | Error::Undefined(_)
                | Error::Bracket(_)
        )
    }

    pub fn is_resource(&self) -> bool {
        matches!(self, Error::ResourceLimit { .. } | Error::Rejected { .. })
    }
}
