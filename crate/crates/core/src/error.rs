use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation. `field` is the dotted path.
    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("distance must be strictly positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("unservable link: BS {bs} -> UE {ue} has no nonzero path")]
    UnservableLink { bs: usize, ue: usize },

    #[error("BS {bs} serves {served} UEs but has only {antennas} antennas")]
    CellTooLarge {
        bs: usize,
        served: usize,
        antennas: usize,
    },

    #[error("precoder is identically zero")]
    ZeroPrecoder,

    #[error("UE {0} has no serving BS")]
    NoServingBs(usize),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("instance too large for enumeration: {candidates} candidates exceed the limit of {limit}")]
    TooLarge { candidates: u128, limit: u128 },

    #[error("feasibility set is empty")]
    EmptyFeasibleSet,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
