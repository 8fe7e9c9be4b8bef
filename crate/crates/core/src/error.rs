use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its domain. `field` names the offending input.
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("postselection never occurs (zero postselection probability)")]
    ZeroPostselection,

    #[error("undefined weak value (zero overlap between pre- and postselected states)")]
    ZeroOverlap,

    #[error("detector carries no information about the observable (singular response matrix)")]
    SingularResponse,

    #[error("conditional mean undefined at zero coupling")]
    ZeroCoupling,

    #[error("target value undefined/divergent (cos(theta) = {cos_theta} <= 0)")]
    DivergentTarget { cos_theta: f64 },

    #[error("no valid switch probability: bias g = {g} exceeds cos(theta) = {cos_theta}")]
    NoValidSwitch { g: f64, cos_theta: f64 },

    #[error("insufficient counts: {0}")]
    InsufficientCounts(String),

    #[error("no postselected trials")]
    NoPostselectedTrials,

    #[error("{0}")]
    Fit(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("grid point {index} ({param} = {value}): {source}")]
    AtGridPoint {
        index: usize,
        param: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    /// True for errors raised by the engines on well-formed input (a physical
    /// impossibility rather than a malformed request).
    pub fn is_domain(&self) -> bool {
        match self {
            Error::ZeroPostselection
            | Error::ZeroOverlap
            | Error::SingularResponse
            | Error::ZeroCoupling
            | Error::DivergentTarget { .. }
            | Error::NoValidSwitch { .. }
            | Error::InsufficientCounts(_)
            | Error::NoPostselectedTrials => true,
            Error::AtGridPoint { source, .. } => source.is_domain(),
            _ => false,
        }
    }
}
