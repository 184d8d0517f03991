use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A geometric quantity that must be nonzero vanished (e.g. a point sitting on its
    /// neighbour barycenter).
    #[error("degenerate geometry{}: {reason}", at(.index))]
    DegenerateGeometry { index: Option<usize>, reason: String },

    /// The two direction vectors handed to Gram-Schmidt were (nearly) parallel.
    #[error("degenerate local frame{}", at(.index))]
    DegenerateFrame { index: Option<usize> },

    #[error("coincident points{}", at(.index))]
    CoincidentPoints { index: Option<usize> },

    #[error("bingham sampler stalled: accepted {accepted} of {drawn} proposals")]
    SamplerStall { accepted: usize, drawn: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

fn at(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" at point {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a point index to index-carrying variants that do not have one yet.
    pub fn at_index(self, i: usize) -> Self {
        match self {
            Error::DegenerateGeometry { index: None, reason } => Error::DegenerateGeometry {
                index: Some(i),
                reason,
            },
            Error::DegenerateFrame { index: None } => Error::DegenerateFrame { index: Some(i) },
            Error::CoincidentPoints { index: None } => Error::CoincidentPoints { index: Some(i) },
            other => other,
        }
    }
}
