use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("walk {walk} exceeded {max_steps} steps")]
    MaxSteps { walk: usize, max_steps: usize },
    #[error("EOP walks: only {reached} of {requested} reached the target after {attempts} attempts")]
    TooManyDiscards { requested: usize, reached: usize, attempts: usize },
    #[error("point {0:?} is not on the unit sphere")]
    NonUnit([f64; 3]),
    #[error("vector is not tangent at its base point (inner product {0:e})")]
    NotTangent(f64),
    #[error("legs do not chain: leg {0} ends away from the start of leg {1}")]
    LegsDoNotChain(usize, usize),
    #[error("antipodal points {0:?} and {1:?}: geodesic is not unique")]
    Antipodal([f64; 3], [f64; 3]),
    #[error(transparent)]
    Core(#[from] corrsync_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
