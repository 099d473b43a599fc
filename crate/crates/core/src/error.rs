use thiserror::Error;

use crate::extend::ConstructiveTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain specification: {0}")]
    InvalidSpec(String),
    #[error("point {point} lies outside the validity box")]
    OutsideBox { point: String },
    #[error("region contains no quadrature points")]
    EmptyRegion,
    #[error("Newton projection onto the boundary failed after {iterations} iterations")]
    ProjectionFailure { iterations: usize },
    #[error("inward step {step} leaves the domain")]
    StepTooLarge { step: f64 },
    #[error("cap connectivity inconclusive: no grid cell inside the cap at resolution {resolution}")]
    Inconclusive { resolution: usize },
    #[error("incompatible family members: {0}")]
    IncompatibleFamily(String),
    #[error("Gram matrix is numerically singular from degree {degree}")]
    Conditioning { degree: u32 },
    #[error("kernel sequence decreases at degree {degree}; quadrature sets are not nested")]
    QuadratureInconsistency { degree: u32 },
    #[error("peak construction unsupported: {0}")]
    UnsupportedConstruction(String),
    #[error("peak function reaches modulus {modulus} at {witness} away from the peak point")]
    PeakFailure { witness: String, modulus: f64 },
    #[error("jet constraints are rank deficient: {0}")]
    ConstraintFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("evaluation point coincides with quadrature node {index}")]
    NodeCollision { index: usize },
    #[error("constructive extension stopped decaying at k = {k}")]
    NoDecay { k: usize, trace: Box<ConstructiveTrace> },
    #[error("{unreliable} of {total} sweep offsets are below the quadrature resolution")]
    ResolutionInsufficient { unreliable: usize, total: usize },
    #[error("cache container: {0}")]
    CacheFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by front ends to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidSpec(_)
            | Error::IncompatibleFamily(_)
            | Error::InvalidInput(_)
            | Error::UnsupportedConstruction(_) => ErrorClass::Config,
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Numeric,
        }
    }
}
