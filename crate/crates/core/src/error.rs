use thiserror::Error;

use crate::vec2::Vec2;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid disk {index}: {reason}")]
    InvalidDisk { index: usize, reason: String },

    #[error("overlapping scatterers: disks {first} and {second} (gap {gap:.3e})")]
    OverlappingScatterers { first: usize, second: usize, gap: f64 },

    #[error("mismatched scatterer count: {left} vs {right}")]
    MismatchedScattererCount { left: usize, right: usize },

    #[error("invalid horizon spec: {0}")]
    InvalidHorizon(String),

    #[error("no collision within horizon {horizon} for ray from ({:.6}, {:.6}) along ({:.6}, {:.6})", origin.x, origin.y, direction.x, direction.y)]
    NoCollisionWithinHorizon {
        origin: Vec2,
        direction: Vec2,
        horizon: f64,
    },

    #[error("configuration pair not admissible at step {step}: {reason}")]
    NotAdmissible { step: usize, reason: String },

    #[error("singular collision: cos(phi') = {cos_phi_out:.3e}")]
    SingularCollision { cos_phi_out: f64 },

    #[error("vertical image of cone edge (dr' = 0)")]
    VerticalImage,

    #[error("envelope too tight: {0}")]
    EnvelopeTooTight(String),

    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any step annotation stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}
