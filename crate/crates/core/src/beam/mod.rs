//! Linear transfer-matrix optics for transport channels.
//!
//! Planes are treated independently with hard-edge 2×2 matrices; there is
//! no x–y coupling and no dispersion. Quadrupole gradients are geometric
//! (momentum-normalized), so no particle energy is needed.

mod matching;
pub mod nelder_mead;
mod optics;
mod twiss;

pub use matching::{
    exit_twiss, match_quadrupoles, match_residual, MatchResult, MATCH_ITERATIONS, MAX_TUNABLES,
};
pub use optics::{
    cell_stability, compose, element_matrix, element_transfer, Beamline, BeamlineElement,
    CellStability, ElementKind, Matrix2, Plane, PlaneStability, TransferMatrix, THIN_LENS_LENGTH,
};
pub use twiss::{
    envelope, propagate_beam, propagate_twiss, BeamTwiss, TwissParams, DET_TOLERANCE,
    ENVELOPE_CHANNELS,
};

use thiserror::Error;

use crate::sim::SimError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamError {
    #[error("invalid element {0}")]
    InvalidElement(String),
    #[error("beamline has no elements")]
    EmptyLine,
    #[error("matrix determinant {0} is not 1")]
    NonUnimodular(f64),
    #[error("invalid Twiss parameters {0:?}")]
    InvalidTwiss(TwissParams),
    #[error("sampling step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("no quadrupole at tunable index {0}")]
    NotAQuadrupole(usize),
    #[error("matching needs at least one tunable quadrupole")]
    NoTunables,
    #[error("at most {MAX_TUNABLES} tunables are supported, got {0}")]
    TooManyTunables(usize),
    #[error(transparent)]
    Series(#[from] SimError),
}
