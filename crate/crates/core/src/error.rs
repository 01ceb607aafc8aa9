use thiserror::Error;

use crate::model::Region;

pub type Result<T, E = BomberError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BomberError {
    /// An argument is outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The closed forms only cover the spend-it-all region and the band above it.
    #[error("no closed form in region {region:?} at (x={x}, t={t})")]
    UnsupportedRegion { region: Region, x: f64, t: f64 },

    /// Quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge on [{a}, {b}]: error estimate {error_estimate:e} after {subdivisions} subdivisions")]
    QuadratureFailed {
        a: f64,
        b: f64,
        error_estimate: f64,
        subdivisions: usize,
    },

    /// A non-finite value appeared while time-marching the solution grid.
    #[error("non-finite value at x index {x_index} while advancing time step {step}")]
    NonFinite { step: usize, x_index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl BomberError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        BomberError::Domain(msg.into())
    }
}
