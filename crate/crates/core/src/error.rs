//! Error type shared by all pidal-core modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {expected_height}x{expected_width} vs {actual_height}x{actual_width}")]
    DimensionMismatch {
        context: &'static str,
        expected_height: usize,
        expected_width: usize,
        actual_height: usize,
        actual_width: usize,
    },

    #[error("kernel ({kernel_height}x{kernel_width}) larger than grid ({grid_height}x{grid_width})")]
    KernelLargerThanGrid {
        kernel_height: usize,
        kernel_width: usize,
        grid_height: usize,
        grid_width: usize,
    },

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("domain violation in {context}: {message}")]
    DomainViolation {
        context: &'static str,
        message: String,
    },

    #[error("non-finite value produced by {step} at iteration {iteration}")]
    NonFinite {
        step: &'static str,
        iteration: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected_height: expected.0,
            expected_width: expected.1,
            actual_height: actual.0,
            actual_width: actual.1,
        }
    }
}
