//! Poisson image deconvolution by augmented Lagrangian (PIDAL) with
//! isotropic total-variation regularization.
//!
//! The solver minimizes the penalized negative Poisson log-likelihood
//! `Σ (Kx)ᵢ − yᵢ log (Kx)ᵢ + τ·TV(x)` by splitting the problem over
//! `(x, z, u)` with constraints `Kx = z`, `x = u`, and running a scaled-dual
//! augmented Lagrangian loop: an FFT x-update, a closed-form Poisson
//! z-prox, and a Chambolle TV u-prox per iteration.
//!
//! Modules:
//! - [`grid`]: dense 2-D image container and elementwise arithmetic
//! - [`spectral`]: circulant convolution and the FFT x-update solve
//! - [`poisson`]: likelihood, z-prox, reproducible Poisson sampler
//! - [`tv`]: TV norm, gradient/divergence, dual-projection denoiser
//! - [`solver`]: the outer loop with residual/objective tracking
//! - [`metrics`]: ISNR / MAE / MSE and replicate aggregation

pub mod error;
pub mod grid;
pub mod metrics;
pub mod poisson;
pub mod solver;
pub mod spectral;
pub mod tv;

pub use error::{Error, Result};
pub use grid::{ElementwiseOp, Image, Norms, PixelIndex};
pub use metrics::MetricsReport;
pub use poisson::Counts;
pub use solver::{
    FinalEstimate, IterationRecord, Problem, RunReport, SolverConfig, SolverState,
};
pub use spectral::{BlurKernel, TransferFunction};
pub use tv::{DualField, TvDenoiseSettings};
