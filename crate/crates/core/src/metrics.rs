//! Restoration-quality metrics: ISNR (dB), MAE, MSE, and replicate
//! aggregation.

use crate::error::{Error, Result};
use crate::grid::Image;

/// Metrics for one run, or the mean over replicates (leaves have an empty
/// `per_replicate`).
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub isnr_db: f64,
    pub mae: f64,
    pub mse: f64,
    pub per_replicate: Vec<MetricsReport>,
}

impl MetricsReport {
    pub fn single(isnr_db: f64, mae: f64, mse: f64) -> Self {
        MetricsReport {
            isnr_db,
            mae,
            mse,
            per_replicate: Vec::new(),
        }
    }
}

/// Mean absolute error `‖estimate − truth‖₁ / n`.
pub fn mae(estimate: &Image, truth: &Image) -> Result<f64> {
    estimate.check_same_dims(truth, "mae")?;
    Ok(estimate.sub(truth)?.norms().l1 / estimate.len() as f64)
}

/// Mean squared error `‖estimate − truth‖₂² / n`.
pub fn mse(estimate: &Image, truth: &Image) -> Result<f64> {
    estimate.check_same_dims(truth, "mse")?;
    Ok(estimate.sub(truth)?.norms().l2_squared / estimate.len() as f64)
}

/// Improvement in SNR in decibels:
/// `10·log₁₀(‖observed−truth‖₂² / ‖estimate−truth‖₂²)`.
///
/// Positive iff the estimate is closer to the truth than the observation.
/// Errors when the estimate equals the truth (zero denominator).
pub fn isnr(observed: &Image, estimate: &Image, truth: &Image) -> Result<f64> {
    observed.check_same_dims(truth, "isnr")?;
    isnr_vs_reference(observed, estimate, truth, truth)
}

/// ISNR variant with a separate reference for the observation error,
/// `10·log₁₀(‖observed−observation_reference‖₂² / ‖estimate−truth‖₂²)`.
/// Passing `truth` as the reference recovers [`isnr`]; passing the blurred
/// truth measures improvement over the noise alone.
pub fn isnr_vs_reference(
    observed: &Image,
    estimate: &Image,
    truth: &Image,
    observation_reference: &Image,
) -> Result<f64> {
    estimate.check_same_dims(truth, "isnr")?;
    observed.check_same_dims(observation_reference, "isnr")?;
    let numerator = observed.sub(observation_reference)?.norms().l2_squared;
    let denominator = estimate.sub(truth)?.norms().l2_squared;
    if denominator == 0.0 {
        return Err(Error::DomainViolation {
            context: "isnr",
            message: "estimate equals truth: zero error energy".into(),
        });
    }
    Ok(10.0 * (numerator / denominator).log10())
}

/// Arithmetic mean of each metric across replicates; the inputs are retained
/// in `per_replicate`. Errors on an empty slice.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter {
            name: "reports",
            message: "cannot aggregate zero replicates".into(),
        });
    }
    let n = reports.len() as f64;
    Ok(MetricsReport {
        isnr_db: reports.iter().map(|r| r.isnr_db).sum::<f64>() / n,
        mae: reports.iter().map(|r| r.mae).sum::<f64>() / n,
        mse: reports.iter().map(|r| r.mse).sum::<f64>() / n,
        per_replicate: reports.to_vec(),
    })
}
