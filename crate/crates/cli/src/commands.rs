//! The `simulate` and `deconvolve` commands.

use std::path::Path;

use anyhow::{bail, Context, Result};
use pidal_core::{poisson, solver, spectral, Counts, Image, RunReport, TransferFunction};

use crate::io;
use crate::runspec::RunSpec;

/// Rescales `truth` so its maximum equals `scale_max`. A no-op (factor
/// exactly 1) when the maximum already matches.
pub fn rescale_to_max(truth: &Image, scale_max: f64) -> Result<Image> {
    if !(scale_max > 0.0) {
        bail!("scale-max must be positive, got {scale_max}");
    }
    let current = truth.max_value();
    if !(current > 0.0) {
        bail!("truth image has no positive values; cannot rescale");
    }
    if current == scale_max {
        return Ok(truth.clone());
    }
    Ok(truth.scale(scale_max / current))
}

/// Blurred intensity `K·truth_scaled` with FFT round-off clamped at zero.
/// Genuinely negative intensities (beyond round-off) are an error.
pub fn blurred_intensity(tf: &TransferFunction, truth_scaled: &Image) -> Result<Image> {
    let lambda = tf.convolve(truth_scaled)?;
    let floor = -1e-9 * truth_scaled.max_value().max(1.0);
    if let Some(&v) = lambda.data().iter().find(|&&v| v < floor) {
        bail!("blurred intensity has negative value {v}; kernel or truth invalid");
    }
    Ok(lambda.map(|v| v.max(0.0)))
}

/// `simulate`: writes one Poisson-observed counts image per seed plus
/// metadata and the rescaled truth.
pub fn simulate(spec: &RunSpec) -> Result<()> {
    let truth_path = spec
        .truth
        .as_ref()
        .context("simulate requires --truth PATH")?;
    let truth = io::read_image_auto(truth_path)
        .with_context(|| format!("loading truth image {}", truth_path.display()))?;
    if truth.data().iter().any(|&v| v < 0.0) {
        bail!("truth image {} has negative intensities", truth_path.display());
    }
    let scale_max = spec.scale_max.context("simulate requires --scale-max")?;
    if spec.seeds.is_empty() {
        bail!("simulate requires at least one seed");
    }

    let kernel = spec.kernel.build()?;
    let truth_scaled = rescale_to_max(&truth, scale_max)?;
    let (h, w) = truth_scaled.dims();
    let tf = spectral::plan(&kernel, h, w)?;
    let lambda = blurred_intensity(&tf, &truth_scaled)?;

    std::fs::create_dir_all(&spec.out_dir)
        .with_context(|| format!("creating {}", spec.out_dir.display()))?;
    io::write_csv_matrix(&spec.out_dir.join("truth_scaled.csv"), &truth_scaled)?;

    for &seed in &spec.seeds {
        let counts = poisson::sample_poisson(&lambda, seed)?;
        let counts_path = spec.out_dir.join(format!("counts_s{seed}.pgm"));
        io::write_pgm16(&counts_path, &counts)?;
        let meta_path = spec.out_dir.join(format!("counts_s{seed}.meta.txt"));
        io::write_metadata(
            &meta_path,
            &[
                ("kernel", spec.kernel.describe()),
                ("scale_max", format!("{scale_max}")),
                ("seed", format!("{seed}")),
                ("truth", truth_path.display().to_string()),
                ("height", format!("{h}")),
                ("width", format!("{w}")),
            ],
        )?;
    }
    Ok(())
}

/// `deconvolve`: restores a counts image, writing the estimate, the
/// per-iteration diagnostics CSV, and run metadata.
pub fn deconvolve(spec: &RunSpec) -> Result<()> {
    let counts_path = spec
        .counts
        .as_ref()
        .context("deconvolve requires --counts PATH")?;
    let counts_image = io::read_image_auto(counts_path)
        .with_context(|| format!("loading counts {}", counts_path.display()))?;
    let counts = Counts::new(counts_image)
        .with_context(|| format!("{} is not a count image", counts_path.display()))?;

    let kernel = spec.kernel.build()?;
    let (h, w) = counts.dims();
    let tf = spectral::plan(&kernel, h, w)?;
    let config = spec.solver_config()?;

    std::fs::create_dir_all(&spec.out_dir)
        .with_context(|| format!("creating {}", spec.out_dir.display()))?;

    let problem = solver::Problem {
        tf: &tf,
        counts: &counts,
        config: config.clone(),
    };
    let (estimate, report) = solver::run(&problem, None)
        .map_err(|e| anyhow::anyhow!("solver failed after some iterations: {e}"))?;

    io::write_csv_matrix(&spec.out_dir.join("restored.csv"), &estimate)?;
    write_run_report_csv(&spec.out_dir.join("run_report.csv"), &report)?;
    io::write_metadata(
        &spec.out_dir.join("deconvolve_meta.txt"),
        &[
            ("counts", counts_path.display().to_string()),
            ("kernel", spec.kernel.describe()),
            ("tau", format!("{}", config.tau)),
            ("mu", format!("{}", config.mu)),
            (
                "mu_rule",
                if config.mu_rule { "tau/50" } else { "explicit" }.to_string(),
            ),
            ("max_iters", format!("{}", config.max_iters)),
            ("rel_change_tol", format!("{}", config.rel_change_tol)),
            (
                "final_estimate",
                match config.final_estimate {
                    pidal_core::FinalEstimate::X => "x".to_string(),
                    pidal_core::FinalEstimate::U => "u".to_string(),
                },
            ),
            ("iterations_run", format!("{}", report.iterations_run)),
            ("converged", format!("{}", report.converged)),
            (
                "all_counts_positive",
                format!("{}", report.all_counts_positive),
            ),
            (
                "kernel_passes_constants",
                format!("{}", report.kernel_passes_constants),
            ),
            (
                "unique_minimizer_condition",
                format!("{}", report.unique_minimizer_condition()),
            ),
        ],
    )?;
    Ok(())
}

/// One row per iteration: objective, primal residuals, relative change.
pub fn write_run_report_csv(path: &Path, report: &RunReport) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "iteration,objective,primal_residual_1,primal_residual_2,rel_change"
    )?;
    for (k, record) in report.history.iter().enumerate() {
        let objective = record
            .objective
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            k + 1,
            objective,
            record.primal_residual_1,
            record.primal_residual_2,
            record.rel_change
        )?;
    }
    out.flush()?;
    Ok(())
}
