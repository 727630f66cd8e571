//! PIDAL outer loop: one non-linear block Gauss–Seidel sweep over (x, z, u)
//! per iteration, followed by scaled dual updates, with residual and
//! objective tracking.

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::poisson::{self, Counts};
use crate::spectral::TransferFunction;
use crate::tv::{self, DualField, TvDenoiseSettings};

/// Which splitting variable a finished run reports.
///
/// `U` carries the TV regularizer exactly and equals `x` at convergence;
/// it is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FinalEstimate {
    X,
    #[default]
    U,
}

/// Solver parameters: regularization weight τ, penalty μ, outer-loop caps,
/// and the inner TV-denoiser budget.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tau: f64,
    pub mu: f64,
    /// True when μ was derived from the τ/50 rule of thumb.
    pub mu_rule: bool,
    pub max_iters: usize,
    pub rel_change_tol: f64,
    /// Iterations before the relative-change rule may fire. The reference
    /// initialization makes the first x-update an exact fixed point of the
    /// x-block alone (rel_change ≈ 0 spuriously), so this must be ≥ 2.
    pub min_iters: usize,
    pub tv_settings: TvDenoiseSettings,
    pub final_estimate: FinalEstimate,
    /// Record the penalized objective at `u` each iteration. Costs one extra
    /// convolution per iteration; disable in parameter sweeps.
    pub track_objective: bool,
}

impl SolverConfig {
    /// Explicit (τ, μ). τ may be zero (pure likelihood fit); μ must be
    /// strictly positive.
    pub fn new(tau: f64, mu: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tau",
                message: format!("regularization parameter must be nonnegative, got {tau}"),
            });
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                message: format!("penalty parameter must be positive, got {mu}"),
            });
        }
        Ok(SolverConfig {
            tau,
            mu,
            mu_rule: false,
            max_iters: 500,
            rel_change_tol: 1e-5,
            min_iters: 2,
            tv_settings: TvDenoiseSettings::default(),
            final_estimate: FinalEstimate::default(),
            track_objective: true,
        })
    }

    /// τ with μ = τ/50, the rule of thumb used by both experiments.
    pub fn with_mu_rule(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tau",
                message: format!("mu rule requires positive tau, got {tau}"),
            });
        }
        let mut config = SolverConfig::new(tau, tau / 50.0)?;
        config.mu_rule = true;
        Ok(config)
    }

    /// TV prox weight τ/μ used by the u-update.
    pub fn tv_weight(&self) -> f64 {
        self.tau / self.mu
    }
}

/// Per-iteration convergence diagnostics.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Penalized objective at `u` (intensity floored at 1e-12 inside the
    /// log); `None` when tracking is disabled.
    pub objective: Option<f64>,
    /// ‖Kx − z‖₂
    pub primal_residual_1: f64,
    /// ‖x − u‖₂
    pub primal_residual_2: f64,
    /// ‖x_{k+1} − x_k‖₂ / ‖x_k‖₂
    pub rel_change: f64,
}

/// The six iterates plus history. Construct with [`SolverState::initialize`]
/// (the reference initialization) or [`SolverState::from_iterates`].
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Image,
    pub z: Image,
    pub u: Image,
    pub d1: Image,
    pub d2: Image,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    /// Warm-started dual field for the inner TV denoiser.
    tv_dual: DualField,
}

impl SolverState {
    /// Reference initialization: x₀ = y, z₀ = Kx₀, u₀ = x₀, zero duals.
    pub fn initialize(tf: &TransferFunction, counts: &Counts) -> Result<Self> {
        let x = counts.image().clone();
        let z = tf.convolve(&x)?;
        let (h, w) = x.dims();
        Ok(SolverState {
            u: x.clone(),
            z,
            x,
            d1: Image::zeros(h, w),
            d2: Image::zeros(h, w),
            iteration: 0,
            history: Vec::new(),
            tv_dual: DualField::zeros(h, w),
        })
    }

    /// Custom starting iterates; all images must share dimensions.
    pub fn from_iterates(x: Image, z: Image, u: Image, d1: Image, d2: Image) -> Result<Self> {
        for (other, name) in [(&z, "z"), (&u, "u"), (&d1, "d1"), (&d2, "d2")] {
            if !x.same_dims(other) {
                return Err(Error::InvalidParameter {
                    name: "solver state",
                    message: format!("{name} dimensions {:?} differ from x {:?}", other.dims(), x.dims()),
                });
            }
        }
        let (h, w) = x.dims();
        Ok(SolverState {
            x,
            z,
            u,
            d1,
            d2,
            iteration: 0,
            history: Vec::new(),
            tv_dual: DualField::zeros(h, w),
        })
    }

    fn check_problem_dims(&self, problem: &Problem) -> Result<()> {
        let dims = problem.tf.dims();
        if self.x.dims() != dims || problem.counts.dims() != dims {
            return Err(Error::dims("solver state", dims, self.x.dims()));
        }
        Ok(())
    }
}

/// A deconvolution instance: transfer function, observed counts, parameters.
pub struct Problem<'a> {
    pub tf: &'a TransferFunction,
    pub counts: &'a Counts,
    pub config: SolverConfig,
}

/// Outcome of [`run`]: iteration history plus diagnostics.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub history: Vec<IterationRecord>,
    pub iterations_run: usize,
    /// True when the relative-change stopping rule fired before `max_iters`.
    pub converged: bool,
    pub final_objective: Option<f64>,
    /// Strict-convexity diagnostic: every observed count nonzero.
    pub all_counts_positive: bool,
    /// Strict-convexity diagnostic: constants survive the blur
    /// (DC gain nonzero), i.e. constant images are outside ker K.
    pub kernel_passes_constants: bool,
}

impl RunReport {
    /// Both sufficient conditions for a unique minimizer hold.
    pub fn unique_minimizer_condition(&self) -> bool {
        self.all_counts_positive && self.kernel_passes_constants
    }
}

fn ensure_finite(image: &Image, step: &'static str, iteration: usize) -> Result<()> {
    if image.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step, iteration })
    }
}

/// One PIDAL iteration, mutating `state` in place and appending an
/// [`IterationRecord`].
pub fn pidal_step(state: &mut SolverState, problem: &Problem) -> Result<()> {
    state.check_problem_dims(problem)?;
    let config = &problem.config;
    let iteration = state.iteration;

    // x' = z + d1, x'' = u + d2
    let x_prime = state.z.add(&state.d1)?;
    let x_dblprime = state.u.add(&state.d2)?;
    ensure_finite(&x_prime, "x-update inputs", iteration)?;
    ensure_finite(&x_dblprime, "x-update inputs", iteration)?;

    // x ← argmin ‖Kx−x'‖² + ‖x−x''‖², with Kx reused below
    let (x_new, kx) = problem.tf.solve_x_update_with_kx(&x_prime, &x_dblprime)?;
    ensure_finite(&x_new, "x-update", iteration)?;

    // z ← prox of the Poisson likelihood at Kx − d1
    let z_prime = kx.sub(&state.d1)?;
    let z_new = poisson::prox_poisson(&z_prime, problem.counts, config.mu)?;
    ensure_finite(&z_new, "z-update", iteration)?;

    // u ← TV prox at x − d2 with weight τ/μ, warm-started dual
    let u_prime = x_new.sub(&state.d2)?;
    let u_new = tv::tv_denoise_warm(
        &u_prime,
        config.tv_weight(),
        &config.tv_settings,
        &mut state.tv_dual,
    )?;
    ensure_finite(&u_new, "u-update", iteration)?;

    // scaled dual updates
    let d1_new = state.d1.sub(&kx.sub(&z_new)?)?;
    let d2_new = state.d2.sub(&x_new.sub(&u_new)?)?;
    ensure_finite(&d1_new, "d1-update", iteration)?;
    ensure_finite(&d2_new, "d2-update", iteration)?;

    let primal_residual_1 = kx.sub(&z_new)?.l2_norm();
    let primal_residual_2 = x_new.sub(&u_new)?.l2_norm();
    let prev_norm = state.x.l2_norm();
    let diff_norm = x_new.sub(&state.x)?.l2_norm();
    let rel_change = if prev_norm > 0.0 {
        diff_norm / prev_norm
    } else if diff_norm > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };

    let objective_value = if config.track_objective {
        Some(objective(&u_new, problem.tf, problem.counts, config.tau)?)
    } else {
        None
    };

    state.x = x_new;
    state.z = z_new;
    state.u = u_new;
    state.d1 = d1_new;
    state.d2 = d2_new;
    state.iteration += 1;
    state.history.push(IterationRecord {
        objective: objective_value,
        primal_residual_1,
        primal_residual_2,
        rel_change,
    });
    Ok(())
}

/// Runs PIDAL until the relative change of x drops below
/// `rel_change_tol` or `max_iters` is reached. Returns the estimate selected
/// by `config.final_estimate` and the full report.
pub fn run(problem: &Problem, init: Option<SolverState>) -> Result<(Image, RunReport)> {
    let mut state = match init {
        Some(state) => state,
        None => SolverState::initialize(problem.tf, problem.counts)?,
    };
    state.check_problem_dims(problem)?;

    let mut converged = false;
    for _ in 0..problem.config.max_iters {
        pidal_step(&mut state, problem)?;
        let record = state.history.last().expect("step appends a record");
        if state.iteration >= problem.config.min_iters
            && record.rel_change < problem.config.rel_change_tol
        {
            converged = true;
            break;
        }
    }

    let report = RunReport {
        iterations_run: state.iteration,
        converged,
        final_objective: state.history.last().and_then(|r| r.objective),
        all_counts_positive: problem.counts.all_positive(),
        kernel_passes_constants: problem.tf.dc_gain().abs() > f64::EPSILON,
        history: state.history,
    };
    let estimate = match problem.config.final_estimate {
        FinalEstimate::X => state.x,
        FinalEstimate::U => state.u,
    };
    Ok((estimate, report))
}

/// Penalized objective `Σ (Kx)ᵢ − yᵢ log((Kx)ᵢ) + τ·TV(x)` with the blurred
/// intensity floored at 1e-12 to guard the log (diagnostics only).
pub fn objective(x: &Image, tf: &TransferFunction, counts: &Counts, tau: f64) -> Result<f64> {
    let kx = tf.convolve(x)?.map(|v| v.max(1e-12));
    let likelihood = poisson::neg_log_likelihood(counts, &kx)?;
    Ok(likelihood + tau * tv::tv_norm(x))
}
