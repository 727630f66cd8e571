use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pidal_cli::bench::{self, BenchmarkOptions};
use pidal_cli::commands;
use pidal_cli::io;
use pidal_cli::runspec::{
    parse_f64_list, parse_final_estimate, parse_seeds, KernelSpec, RunSpec,
};

/// Poisson image deconvolution by augmented Lagrangian with TV
/// regularization.
#[derive(Parser)]
#[command(name = "pidal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate Poisson-observed counts from a truth image.
    Simulate(SimulateArgs),
    /// Restore a counts image.
    Deconvolve(DeconvolveArgs),
    /// Replicate a full experiment preset over seeds and intensity levels.
    Benchmark(BenchmarkArgs),
}

/// Flags common to all subcommands; unset flags fall back to the config
/// file, then to defaults.
#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Blur kernel: `uniform:K` (odd K) or a CSV taps file.
    #[arg(long)]
    kernel: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Truth image (CSV matrix or PGM).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Peak intensity the truth is rescaled to.
    #[arg(long = "scale-max")]
    scale_max: Option<f64>,
    /// Single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed list: `1..10`, `3`, or `1,4,9`. Overrides --seed.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct DeconvolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Observed counts image (PGM or CSV matrix).
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Regularization parameter τ.
    #[arg(long)]
    tau: Option<f64>,
    /// Augmented Lagrangian penalty μ (otherwise the τ/50 rule applies).
    #[arg(long)]
    mu: Option<f64>,
    /// Derive μ from τ; the only supported rule is `tau/50`.
    #[arg(long = "mu-rule")]
    mu_rule: Option<String>,
    /// Outer iteration cap.
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Relative-change stopping tolerance on x.
    #[arg(long)]
    tol: Option<f64>,
    /// Which splitting variable to report: `x` or `u`.
    #[arg(long = "final")]
    final_estimate: Option<String>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Experiment preset: `exp1` or `exp2`.
    #[arg(long)]
    preset: Option<String>,
    /// Truth image (256x256 grayscale; CSV matrix or PGM).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Seed list: `1..10`, `3`, or `1,4,9`.
    #[arg(long)]
    seeds: Option<String>,
    /// Override the preset's τ grid (comma-separated values).
    #[arg(long = "tau-grid")]
    tau_grid: Option<String>,
}

/// Config-file values keyed by flag name.
struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            for (key, value) in io::read_key_values(path)? {
                map.insert(key, value);
            }
        }
        Ok(FileConfig(map))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    fn path(&self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.get(key).map(PathBuf::from))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::error::Error + Send + Sync + 'static,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
            .map(|raw| raw.parse::<T>().with_context(|| format!("config key {key}: bad value {raw:?}")))
            .transpose()
    }

    fn string(&self, key: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.get(key).map(str::to_string))
    }
}

fn kernel_spec(common: &CommonArgs, file: &FileConfig) -> Result<KernelSpec> {
    let text = file
        .string("kernel", common.kernel.clone())
        .context("kernel is required (set --kernel or kernel = ... in the config file)")?;
    KernelSpec::parse(&text)
}

fn out_dir(common: &CommonArgs, file: &FileConfig) -> Result<PathBuf> {
    file.path("out", common.out.clone())
        .context("output directory is required (set --out)")
}

fn seed_list(flag: Option<&str>, single: Option<u64>, file: &FileConfig) -> Result<Vec<u64>> {
    if let Some(text) = flag {
        return parse_seeds(text);
    }
    if let Some(seed) = single {
        return Ok(vec![seed]);
    }
    match file.get("seeds") {
        Some(text) => parse_seeds(text),
        None => Ok(Vec::new()),
    }
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_ref())?;
    let seeds = seed_list(args.seeds.as_deref(), args.seed, &file)?;
    let spec = RunSpec {
        truth: file.path("truth", args.truth),
        counts: None,
        kernel: kernel_spec(&args.common, &file)?,
        scale_max: file.parse("scale-max", args.scale_max)?,
        tau: None,
        mu: None,
        mu_rule: false,
        seeds,
        out_dir: out_dir(&args.common, &file)?,
        max_iters: None,
        rel_change_tol: None,
        final_estimate: Default::default(),
    };
    commands::simulate(&spec)
}

fn run_deconvolve(args: DeconvolveArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_ref())?;
    if let Some(rule) = file.string("mu-rule", args.mu_rule.clone()) {
        if rule != "tau/50" {
            anyhow::bail!("unsupported mu rule {rule:?}; only tau/50 is defined");
        }
    }
    let mu_rule = file.string("mu-rule", args.mu_rule).is_some();
    let final_estimate = match file.string("final", args.final_estimate) {
        Some(text) => parse_final_estimate(&text)?,
        None => Default::default(),
    };
    let spec = RunSpec {
        truth: None,
        counts: file.path("counts", args.counts),
        kernel: kernel_spec(&args.common, &file)?,
        scale_max: None,
        tau: file.parse("tau", args.tau)?,
        mu: file.parse("mu", args.mu)?,
        mu_rule,
        seeds: Vec::new(),
        out_dir: out_dir(&args.common, &file)?,
        max_iters: file.parse("max-iters", args.max_iters)?,
        rel_change_tol: file.parse("tol", args.tol)?,
        final_estimate,
    };
    commands::deconvolve(&spec)
}

fn run_benchmark(args: BenchmarkArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_ref())?;
    let preset_name = file
        .string("preset", args.preset)
        .context("benchmark requires --preset exp1|exp2")?;
    let mut preset = bench::preset_by_name(&preset_name)?;
    if let Some(text) = file.string("kernel", args.common.kernel.clone()) {
        preset.kernel = KernelSpec::parse(&text)?;
    }
    let truth = file
        .path("truth", args.truth)
        .context("benchmark requires --truth PATH (a 256x256 grayscale image)")?;
    let seeds = match file.string("seeds", args.seeds) {
        Some(text) => parse_seeds(&text)?,
        None => (1..=10).collect(),
    };
    let out = out_dir(&args.common, &file)?;
    let mut options = BenchmarkOptions::new(truth, seeds, out);
    if let Some(text) = file.string("tau-grid", args.tau_grid) {
        options.tau_grid_override = Some(parse_f64_list(&text)?);
    }
    let summary = bench::run_benchmark(&preset, &options)?;
    for level in &summary.levels {
        println!(
            "{} level {}: tau* = {:.6}, mean ISNR = {:.3} dB, mean MAE = {:.4}",
            summary.preset, level.level, level.tau_star, level.mean_isnr_db, level.mean_mae
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => run_simulate(args),
        Command::Deconvolve(args) => run_deconvolve(args),
        Command::Benchmark(args) => run_benchmark(args),
    }
}
