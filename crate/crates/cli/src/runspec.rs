//! Run specification shared by the subcommands: kernel specs, seed lists,
//! and config-file merging (file values fill in flags left unset).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pidal_core::{BlurKernel, FinalEstimate, Image, PixelIndex, SolverConfig};

use crate::io;

/// Blur kernel selector: `uniform:K` (odd K) or a path to a CSV taps matrix
/// with odd dimensions and a centered anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KernelSpec {
    Uniform(usize),
    TapsFile(PathBuf),
}

impl KernelSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(size) = text.strip_prefix("uniform:") {
            let size: usize = size
                .parse()
                .with_context(|| format!("bad uniform kernel size {size:?}"))?;
            if size == 0 || size % 2 == 0 {
                bail!("uniform kernel size must be odd and positive, got {size}");
            }
            return Ok(KernelSpec::Uniform(size));
        }
        let path = text.strip_prefix("taps:").unwrap_or(text);
        Ok(KernelSpec::TapsFile(PathBuf::from(path)))
    }

    pub fn build(&self) -> Result<BlurKernel> {
        match self {
            KernelSpec::Uniform(size) => {
                BlurKernel::uniform(*size).map_err(anyhow::Error::from)
            }
            KernelSpec::TapsFile(path) => {
                let taps = io::read_csv_matrix(path)
                    .with_context(|| format!("reading kernel taps {}", path.display()))?;
                let (h, w) = taps.dims();
                if h % 2 == 0 || w % 2 == 0 {
                    bail!(
                        "kernel taps must have odd dimensions for a centered anchor, got {h}x{w}"
                    );
                }
                BlurKernel::new(taps, PixelIndex::new(h / 2, w / 2))
                    .with_context(|| format!("invalid kernel in {}", path.display()))
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            KernelSpec::Uniform(size) => format!("uniform:{size}"),
            KernelSpec::TapsFile(path) => format!("taps:{}", path.display()),
        }
    }
}

/// Parses `1..10` (inclusive), `3`, or `1,4,9` into a seed list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().context("seed range start")?;
        let hi: u64 = hi.trim().parse().context("seed range end")?;
        if hi < lo {
            bail!("empty seed range {text:?}");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed {tok:?}"))
        })
        .collect()
}

/// Parses a comma-separated list of positive reals (τ grids, intensity
/// levels).
pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let v: f64 = tok
                .trim()
                .parse()
                .with_context(|| format!("bad value {tok:?}"))?;
            if !(v > 0.0) {
                bail!("values must be positive, got {v}");
            }
            Ok(v)
        })
        .collect()
}

/// Fully resolved parameters of one run, after merging CLI flags with an
/// optional config file (flags win).
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub truth: Option<PathBuf>,
    pub counts: Option<PathBuf>,
    pub kernel: KernelSpec,
    pub scale_max: Option<f64>,
    pub tau: Option<f64>,
    pub mu: Option<f64>,
    pub mu_rule: bool,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub max_iters: Option<usize>,
    pub rel_change_tol: Option<f64>,
    pub final_estimate: FinalEstimate,
}

impl RunSpec {
    /// Builds the solver configuration; `tau` is required, `mu` comes from
    /// the explicit flag or the τ/50 rule.
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let tau = self
            .tau
            .context("tau is required (set --tau or tau = ... in the config file)")?;
        let mut config = match (self.mu, self.mu_rule) {
            (Some(mu), false) => SolverConfig::new(tau, mu)?,
            (Some(_), true) => bail!("--mu and --mu-rule are mutually exclusive"),
            (None, _) => SolverConfig::with_mu_rule(tau)?,
        };
        if let Some(iters) = self.max_iters {
            config.max_iters = iters;
        }
        if let Some(tol) = self.rel_change_tol {
            config.rel_change_tol = tol;
        }
        config.final_estimate = self.final_estimate;
        Ok(config)
    }
}

pub fn parse_final_estimate(text: &str) -> Result<FinalEstimate> {
    match text {
        "x" => Ok(FinalEstimate::X),
        "u" => Ok(FinalEstimate::U),
        other => bail!("final estimate must be `x` or `u`, got {other:?}"),
    }
}

/// Loads a truth or counts image by extension.
pub fn load_image(path: &Path) -> Result<Image> {
    io::read_image_auto(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_uniform_kernel() {
        let spec = KernelSpec::parse("uniform:9").unwrap();
        assert_eq!(spec, KernelSpec::Uniform(9));
        let kernel = spec.build().unwrap();
        assert_eq!(kernel.taps().dims(), (9, 9));
        assert!((kernel.taps().get(0, 0) - 1.0 / 81.0).abs() < 1e-15);
        assert_eq!(kernel.anchor(), PixelIndex::new(4, 4));
    }

    #[test]
    fn rejects_even_uniform_kernel() {
        assert!(KernelSpec::parse("uniform:8").is_err());
        assert!(KernelSpec::parse("uniform:0").is_err());
    }

    #[test]
    fn parses_seed_range_inclusive() {
        assert_eq!(parse_seeds("1..10").unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("2, 5, 9").unwrap(), vec![2, 5, 9]);
        assert!(parse_seeds("9..2").is_err());
    }

    #[test]
    fn parses_tau_grid() {
        let grid = parse_f64_list("1e-3, 2e-3").unwrap();
        assert_eq!(grid, vec![1e-3, 2e-3]);
        assert!(parse_f64_list("0").is_err());
    }
}
