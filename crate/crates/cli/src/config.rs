//! Key-value config files and flag/file/default resolution.

use std::path::{Path, PathBuf};

use hdgranger::hac::KernelKind;
use hdgranger::pipeline::FitConfig;
use hdgranger::sglasso::{GroupWeighting, SolverSettings};
use serde::{Deserialize, Serialize};

use crate::args::{DataArgs, ModelArgs};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Every key accepted in a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub p: Option<usize>,
    pub rho: Option<f64>,
    pub n_active: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub mt_grid: Option<Vec<usize>>,
    pub kernel: Option<OneOrMany>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub n_folds: Option<usize>,
    pub grid_size: Option<usize>,
    pub grid_min_ratio: Option<f64>,
    pub tol: Option<f64>,
    pub max_cycles: Option<usize>,
    pub noise_sd: Option<f64>,
    pub beta_low: Option<f64>,
    pub beta_high: Option<f64>,
    pub freeze_beta: Option<bool>,
    pub standardize: Option<bool>,
    pub lags: Option<usize>,
    pub ar_lags: Option<usize>,
    pub legendre_degree: Option<usize>,
    pub group_weights: Option<GroupWeighting>,
    pub threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if cfg.folds.is_some() && cfg.n_folds.is_some() {
            return Err(CliError::config("give either folds or n_folds, not both"));
        }
        Ok(cfg)
    }

    pub fn folds(&self) -> Option<usize> {
        self.folds.or(self.n_folds)
    }

    pub fn kernels(&self) -> Option<Vec<String>> {
        self.kernel.clone().map(OneOrMany::into_vec)
    }
}

pub fn parse_kernels(names: &[String]) -> CliResult<Vec<KernelKind>> {
    let mut out = Vec::new();
    for n in names {
        let k: KernelKind = n.parse().map_err(|_| {
            CliError::config(format!(
                "unknown kernel '{n}' (expected parzen, qs or bartlett)"
            ))
        })?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

/// Design-matrix knobs after defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignConfig {
    pub data: PathBuf,
    pub response: String,
    pub groups: Option<PathBuf>,
    pub lags: usize,
    pub ar_lags: usize,
    pub hf: Vec<String>,
    pub legendre_degree: usize,
}

/// Everything a model-based command needs, defaults materialized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub design: DesignConfig,
    pub fit: FitConfig,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

fn resolve_design(a: &DataArgs, f: &FileConfig) -> DesignConfig {
    DesignConfig {
        data: a.data.clone(),
        response: a.response.clone(),
        groups: a.groups.clone(),
        lags: a.lags.or(f.lags).unwrap_or(0),
        ar_lags: a.ar_lags.or(f.ar_lags).unwrap_or(0),
        hf: a.hf.clone(),
        legendre_degree: a.legendre_degree.or(f.legendre_degree).unwrap_or(3),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn resolve_fit(
    alpha: Option<f64>,
    lambda: Option<f64>,
    folds: Option<usize>,
    grid_size: Option<usize>,
    grid_min_ratio: Option<f64>,
    tol: Option<f64>,
    max_cycles: Option<usize>,
    weighting: Option<GroupWeighting>,
    f: &FileConfig,
) -> CliResult<FitConfig> {
    let d = FitConfig::default();
    let fit = FitConfig {
        alpha: alpha.or(f.alpha).unwrap_or(d.alpha),
        n_folds: folds.or(f.folds()).unwrap_or(d.n_folds),
        grid_size: grid_size.or(f.grid_size).unwrap_or(d.grid_size),
        grid_min_ratio: grid_min_ratio
            .or(f.grid_min_ratio)
            .unwrap_or(d.grid_min_ratio),
        lambda: lambda.or(f.lambda),
        weighting: weighting.or(f.group_weights).unwrap_or(d.weighting),
        solver: SolverSettings {
            tol: tol.or(f.tol).unwrap_or(d.solver.tol),
            max_cycles: max_cycles.or(f.max_cycles).unwrap_or(d.solver.max_cycles),
            trace_objective: false,
        },
    };
    fit.validate()?;
    if fit.n_folds < 2 {
        return Err(CliError::config(format!(
            "need at least 2 folds, got {}",
            fit.n_folds
        )));
    }
    Ok(fit)
}

pub fn resolve_model(a: &ModelArgs) -> CliResult<(ModelConfig, FileConfig)> {
    let f = FileConfig::load(a.config.as_deref())?;
    let fit = resolve_fit(
        a.alpha,
        a.lambda,
        a.folds,
        a.grid_size,
        a.grid_min_ratio,
        a.tol,
        a.max_cycles,
        a.sqrt_group_weights.then_some(GroupWeighting::SqrtSize),
        &f,
    )?;
    let cfg = ModelConfig {
        design: resolve_design(&a.data, &f),
        fit,
        seed: a.seed.or(f.seed),
        threads: a.threads.or(f.threads),
        out: a.out.clone(),
    };
    check_threads(cfg.threads)?;
    check_out_path(&cfg.out)?;
    Ok((cfg, f))
}

pub fn check_threads(threads: Option<usize>) -> CliResult<()> {
    if threads == Some(0) {
        return Err(CliError::config("threads must be positive"));
    }
    Ok(())
}

/// The output directory must exist before any work starts.
pub fn check_out_path(path: &Path) -> CliResult<()> {
    if path.as_os_str().is_empty() || path.is_dir() {
        return Err(CliError::config(format!(
            "output path '{}' is not a file path",
            path.display()
        )));
    }
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::config(format!(
            "output directory '{}' does not exist",
            parent.display()
        )));
    }
    Ok(())
}
