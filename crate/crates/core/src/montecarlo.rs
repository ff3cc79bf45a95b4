//! Simulation harness: AR(1) design, per-replication debiased inference and
//! coverage/length aggregation.

use ndarray::{Array1, Array2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, GroupStructure, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::hac::LongRunVariance;
use crate::hac::{autocovariances, hac_from_autocovariances, score_series, KernelKind, KernelSpec};
use crate::inference::{debias, granger_test};
use crate::pipeline::{FitConfig, Workspace};

/// Gaussian AR(1) design: `x_{t,j}` and `u_t` independent AR(1) paths
/// started from their stationary law, `y = X beta + u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub t: usize,
    pub p: usize,
    pub rho: f64,
    pub n_active: usize,
    pub beta_low: f64,
    pub beta_high: f64,
    /// Innovation scale of the error process.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            t: 1000,
            p: 10,
            rho: 0.6,
            n_active: 5,
            beta_low: 0.0,
            beta_high: 4.0,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Configuration(format!(
                "rho {} not in (-1, 1)",
                self.rho
            )));
        }
        if self.p == 0 || self.t < 2 {
            return Err(Error::Configuration(format!(
                "need p >= 1 and T >= 2, got p={} T={}",
                self.p, self.t
            )));
        }
        if self.n_active > self.p {
            return Err(Error::Configuration(format!(
                "n_active {} exceeds p {}",
                self.n_active, self.p
            )));
        }
        if !(self.beta_low <= self.beta_high)
            || !self.beta_low.is_finite()
            || !self.beta_high.is_finite()
        {
            return Err(Error::Configuration(
                "beta bounds must satisfy low <= high".into(),
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Configuration(format!(
                "noise_sd {} must be >= 0",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// Stream-split generator: replication `i` of master seed `s` is stream `i`.
pub fn replication_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Seed of replication `index` under a master seed.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    replication_rng(master, index).next_u64()
}

/// Leading `n_active` entries `U(low, high)`, rest zero.
pub fn draw_beta<R: Rng + ?Sized>(config: &DgpConfig, rng: &mut R) -> Array1<f64> {
    let mut beta = Array1::zeros(config.p);
    if config.beta_high > config.beta_low {
        let law = Uniform::new(config.beta_low, config.beta_high).expect("bounds checked");
        for b in beta.iter_mut().take(config.n_active) {
            *b = law.sample(rng);
        }
    } else {
        beta.iter_mut()
            .take(config.n_active)
            .for_each(|b| *b = config.beta_low);
    }
    beta
}

fn ar1_path<R: Rng + ?Sized>(t: usize, rho: f64, scale: f64, rng: &mut R, out: &mut [f64]) {
    let sd0 = scale / (1.0 - rho * rho).sqrt();
    let z: f64 = StandardNormal.sample(rng);
    let mut prev = sd0 * z;
    out[0] = prev;
    for v in out.iter_mut().take(t).skip(1) {
        let e: f64 = StandardNormal.sample(rng);
        prev = rho * prev + scale * e;
        *v = prev;
    }
}

/// Draw `(X, u)` and return `y = X beta + u` for a given `beta`.
pub fn simulate_with_beta<R: Rng + ?Sized>(
    config: &DgpConfig,
    beta: &Array1<f64>,
    rng: &mut R,
) -> Result<TimeSeriesDataset> {
    config.validate()?;
    if beta.len() != config.p {
        return Err(Error::Dimension(format!(
            "beta has {} entries, p = {}",
            beta.len(),
            config.p
        )));
    }
    let (t, p) = (config.t, config.p);
    let mut x = Array2::<f64>::zeros((t, p));
    let mut buf = vec![0.0; t];
    for j in 0..p {
        ar1_path(t, config.rho, 1.0, rng, &mut buf);
        x.column_mut(j)
            .iter_mut()
            .zip(&buf)
            .for_each(|(d, s)| *d = *s);
    }
    ar1_path(t, config.rho, config.noise_sd, rng, &mut buf);
    let y = x.dot(beta) + Array1::from(buf);
    let names = (0..p).map(|j| format!("x{j}")).collect();
    TimeSeriesDataset::new(y, x, names)
}

/// Draw `beta`, then the sample, from `config.seed`.
pub fn simulate_dgp(config: &DgpConfig) -> Result<(TimeSeriesDataset, Array1<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let beta = draw_beta(config, &mut rng);
    let data = simulate_with_beta(config, &beta, &mut rng)?;
    Ok((data, beta))
}

/// Coverage experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `seed` is the master seed.
    pub dgp: DgpConfig,
    pub n_reps: usize,
    pub mt_grid: Vec<f64>,
    pub kernel: KernelKind,
    pub fit: FitConfig,
    /// Draw `beta` once from the master seed instead of per replication.
    pub freeze_beta: bool,
    pub standardize: bool,
    /// Coverage band and interval half-width multiplier.
    pub critical_value: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            n_reps: 500,
            mt_grid: (1..=12).map(|k| 5.0 * k as f64).collect(),
            kernel: KernelKind::Parzen,
            fit: FitConfig::default(),
            freeze_beta: false,
            standardize: false,
            critical_value: 1.96,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.fit.validate()?;
        if self.n_reps == 0 {
            return Err(Error::Configuration("n_reps must be positive".into()));
        }
        if self.mt_grid.is_empty() {
            return Err(Error::Configuration("mt_grid is empty".into()));
        }
        for &m in &self.mt_grid {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Configuration(format!(
                    "bandwidth {m} must be positive"
                )));
            }
        }
        if !(self.critical_value > 0.0 && self.critical_value.is_finite()) {
            return Err(Error::Configuration(format!(
                "critical value {} must be positive",
                self.critical_value
            )));
        }
        if self.fit.n_folds < 2 || 2 * self.fit.n_folds > self.dgp.t {
            return Err(Error::Configuration(format!(
                "{} folds need 2 <= K and T >= {}",
                self.fit.n_folds,
                2 * self.fit.n_folds
            )));
        }
        Ok(())
    }

    fn frozen_beta(&self) -> Option<Array1<f64>> {
        self.freeze_beta
            .then(|| draw_beta(&self.dgp, &mut replication_rng(self.dgp.seed, u64::MAX)))
    }
}

/// Output of one replication. Vectors indexed `[bandwidth][coordinate]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub beta_true: Array1<f64>,
    pub beta_hat: Array1<f64>,
    pub beta_debiased: Array1<f64>,
    pub pivots: Vec<Vec<f64>>,
    /// `sqrt(Xi_jj / T)`.
    pub std_errors: Vec<Vec<f64>>,
    pub lambda: f64,
    pub converged: bool,
    pub max_kkt_violation: f64,
}

impl ReplicationOutcome {
    pub fn active(&self) -> Vec<bool> {
        self.beta_true.iter().map(|b| *b != 0.0).collect()
    }
}

/// Fit, nodewise rows for every coordinate, debias, then pivots against the
/// truth for each bandwidth in `config.mt_grid`.
pub fn run_replication(config: &ExperimentConfig, index: usize) -> Result<ReplicationOutcome> {
    let mut rng = replication_rng(config.dgp.seed, index as u64);
    let beta = match config.frozen_beta() {
        Some(b) => b,
        None => draw_beta(&config.dgp, &mut rng),
    };
    let raw = simulate_with_beta(&config.dgp, &beta, &mut rng)?;
    let (data, beta_true) = if config.standardize {
        let (d, rec) = standardize(&raw)?;
        let scaled = Array1::from_iter(beta.iter().zip(&rec.column_sds).map(|(b, s)| b * s));
        (d, scaled)
    } else {
        (raw, beta)
    };
    replicate_on(config, index, &data, beta_true)
}

fn replicate_on(
    config: &ExperimentConfig,
    index: usize,
    data: &TimeSeriesDataset,
    beta_true: Array1<f64>,
) -> Result<ReplicationOutcome> {
    let p = data.n_features();
    let t = data.n_obs();
    let ws = Workspace::new(data, config.fit.n_folds)?;
    let model = ws.fit(&GroupStructure::singletons(p), &config.fit)?;
    let all: Vec<usize> = (0..p).collect();
    let prec = ws.precision(&all, &config.fit.nodewise_lambda(), &config.fit.solver)?;
    let est = debias(&model.fit, &prec, data)?;
    let scores = score_series(&model.fit.residuals, data, &prec)?;

    let kernels = config
        .mt_grid
        .iter()
        .map(|&m| KernelSpec::new(config.kernel, m))
        .collect::<Result<Vec<_>>>()?;
    let max_lags = kernels.iter().map(|k| k.lag_count(t)).max().unwrap_or(1);
    let acov = autocovariances(scores.view(), max_lags);

    let mut pivots = Vec::with_capacity(kernels.len());
    let mut std_errors = Vec::with_capacity(kernels.len());
    for k in &kernels {
        let (xi, _) = hac_from_autocovariances(&acov, k);
        let mut piv = Vec::with_capacity(p);
        let mut se = Vec::with_capacity(p);
        for j in 0..p {
            let v = xi[[j, j]];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::DegenerateVariance { index: j, value: v });
            }
            let s = (v / t as f64).sqrt();
            piv.push((est.beta_debiased[j] - beta_true[j]) / s);
            se.push(s);
        }
        pivots.push(piv);
        std_errors.push(se);
    }

    let node_kkt = prec
        .nodes
        .values()
        .map(|n| n.kkt_violation)
        .fold(0.0f64, f64::max);
    let converged = model.fit.converged && prec.nodes.values().all(|n| n.converged);
    Ok(ReplicationOutcome {
        index,
        beta_true,
        beta_hat: model.fit.beta.clone(),
        beta_debiased: est.beta_debiased,
        pivots,
        std_errors,
        lambda: model.fit.penalty.lambda,
        converged,
        max_kkt_violation: model.kkt_violation.max(node_kkt),
    })
}

/// One bandwidth row of a coverage table. Set averages are `None` when the
/// set is empty in every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub bandwidth: f64,
    pub avcov_active: Option<f64>,
    pub avcov_inactive: Option<f64>,
    pub length_active: Option<f64>,
    pub length_inactive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub t: usize,
    pub p: usize,
    pub n_reps: usize,
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    pub fn row(&self, bandwidth: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.bandwidth == bandwidth)
    }

    /// CSV with one line per bandwidth.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into());
        let mut out =
            String::from("M_T,p,T,N,avcov_active,avcov_inactive,length_active,length_inactive\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.bandwidth,
                self.p,
                self.t,
                self.n_reps,
                fmt(r.avcov_active),
                fmt(r.avcov_inactive),
                fmt(r.length_active),
                fmt(r.length_inactive)
            ));
        }
        out
    }
}

#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Average coverage indicators and interval lengths over the active and
/// inactive coordinates of each replication, then over replications.
/// `z` is the critical value, lengths are `2 z se`.
pub fn aggregate_coverage(
    reps: &[ReplicationOutcome],
    mt_grid: &[f64],
    t: usize,
    z: f64,
) -> Result<CoverageTable> {
    let first = reps
        .first()
        .ok_or(Error::EmptyInput("no replications to aggregate".into()))?;
    let p = first.beta_true.len();
    for r in reps {
        if r.pivots.len() != mt_grid.len() || r.std_errors.len() != mt_grid.len() {
            return Err(Error::Dimension(format!(
                "replication {} has {} bandwidth cells, grid has {}",
                r.index,
                r.pivots.len(),
                mt_grid.len()
            )));
        }
        if r.beta_true.len() != p {
            return Err(Error::Dimension("replications differ in p".into()));
        }
    }
    let rows = mt_grid
        .iter()
        .enumerate()
        .map(|(m, &bandwidth)| {
            // [active, inactive]
            let mut cov = [Kahan::default(); 2];
            let mut len = [Kahan::default(); 2];
            let mut n = [0usize; 2];
            for r in reps {
                let mut hits = [0usize; 2];
                let mut count = [0usize; 2];
                let mut l = [Kahan::default(); 2];
                for (j, active) in r.active().into_iter().enumerate() {
                    let s = usize::from(!active);
                    count[s] += 1;
                    if r.pivots[m][j].abs() <= z {
                        hits[s] += 1;
                    }
                    l[s].add(2.0 * z * r.std_errors[m][j]);
                }
                for s in 0..2 {
                    if count[s] > 0 {
                        cov[s].add(hits[s] as f64 / count[s] as f64);
                        len[s].add(l[s].sum / count[s] as f64);
                        n[s] += 1;
                    }
                }
            }
            let avg = |k: Kahan, n: usize| (n > 0).then(|| k.sum / n as f64);
            CoverageRow {
                bandwidth,
                avcov_active: avg(cov[0], n[0]),
                avcov_inactive: avg(cov[1], n[1]),
                length_active: avg(len[0], n[0]),
                length_inactive: avg(len[1], n[1]),
            }
        })
        .collect();
    Ok(CoverageTable {
        t,
        p,
        n_reps: reps.len(),
        rows,
    })
}

/// A replication that raised an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplication {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub table: CoverageTable,
    pub outcomes: Vec<ReplicationOutcome>,
    pub failures: Vec<FailedReplication>,
    /// Replications where some solver hit `max_cycles`.
    pub nonconverged: usize,
    /// `beta` used by every replication when frozen.
    pub frozen_beta: Option<Vec<f64>>,
}

/// Run all replications (in parallel on the current rayon pool) and
/// aggregate. Output depends only on `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let results: Vec<Result<ReplicationOutcome>> = (0..config.n_reps)
        .into_par_iter()
        .map(|i| run_replication(config, i))
        .collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(FailedReplication {
                index: i,
                error: e.to_string(),
            }),
        }
    }
    if outcomes.is_empty() {
        return Err(Error::EmptyInput(format!(
            "all {} replications failed; first error: {}",
            failures.len(),
            failures.first().map(|f| f.error.as_str()).unwrap_or("")
        )));
    }
    let table = aggregate_coverage(
        &outcomes,
        &config.mt_grid,
        config.dgp.t,
        config.critical_value,
    )?;
    let nonconverged = outcomes.iter().filter(|o| !o.converged).count();
    Ok(ExperimentResult {
        table,
        nonconverged,
        frozen_beta: config.frozen_beta().map(|b| b.to_vec()),
        outcomes,
        failures,
    })
}

/// Size/power experiment for a Wald test on the last `group_beta.len()`
/// columns, with the leading `n_active` controls drawn as usual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldExperimentConfig {
    pub dgp: DgpConfig,
    pub group_beta: Vec<f64>,
    pub n_reps: usize,
    pub kernel: KernelSpec,
    pub fit: FitConfig,
    /// Significance level of the test.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldExperimentResult {
    pub p_values: Vec<f64>,
    pub rejection_rate: f64,
    pub failures: usize,
}

pub fn wald_replication(config: &WaldExperimentConfig, index: usize) -> Result<f64> {
    let g = config.group_beta.len();
    let p = config.dgp.p;
    if g == 0 || config.dgp.n_active + g > p {
        return Err(Error::Configuration(format!(
            "group of {g} plus {} controls exceeds p = {p}",
            config.dgp.n_active
        )));
    }
    let mut rng = replication_rng(config.dgp.seed, index as u64);
    let mut beta = draw_beta(&config.dgp, &mut rng);
    let group: Vec<usize> = (p - g..p).collect();
    for (&j, &b) in group.iter().zip(&config.group_beta) {
        beta[j] = b;
    }
    let data = simulate_with_beta(&config.dgp, &beta, &mut rng)?;
    let ws = Workspace::new(&data, config.fit.n_folds)?;
    let model = ws.fit(&GroupStructure::singletons(p), &config.fit)?;
    let prec = ws.precision(&group, &config.fit.nodewise_lambda(), &config.fit.solver)?;
    let est = debias(&model.fit, &prec, &data)?;
    let scores = score_series(&model.fit.residuals, &data, &prec)?;
    let acov = autocovariances(scores.view(), config.kernel.lag_count(data.n_obs()));
    let (xi, asymmetry) = hac_from_autocovariances(&acov, &config.kernel);
    let lrv = LongRunVariance {
        xi,
        kernel: config.kernel,
        group,
        asymmetry,
    };
    Ok(granger_test(&est, &lrv, data.n_obs())?.p_value)
}

/// Rejection frequency at `config.level` over replications that ran.
pub fn run_wald_experiment(config: &WaldExperimentConfig) -> Result<WaldExperimentResult> {
    config.dgp.validate()?;
    config.fit.validate()?;
    let results: Vec<Result<f64>> = (0..config.n_reps)
        .into_par_iter()
        .map(|i| wald_replication(config, i))
        .collect();
    let p_values: Vec<f64> = results
        .iter()
        .filter_map(|r| r.as_ref().ok().copied())
        .collect();
    if p_values.is_empty() {
        return Err(Error::EmptyInput("every Wald replication failed".into()));
    }
    let rejections = p_values.iter().filter(|&&pv| pv < config.level).count();
    Ok(WaldExperimentResult {
        rejection_rate: rejections as f64 / p_values.len() as f64,
        failures: results.len() - p_values.len(),
        p_values,
    })
}
