//! Sparse-group LASSO: penalty, composite proximal operator, block
//! coordinate descent solver, regularization grids and blocked
//! cross-validation.
//!
//! The estimator minimizes
//!
//! ```text
//! ||y - Xb||_T^2 + 2 * lambda * (alpha * |b|_1 + (1 - alpha) * sum_G w_G |b_G|_2)
//! ```
//!
//! with `||v||_T^2 = |v|_2^2 / T`. `alpha = 1` is the LASSO and `alpha = 0`
//! the group LASSO. Group weights `w_G` are 1 unless `GroupWeighting::SqrtSize`
//! is selected.

mod cv;
mod moments;
mod solver;

pub use cv::{cv_select, cv_select_moments, fold_boundaries, CvResult};
pub use moments::{FoldedCrossProducts, Moments};
pub use solver::{BlockSolver, Solution};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{GroupStructure, TimeSeriesDataset};
use crate::error::{Error, Result};

/// Per-group weight in the group-norm part of the penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupWeighting {
    #[default]
    Unit,
    SqrtSize,
}

/// `lambda`, `alpha` and the group partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub alpha: f64,
    pub groups: GroupStructure,
    #[serde(default)]
    pub weighting: GroupWeighting,
}

impl PenaltySpec {
    pub fn new(lambda: f64, alpha: f64, groups: GroupStructure) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Configuration(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Configuration(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            lambda,
            alpha,
            groups,
            weighting: GroupWeighting::Unit,
        })
    }

    /// Plain LASSO with every column its own group.
    pub fn lasso(lambda: f64, p: usize) -> Self {
        Self {
            lambda,
            alpha: 1.0,
            groups: GroupStructure::singletons(p),
            weighting: GroupWeighting::Unit,
        }
    }

    pub fn with_weighting(mut self, weighting: GroupWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub(crate) fn group_weight(&self, size: usize) -> f64 {
        match self.weighting {
            GroupWeighting::Unit => 1.0,
            GroupWeighting::SqrtSize => (size as f64).sqrt(),
        }
    }
}

/// Solver tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Stop once a full cycle moves no coefficient by more than this.
    pub tol: f64,
    pub max_cycles: usize,
    /// Keep the objective value after every cycle.
    #[serde(default)]
    pub trace_objective: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_cycles: 100_000,
            trace_objective: false,
        }
    }
}

/// `alpha * |b|_1 + (1 - alpha) * sum_G w_G |b_G|_2`, without the `lambda` factor.
pub fn penalty_value(b: ArrayView1<f64>, spec: &PenaltySpec) -> f64 {
    let l1: f64 = b.iter().map(|v| v.abs()).sum();
    let group: f64 = spec
        .groups
        .groups()
        .iter()
        .map(|g| {
            let norm = g.indices.iter().map(|&j| b[j] * b[j]).sum::<f64>().sqrt();
            spec.group_weight(g.indices.len()) * norm
        })
        .sum();
    spec.alpha * l1 + (1.0 - spec.alpha) * group
}

pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Prox of one block: soft-threshold at `l1`, then shrink the block norm by `group`.
pub(crate) fn prox_block(z: &mut [f64], l1: f64, group: f64) {
    let mut norm2 = 0.0;
    for v in z.iter_mut() {
        *v = soft_threshold(*v, l1);
        norm2 += *v * *v;
    }
    let norm = norm2.sqrt();
    let scale = if norm > group {
        1.0 - group / norm
    } else {
        0.0
    };
    for v in z.iter_mut() {
        *v *= scale;
    }
}

/// Proximal operator of `step * lambda * Omega`: the exact minimizer of
/// `0.5 |b - z|^2 + step * lambda * Omega(b)`.
pub fn prox_sparse_group(z: ArrayView1<f64>, step: f64, spec: &PenaltySpec) -> Array1<f64> {
    let mut out = z.to_owned();
    let t = step * spec.lambda;
    for g in spec.groups.groups() {
        let mut block: Vec<f64> = g.indices.iter().map(|&j| z[j]).collect();
        prox_block(
            &mut block,
            t * spec.alpha,
            t * (1.0 - spec.alpha) * spec.group_weight(g.indices.len()),
        );
        for (&j, v) in g.indices.iter().zip(block) {
            out[j] = v;
        }
    }
    out
}

/// A fitted sparse-group LASSO.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgLassoFit {
    pub beta: Array1<f64>,
    pub penalty: PenaltySpec,
    pub residuals: Array1<f64>,
    /// Regularized error variance `||y - X beta||_T^2 + lambda * Omega(beta)`.
    pub sigma2_hat: f64,
    /// `||y - X beta||_T^2 + 2 * lambda * Omega(beta)`.
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub objective_trace: Option<Vec<f64>>,
}

fn check_groups(data: &TimeSeriesDataset, spec: &PenaltySpec) -> Result<()> {
    if spec.groups.n_features() != data.n_features() {
        return Err(Error::GroupMismatch(format!(
            "groups partition {} columns, data has {}",
            spec.groups.n_features(),
            data.n_features()
        )));
    }
    Ok(())
}

pub fn fit_sglasso(
    data: &TimeSeriesDataset,
    spec: &PenaltySpec,
    settings: &SolverSettings,
) -> Result<SgLassoFit> {
    fit_sglasso_warm(data, spec, settings, None)
}

/// As [`fit_sglasso`], starting the descent from `warm`.
pub fn fit_sglasso_warm(
    data: &TimeSeriesDataset,
    spec: &PenaltySpec,
    settings: &SolverSettings,
    warm: Option<&Array1<f64>>,
) -> Result<SgLassoFit> {
    check_groups(data, spec)?;
    let moments = Moments::from_data(data.x().view(), data.y());
    let solver = BlockSolver::new(&moments, &spec.groups);
    let sol = solver.solve(spec, settings, warm)?;
    Ok(finish_fit(data, spec, sol))
}

pub(crate) fn finish_fit(
    data: &TimeSeriesDataset,
    spec: &PenaltySpec,
    sol: Solution,
) -> SgLassoFit {
    let residuals = data.y() - &data.x().dot(&sol.beta);
    let loss = residuals.dot(&residuals) / data.n_obs() as f64;
    let pen = penalty_value(sol.beta.view(), spec);
    SgLassoFit {
        sigma2_hat: loss + spec.lambda * pen,
        objective_value: loss + 2.0 * spec.lambda * pen,
        beta: sol.beta,
        penalty: spec.clone(),
        residuals,
        iterations: sol.iterations,
        converged: sol.converged,
        objective_trace: sol.trace,
    }
}

/// Largest violation of the optimality condition `g + lambda z = 0`,
/// `z` in the subdifferential of `Omega` at `beta`, where `g` is the
/// least-squares gradient `X'(X beta - y)/T`.
pub fn kkt_violation(fit: &SgLassoFit, data: &TimeSeriesDataset) -> f64 {
    let resid = data.y() - &data.x().dot(&fit.beta);
    let grad = -data.x().t().dot(&resid) / data.n_obs() as f64;
    kkt_violation_from_gradient(&fit.beta, &grad, &fit.penalty)
}

pub(crate) fn kkt_violation_from_gradient(
    beta: &Array1<f64>,
    grad: &Array1<f64>,
    spec: &PenaltySpec,
) -> f64 {
    let lambda = spec.lambda;
    let alpha = spec.alpha;
    let mut worst = 0.0f64;
    for g in spec.groups.groups() {
        let w = spec.group_weight(g.indices.len());
        let norm = g
            .indices
            .iter()
            .map(|&j| beta[j] * beta[j])
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            for &j in &g.indices {
                let group_part = (1.0 - alpha) * w * beta[j] / norm;
                let v = if beta[j] != 0.0 {
                    (grad[j] + lambda * (alpha * beta[j].signum() + group_part)).abs()
                } else {
                    (grad[j].abs() - lambda * alpha).max(0.0)
                };
                worst = worst.max(v);
            }
        } else {
            let shrunk = g
                .indices
                .iter()
                .map(|&j| soft_threshold(grad[j], lambda * alpha).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max((shrunk - lambda * (1.0 - alpha) * w).max(0.0));
        }
    }
    worst
}

/// Smallest `lambda` for which the zero vector is optimal, given `X'y/T`.
pub fn lambda_max_from_xty(xty: &Array1<f64>, spec: &PenaltySpec) -> f64 {
    let alpha = spec.alpha;
    spec.groups
        .groups()
        .iter()
        .map(|g| {
            let c: Vec<f64> = g.indices.iter().map(|&j| xty[j]).collect();
            let w = spec.group_weight(c.len());
            let max_abs = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if alpha >= 1.0 {
                return max_abs;
            }
            if alpha <= 0.0 {
                return c.iter().map(|v| v * v).sum::<f64>().sqrt() / w;
            }
            // the group is zero iff |S(c, lambda*alpha)|_2 <= lambda (1-alpha) w,
            // which is monotone in lambda
            let excess = |lam: f64| {
                c.iter()
                    .map(|&v| soft_threshold(v, lam * alpha).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    - lam * (1.0 - alpha) * w
            };
            let (mut lo, mut hi) = (0.0, max_abs / alpha);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if excess(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            hi
        })
        .fold(0.0, f64::max)
}

/// Log-spaced decreasing grid from `lambda_max` down to `min_ratio * lambda_max`.
pub fn lambda_grid_from_max(lambda_max: f64, n_points: usize, min_ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 {
        lambda_max
    } else {
        f64::EPSILON
    };
    match n_points {
        0 => Vec::new(),
        1 => vec![top],
        n => (0..n)
            .map(|k| top * min_ratio.powf(k as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Grid of `n_points` values from the null-model threshold down to `1e-4` of it.
pub fn lambda_grid(data: &TimeSeriesDataset, spec: &PenaltySpec, n_points: usize) -> Vec<f64> {
    lambda_grid_with_ratio(data, spec, n_points, 1e-4)
}

pub fn lambda_grid_with_ratio(
    data: &TimeSeriesDataset,
    spec: &PenaltySpec,
    n_points: usize,
    min_ratio: f64,
) -> Vec<f64> {
    let xty = data.x().t().dot(data.y()) / data.n_obs() as f64;
    lambda_grid_from_max(lambda_max_from_xty(&xty, spec), n_points, min_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Group;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_group(p: usize, lambda: f64, alpha: f64) -> PenaltySpec {
        let groups = GroupStructure::new(
            vec![Group {
                name: "all".into(),
                indices: (0..p).collect(),
            }],
            p,
        )
        .unwrap();
        PenaltySpec::new(lambda, alpha, groups).unwrap()
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(
            penalty_value(array![0.0, 0.0].view(), &one_group(2, 1.0, 0.5)),
            0.0
        );
        assert_eq!(
            penalty_value(array![3.0, 4.0].view(), &one_group(2, 1.0, 0.0)),
            5.0
        );
        assert!(
            (penalty_value(array![3.0, 4.0].view(), &one_group(2, 1.0, 0.5)) - 6.0).abs() < 1e-15
        );
        assert_eq!(
            penalty_value(array![3.0, -4.0].view(), &one_group(2, 1.0, 1.0)),
            7.0
        );
        let weighted = one_group(2, 1.0, 0.0).with_weighting(GroupWeighting::SqrtSize);
        assert!(
            (penalty_value(array![3.0, 4.0].view(), &weighted) - 5.0 * 2f64.sqrt()).abs() < 1e-14
        );
    }

    #[test]
    fn prox_examples() {
        let z = array![0.7, -1.3, 2.0];
        assert_eq!(prox_sparse_group(z.view(), 1.0, &one_group(3, 0.0, 0.5)), z);

        let lasso = PenaltySpec::lasso(0.3, 2);
        let out = prox_sparse_group(array![0.2, -0.1].view(), 1.0, &lasso);
        assert_eq!(out, array![0.0, 0.0]);

        let out = prox_sparse_group(array![3.0, 4.0].view(), 1.0, &one_group(2, 2.5, 0.0));
        assert!((out[0] - 1.5).abs() < 1e-15 && (out[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn prox_group_closed_form_matches_grid_search() {
        // brute-force minimization of 0.5|b - z|^2 + 2.5 |b|_2 on a 1e-4 grid
        // near the closed-form answer (1.5, 2)
        let z = [3.0, 4.0];
        let obj = |b0: f64, b1: f64| {
            0.5 * ((b0 - z[0]).powi(2) + (b1 - z[1]).powi(2)) + 2.5 * (b0 * b0 + b1 * b1).sqrt()
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=2000 {
            for k in 0..=2000 {
                let b0 = 1.4 + i as f64 * 1e-4;
                let b1 = 1.9 + k as f64 * 1e-4;
                let v = obj(b0, b1);
                if v < best.0 {
                    best = (v, b0, b1);
                }
            }
        }
        assert!((best.1 - 1.5).abs() < 2e-4 && (best.2 - 2.0).abs() < 2e-4);
    }

    fn prox_objective(b: &Array1<f64>, z: &Array1<f64>, step: f64, spec: &PenaltySpec) -> f64 {
        0.5 * (b - z).mapv(|v| v * v).sum() + step * spec.lambda * penalty_value(b.view(), spec)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn prox_is_local_minimizer(
            seed in 0u64..10_000,
            lambda in 0.0f64..2.0,
            alpha in 0.0f64..=1.0,
            step in 0.05f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes = [2usize, 3, 1];
            let groups = GroupStructure::contiguous(&sizes).unwrap();
            let spec = PenaltySpec::new(lambda, alpha, groups).unwrap();
            let z = Array1::from_shape_fn(6, |_| rng.random::<f64>() * 4.0 - 2.0);
            let b = prox_sparse_group(z.view(), step, &spec);
            let f0 = prox_objective(&b, &z, step, &spec);
            for _ in 0..1000 {
                let d = Array1::from_shape_fn(6, |_| (rng.random::<f64>() * 2.0 - 1.0) * 1e-3);
                let f1 = prox_objective(&(&b + &d), &z, step, &spec);
                prop_assert!(f1 >= f0 - 1e-12);
            }
            // subgradient condition: (z - b)/step in lambda * dOmega(b)
            let grad = (&b - &z) / step;
            prop_assert!(kkt_violation_from_gradient(&b, &grad, &spec) < 1e-8);
        }
    }

    #[test]
    fn lambda_max_examples() {
        let xty = array![0.5, -2.0, 1.0];
        assert_eq!(lambda_max_from_xty(&xty, &PenaltySpec::lasso(0.0, 3)), 2.0);
        assert_eq!(
            lambda_max_from_xty(&array![3.0, 4.0], &one_group(2, 0.0, 0.0)),
            5.0
        );
        // mixed alpha: the zero solution is optimal exactly at the returned value
        let spec = one_group(3, 0.0, 0.4);
        let lmax = lambda_max_from_xty(&xty, &spec);
        let zero = Array1::zeros(3);
        let grad = -xty.clone();
        assert!(kkt_violation_from_gradient(&zero, &grad, &spec.with_lambda(lmax)) < 1e-12);
        assert!(kkt_violation_from_gradient(&zero, &grad, &spec.with_lambda(0.99 * lmax)) > 0.0);
    }

    #[test]
    fn grid_shape() {
        assert_eq!(lambda_grid_from_max(2.0, 1, 1e-4), vec![2.0]);
        let g = lambda_grid_from_max(2.0, 5, 1e-4);
        assert_eq!(g.len(), 5);
        assert!((g[4] - 2e-4).abs() < 1e-16);
        assert!(g.windows(2).all(|w| w[0] > w[1]));

        let x = Array2::from_shape_fn((4, 3), |(i, j)| if i == j { 2.0 } else { 0.0 });
        let y = array![1.0, -4.0, 2.0, 0.0];
        let data = TimeSeriesDataset::new(y, x, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        // X'y/T = (0.5, -2, 1)
        let g = lambda_grid(&data, &PenaltySpec::lasso(0.0, 3), 1);
        assert_eq!(g, vec![2.0]);
    }
}
