//! Nodewise LASSO estimate of the precision matrix, one row at a time.
//!
//! Row `j` regresses column `j` on the remaining columns with an l1 penalty
//! and assembles `Theta_j = (1, -gamma_j') / sigma2_j`, with coordinates put
//! back in the original column order.

use std::collections::BTreeMap;

use ndarray::{concatenate, Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GroupStructure, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::sglasso::{
    cv_select_moments, fold_boundaries, kkt_violation_from_gradient, lambda_grid_from_max,
    lambda_max_from_xty, BlockSolver, FoldedCrossProducts, Moments, PenaltySpec, SolverSettings,
};

/// Smallest admissible residual variance of a nodewise regression.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// One nodewise regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodewiseRow {
    pub j: usize,
    /// Coefficients on the other columns, in increasing column order (skipping `j`).
    pub gamma_hat: Array1<f64>,
    /// `||X_j - X_{-j} gamma||_T^2 + lambda_j |gamma|_1`.
    pub sigma2_j: f64,
    pub lambda_j: f64,
    pub converged: bool,
    pub kkt_violation: f64,
}

impl NodewiseRow {
    /// `(1, -gamma')` spread over `p` columns.
    pub fn c_row(&self, p: usize) -> Array1<f64> {
        let mut row = Array1::zeros(p);
        row[self.j] = 1.0;
        for (k, &g) in others(self.j, p).iter().zip(self.gamma_hat.iter()) {
            row[*k] = -g;
        }
        row
    }

    /// `(1, -gamma') / sigma2` spread over `p` columns.
    pub fn theta_row(&self, p: usize) -> Array1<f64> {
        self.c_row(p) / self.sigma2_j
    }
}

fn others(j: usize, p: usize) -> Vec<usize> {
    (0..p).filter(|&k| k != j).collect()
}

/// How each nodewise penalty is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodewiseLambda {
    Fixed(f64),
    PerRow(BTreeMap<usize, f64>),
    CrossValidated {
        n_folds: usize,
        grid_size: usize,
        min_ratio: f64,
    },
}

impl NodewiseLambda {
    pub fn cv(n_folds: usize) -> Self {
        NodewiseLambda::CrossValidated {
            n_folds,
            grid_size: 50,
            min_ratio: 1e-4,
        }
    }
}

/// Nodewise rows for the requested columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub rows: BTreeMap<usize, Array1<f64>>,
    pub nodes: BTreeMap<usize, NodewiseRow>,
    pub requested: Vec<usize>,
    pub p: usize,
}

impl PrecisionEstimate {
    pub fn row(&self, j: usize) -> Option<&Array1<f64>> {
        self.rows.get(&j)
    }

    /// `Theta_G`: the rows for `group`, stacked in the given order.
    pub fn theta_rows(&self, group: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((group.len(), self.p));
        for (a, j) in group.iter().enumerate() {
            let row = self.rows.get(j).ok_or_else(|| {
                Error::GroupMismatch(format!("precision row {j} was not estimated"))
            })?;
            out.row_mut(a).assign(row);
        }
        Ok(out)
    }

    /// `C` in row form restricted to the requested rows (`1` on the diagonal, `-gamma` elsewhere).
    pub fn c_rows(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.requested.len(), self.p));
        for (a, j) in self.requested.iter().enumerate() {
            let node = &self.nodes[j];
            out.row_mut(a).assign(&node.c_row(self.p));
        }
        out
    }

    /// Diagonal of `B`: the residual variances of the requested rows.
    pub fn b_diagonal(&self) -> Array1<f64> {
        Array1::from_iter(self.requested.iter().map(|j| self.nodes[j].sigma2_j))
    }
}

fn row_from_moments(
    m: &Moments,
    j: usize,
    lambda: f64,
    settings: &SolverSettings,
) -> Result<NodewiseRow> {
    let q = m.n_features();
    let groups = GroupStructure::singletons(q);
    let spec = PenaltySpec::lasso(lambda, q);
    let sol = BlockSolver::new(m, &groups).solve(&spec, settings, None)?;
    let grad = m.gram.dot(&sol.beta) - &m.xty;
    let kkt = kkt_violation_from_gradient(&sol.beta, &grad, &spec);
    let l1: f64 = sol.beta.iter().map(|v| v.abs()).sum();
    let sigma2 = m.loss(&sol.beta) + lambda * l1;
    if !(sigma2 > SIGMA2_FLOOR) {
        return Err(Error::NearSingularDesign { column: j, sigma2 });
    }
    Ok(NodewiseRow {
        j,
        gamma_hat: sol.beta,
        sigma2_j: sigma2,
        lambda_j: lambda,
        converged: sol.converged,
        kkt_violation: kkt,
    })
}

/// Regress column `j` on all other columns with penalty `lambda_j`.
pub fn fit_nodewise_row(
    data: &TimeSeriesDataset,
    j: usize,
    lambda_j: f64,
    settings: &SolverSettings,
) -> Result<NodewiseRow> {
    let p = data.n_features();
    if p < 2 {
        return Err(Error::Dimension("nodewise regression needs p >= 2".into()));
    }
    if j >= p {
        return Err(Error::Dimension(format!(
            "column {j} out of range for p = {p}"
        )));
    }
    let x = data.x();
    let rest = others(j, p);
    let xr = x.select(Axis(1), &rest);
    let target = x.column(j).to_owned();
    let m = Moments::from_data(xr.view(), &target);
    let mut row = row_from_moments(&m, j, lambda_j, settings)?;
    // exact residual variance from the rows themselves
    let resid = &target - &xr.dot(&row.gamma_hat);
    let l1: f64 = row.gamma_hat.iter().map(|v| v.abs()).sum();
    row.sigma2_j = resid.dot(&resid) / data.n_obs() as f64 + lambda_j * l1;
    if !(row.sigma2_j > SIGMA2_FLOOR) {
        return Err(Error::NearSingularDesign {
            column: j,
            sigma2: row.sigma2_j,
        });
    }
    Ok(row)
}

fn check_requested(requested: &[usize], p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::Dimension("nodewise regression needs p >= 2".into()));
    }
    if let Some(&j) = requested.iter().find(|&&j| j >= p) {
        return Err(Error::GroupMismatch(format!(
            "column {j} out of range for p = {p}"
        )));
    }
    Ok(())
}

/// Nodewise rows for `requested` columns of `data`.
pub fn estimate_precision_rows(
    data: &TimeSeriesDataset,
    requested: &[usize],
    lambdas: &NodewiseLambda,
    settings: &SolverSettings,
) -> Result<PrecisionEstimate> {
    let p = data.n_features();
    check_requested(requested, p)?;
    match lambdas {
        NodewiseLambda::CrossValidated { n_folds, .. } => {
            let folds = fold_boundaries(data.n_obs(), *n_folds)?;
            let cp = FoldedCrossProducts::new(data.x().view(), folds)?;
            estimate_precision_rows_folded(&cp, p, requested, lambdas, settings)
        }
        _ => {
            let nodes = requested
                .par_iter()
                .map(|&j| fit_nodewise_row(data, j, fixed_lambda(lambdas, j)?, settings))
                .collect::<Result<Vec<_>>>()?;
            Ok(assemble(nodes, requested, p))
        }
    }
}

fn fixed_lambda(lambdas: &NodewiseLambda, j: usize) -> Result<f64> {
    match lambdas {
        NodewiseLambda::Fixed(l) => Ok(*l),
        NodewiseLambda::PerRow(map) => map
            .get(&j)
            .copied()
            .ok_or_else(|| Error::Configuration(format!("no nodewise lambda for column {j}"))),
        NodewiseLambda::CrossValidated { .. } => Err(Error::Configuration(
            "cross-validated lambda has no fixed value".into(),
        )),
    }
}

/// Nodewise rows from fold cross products whose first `p` columns are the design.
pub fn estimate_precision_rows_folded(
    cp: &FoldedCrossProducts,
    p: usize,
    requested: &[usize],
    lambdas: &NodewiseLambda,
    settings: &SolverSettings,
) -> Result<PrecisionEstimate> {
    check_requested(requested, p)?;
    let nodes = requested
        .par_iter()
        .map(|&j| {
            let rest = others(j, p);
            let full = cp.full(j, &rest);
            let lambda = match lambdas {
                NodewiseLambda::CrossValidated {
                    grid_size,
                    min_ratio,
                    ..
                } => {
                    let spec = PenaltySpec::lasso(0.0, rest.len());
                    let lmax = lambda_max_from_xty(&full.xty, &spec);
                    let grid = lambda_grid_from_max(lmax, *grid_size, *min_ratio);
                    cv_select_moments(cp, j, &rest, &spec, &grid, settings)?.selected_lambda
                }
                other => fixed_lambda(other, j)?,
            };
            row_from_moments(&full, j, lambda, settings)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(nodes, requested, p))
}

fn assemble(nodes: Vec<NodewiseRow>, requested: &[usize], p: usize) -> PrecisionEstimate {
    let rows = nodes.iter().map(|n| (n.j, n.theta_row(p))).collect();
    let nodes = nodes.into_iter().map(|n| (n.j, n)).collect();
    PrecisionEstimate {
        rows,
        nodes,
        requested: requested.to_vec(),
        p,
    }
}

/// `max_j |(I - Theta Sigma)_j|_inf` over the estimated rows, `Sigma = X'X/T`.
pub fn identity_defect(prec: &PrecisionEstimate, data: &TimeSeriesDataset) -> f64 {
    let x = data.x();
    let sigma = x.t().dot(x) / data.n_obs() as f64;
    prec.rows
        .iter()
        .map(|(&j, row)| {
            let mut r = -row.dot(&sigma);
            r[j] += 1.0;
            r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .fold(0.0, f64::max)
}

/// Stack `[X | y]` for fold cross products shared by the main and nodewise fits.
pub fn stacked_design(data: &TimeSeriesDataset) -> Array2<f64> {
    concatenate(
        Axis(1),
        &[data.x().view(), data.y().view().insert_axis(Axis(1))],
    )
    .expect("rows agree by construction")
}
