use std::ops::Range;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{BlockSolver, FoldedCrossProducts, PenaltySpec, SolverSettings};
use crate::data::{GroupStructure, TimeSeriesDataset};
use crate::error::{Error, Result};

/// Outcome of blocked cross-validation over a lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    /// Held-out mean squared error, `grid x folds`.
    pub cv_errors: Array2<f64>,
    pub mean_errors: Vec<f64>,
    pub selected_lambda: f64,
    pub selected_index: usize,
    pub fold_boundaries: Vec<Range<usize>>,
}

/// Contiguous, non-overlapping blocks covering `0..t`. The first `t % n_folds`
/// blocks get one extra row.
pub fn fold_boundaries(t: usize, n_folds: usize) -> Result<Vec<Range<usize>>> {
    if n_folds < 2 {
        return Err(Error::Configuration(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    if n_folds > t / 2 {
        return Err(Error::Configuration(format!(
            "{n_folds} folds leave fewer than 2 rows per fold with T = {t}"
        )));
    }
    let base = t / n_folds;
    let extra = t % n_folds;
    let mut start = 0;
    Ok((0..n_folds)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Configuration("lambda grid is empty".into()));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Configuration(
            "lambda grid has a negative or non-finite value".into(),
        ));
    }
    if grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Configuration(
            "lambda grid must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Blocked K-fold cross-validation of the sparse-group LASSO.
///
/// Each fold is held out in turn; the model is fit on the remaining rows
/// along the whole grid with warm starts, and the held-out mean squared
/// error recorded. The selected lambda minimizes the mean error; ties go to
/// the larger lambda.
pub fn cv_select(
    data: &TimeSeriesDataset,
    groups: &GroupStructure,
    alpha: f64,
    n_folds: usize,
    grid: &[f64],
    settings: &SolverSettings,
) -> Result<CvResult> {
    let p = data.n_features();
    if groups.n_features() != p {
        return Err(Error::GroupMismatch(format!(
            "groups partition {} columns, data has {p}",
            groups.n_features()
        )));
    }
    let folds = fold_boundaries(data.n_obs(), n_folds)?;
    let z = concatenate(
        Axis(1),
        &[data.x().view(), data.y().view().insert_axis(Axis(1))],
    )
    .map_err(|e| Error::Dimension(e.to_string()))?;
    let cp = FoldedCrossProducts::new(z.view(), folds)?;
    let predictors: Vec<usize> = (0..p).collect();
    let spec = PenaltySpec::new(grid.first().copied().unwrap_or(0.0), alpha, groups.clone())?;
    cv_select_moments(&cp, p, &predictors, &spec, grid, settings)
}

/// Cross-validation on precomputed fold cross products: regress column
/// `response` on `predictors`. `spec.lambda` is ignored.
pub fn cv_select_moments(
    cp: &FoldedCrossProducts,
    response: usize,
    predictors: &[usize],
    spec: &PenaltySpec,
    grid: &[f64],
    settings: &SolverSettings,
) -> Result<CvResult> {
    check_grid(grid)?;
    let n_folds = cp.folds().len();
    let mut errors = Array2::zeros((grid.len(), n_folds));
    for k in 0..n_folds {
        let train = cp.training(k, response, predictors);
        let valid = cp.validation(k, response, predictors);
        let solver = BlockSolver::new(&train, &spec.groups);
        let path = solver.path(spec, grid, settings)?;
        for (i, sol) in path.iter().enumerate() {
            errors[[i, k]] = valid.loss(&sol.beta);
        }
    }
    let mean_errors: Vec<f64> = errors
        .rows()
        .into_iter()
        .map(|r| r.sum() / n_folds as f64)
        .collect();
    let mut best = 0;
    for (i, &e) in mean_errors.iter().enumerate() {
        let b = mean_errors[best];
        if e < b || (e == b && grid[i] > grid[best]) {
            best = i;
        }
    }
    Ok(CvResult {
        lambda_grid: grid.to_vec(),
        cv_errors: errors,
        mean_errors,
        selected_lambda: grid[best],
        selected_index: best,
        fold_boundaries: cp.folds().to_vec(),
    })
}
