//! End-to-end estimation shared by the CLI and the simulation harness:
//! cross-validated fit, nodewise rows, debiasing and HAC-based tests.

use serde::{Deserialize, Serialize};

use crate::data::{GroupStructure, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::hac::{hac_estimate_for_group, score_series, KernelSpec};
use crate::inference::{debias, granger_test, DebiasedEstimate, GrangerTestResult};
use crate::nodewise::{
    estimate_precision_rows_folded, stacked_design, NodewiseLambda, PrecisionEstimate,
};
use crate::sglasso::{
    cv_select_moments, fold_boundaries, kkt_violation, lambda_grid_from_max, lambda_max_from_xty,
    BlockSolver, CvResult, FoldedCrossProducts, GroupWeighting, PenaltySpec, SgLassoFit,
    SolverSettings,
};

/// Knobs of the fitting stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub alpha: f64,
    pub n_folds: usize,
    pub grid_size: usize,
    pub grid_min_ratio: f64,
    /// Skip cross-validation and use this penalty.
    pub lambda: Option<f64>,
    pub weighting: GroupWeighting,
    pub solver: SolverSettings,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            n_folds: 10,
            grid_size: 50,
            grid_min_ratio: 1e-4,
            lambda: None,
            weighting: GroupWeighting::Unit,
            solver: SolverSettings::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Configuration(format!(
                "alpha {} not in [0, 1]",
                self.alpha
            )));
        }
        if self.grid_size == 0 {
            return Err(Error::Configuration("grid_size must be positive".into()));
        }
        if !(self.grid_min_ratio > 0.0 && self.grid_min_ratio < 1.0) {
            return Err(Error::Configuration(format!(
                "grid_min_ratio {} not in (0, 1)",
                self.grid_min_ratio
            )));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Configuration(format!("lambda {l} must be >= 0")));
            }
        }
        if !(self.solver.tol > 0.0) || self.solver.max_cycles == 0 {
            return Err(Error::Configuration(
                "solver tol and max_cycles must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn nodewise_lambda(&self) -> NodewiseLambda {
        NodewiseLambda::CrossValidated {
            n_folds: self.n_folds,
            grid_size: self.grid_size,
            min_ratio: self.grid_min_ratio,
        }
    }
}

/// Fold cross products of `[X | y]`, shared by every regression on one sample.
pub struct Workspace<'a> {
    data: &'a TimeSeriesDataset,
    cp: FoldedCrossProducts,
}

/// Main-regression output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub fit: SgLassoFit,
    pub cv: Option<CvResult>,
    pub kkt_violation: f64,
}

impl<'a> Workspace<'a> {
    pub fn new(data: &'a TimeSeriesDataset, n_folds: usize) -> Result<Self> {
        let folds = fold_boundaries(data.n_obs(), n_folds)?;
        let cp = FoldedCrossProducts::new(stacked_design(data).view(), folds)?;
        Ok(Self { data, cp })
    }

    pub fn data(&self) -> &TimeSeriesDataset {
        self.data
    }

    /// Sparse-group LASSO with lambda chosen by blocked cross-validation
    /// (or fixed by `config.lambda`).
    pub fn fit(&self, groups: &GroupStructure, config: &FitConfig) -> Result<ModelFit> {
        let p = self.data.n_features();
        if groups.n_features() != p {
            return Err(Error::GroupMismatch(format!(
                "groups partition {} columns, data has {p}",
                groups.n_features()
            )));
        }
        let predictors: Vec<usize> = (0..p).collect();
        let full = self.cp.full(p, &predictors);
        let base =
            PenaltySpec::new(0.0, config.alpha, groups.clone())?.with_weighting(config.weighting);
        let (lambda, cv) = match config.lambda {
            Some(l) => (l, None),
            None => {
                let lmax = lambda_max_from_xty(&full.xty, &base);
                let grid = lambda_grid_from_max(lmax, config.grid_size, config.grid_min_ratio);
                let cv = cv_select_moments(&self.cp, p, &predictors, &base, &grid, &config.solver)?;
                (cv.selected_lambda, Some(cv))
            }
        };
        let spec = base.with_lambda(lambda);
        let sol = BlockSolver::new(&full, &spec.groups).solve(&spec, &config.solver, None)?;
        let fit = crate::sglasso::finish_fit(self.data, &spec, sol);
        let kkt = kkt_violation(&fit, self.data);
        Ok(ModelFit {
            fit,
            cv,
            kkt_violation: kkt,
        })
    }

    /// Nodewise rows for `requested` columns.
    pub fn precision(
        &self,
        requested: &[usize],
        lambdas: &NodewiseLambda,
        settings: &SolverSettings,
    ) -> Result<PrecisionEstimate> {
        estimate_precision_rows_folded(
            &self.cp,
            self.data.n_features(),
            requested,
            lambdas,
            settings,
        )
    }
}

/// Debiased estimate of a group and one Wald test per kernel setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInference {
    pub group: Vec<usize>,
    pub estimate: DebiasedEstimate,
    pub tests: Vec<GrangerTestResult>,
}

/// Test `beta_G = 0` at every kernel/bandwidth cell.
pub fn infer_group(
    data: &TimeSeriesDataset,
    fit: &SgLassoFit,
    prec: &PrecisionEstimate,
    kernels: &[KernelSpec],
) -> Result<GroupInference> {
    let estimate = debias(fit, prec, data)?;
    let scores = score_series(&fit.residuals, data, prec)?;
    let t = data.n_obs();
    let tests = kernels
        .iter()
        .map(|k| {
            let xi = hac_estimate_for_group(scores.view(), k, prec.requested.clone())?;
            granger_test(&estimate, &xi, t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupInference {
        group: prec.requested.clone(),
        estimate,
        tests,
    })
}

/// Rejects if the group covers every column: a Granger test needs controls.
pub fn check_test_group(group: &[usize], p: usize) -> Result<()> {
    if group.is_empty() {
        return Err(Error::Configuration("test group is empty".into()));
    }
    if group.len() >= p {
        return Err(Error::Configuration(
            "test group covers every column; no controls left".into(),
        ));
    }
    Ok(())
}
