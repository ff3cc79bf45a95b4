use serde::{Deserialize, Serialize};

use super::{DebiasedEstimate, GrangerTestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub name: String,
    pub estimate: f64,
    pub debiased: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// One row of the Granger test report: a group at one (bandwidth, kernel) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group_name: String,
    pub bandwidth: f64,
    pub kernel: String,
    pub wald: f64,
    pub dof: usize,
    pub restrictions: usize,
    /// The generalized inverse dropped directions of `R Xi R'`.
    pub rank_reduced: bool,
    pub p_value: f64,
    pub significant_1pct: bool,
    pub significant_5pct: bool,
    pub per_coefficient: Vec<CoefficientReport>,
}

impl GroupReport {
    /// `names` labels the group coordinates in order; `t` is the sample size.
    pub fn new(
        group_name: &str,
        names: &[String],
        est: &DebiasedEstimate,
        test: &GrangerTestResult,
        t: usize,
    ) -> Self {
        let per_coefficient = names
            .iter()
            .enumerate()
            .map(|(j, name)| CoefficientReport {
                name: name.clone(),
                estimate: est.beta_hat[j],
                debiased: est.beta_debiased[j],
                se: (test.xi.xi[[j, j]] / t as f64).sqrt(),
                ci_low: test.ci_per_coordinate[j].0,
                ci_high: test.ci_per_coordinate[j].1,
            })
            .collect();
        Self {
            group_name: group_name.to_string(),
            bandwidth: test.bandwidth,
            kernel: test.kernel_kind.name().to_string(),
            wald: test.wald_stat,
            dof: test.dof,
            restrictions: test.restrictions,
            rank_reduced: test.rank_reduced(),
            p_value: test.p_value,
            significant_1pct: test.p_value < 0.01,
            significant_5pct: test.p_value < 0.05,
            per_coefficient,
        }
    }
}
