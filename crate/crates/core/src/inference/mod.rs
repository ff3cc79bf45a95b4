//! Debiased estimates, pivots, confidence intervals and Wald tests.

pub mod dist;
mod report;

pub use dist::{chi2_cdf, chi2_quantile_upper, chi2_sf, normal_cdf, normal_quantile};
pub use report::{CoefficientReport, GroupReport};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::hac::{KernelKind, LongRunVariance};
use crate::linalg::{singular_values, symmetric_pinv};
use crate::nodewise::PrecisionEstimate;
use crate::sglasso::SgLassoFit;

/// Relative eigenvalue cutoff of the generalized inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// One-step corrected estimate for a group of coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasedEstimate {
    pub group: Vec<usize>,
    pub beta_hat: Array1<f64>,
    /// `Theta_G X'(y - X beta) / T`.
    pub bias_correction: Array1<f64>,
    pub beta_debiased: Array1<f64>,
}

/// `beta_G + Theta_G X' u / T` for the rows in `prec`.
pub fn debias(
    fit: &SgLassoFit,
    prec: &PrecisionEstimate,
    data: &TimeSeriesDataset,
) -> Result<DebiasedEstimate> {
    let p = data.n_features();
    if fit.beta.len() != p || prec.p != p {
        return Err(Error::GroupMismatch(format!(
            "fit has {} coefficients, precision rows {} columns, data {p}",
            fit.beta.len(),
            prec.p
        )));
    }
    if fit.residuals.len() != data.n_obs() {
        return Err(Error::GroupMismatch(
            "residuals come from a different sample".into(),
        ));
    }
    let group = prec.requested.clone();
    let theta = prec.theta_rows(&group)?;
    let xtu = data.x().t().dot(&fit.residuals) / data.n_obs() as f64;
    let bias_correction = theta.dot(&xtu);
    let beta_hat = Array1::from_iter(group.iter().map(|&j| fit.beta[j]));
    let beta_debiased = &beta_hat + &bias_correction;
    Ok(DebiasedEstimate {
        group,
        beta_hat,
        bias_correction,
        beta_debiased,
    })
}

fn variance(xi: &LongRunVariance, j: usize) -> Result<f64> {
    let v = *xi
        .xi
        .get([j, j])
        .ok_or_else(|| Error::Dimension(format!("coordinate {j} outside the variance matrix")))?;
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance { index: j, value: v });
    }
    Ok(v)
}

/// `(debiased_j - beta0) / sqrt(Xi_jj / T)`; `j` indexes the group.
pub fn pivot(
    est: &DebiasedEstimate,
    xi: &LongRunVariance,
    j: usize,
    beta0: f64,
    t: usize,
) -> Result<f64> {
    let v = variance(xi, j)?;
    let b = *est
        .beta_debiased
        .get(j)
        .ok_or_else(|| Error::Dimension(format!("coordinate {j} outside the group")))?;
    Ok((b - beta0) / (v / t as f64).sqrt())
}

/// Two-sided interval centred at the debiased coordinate with half-width
/// `z_{(1+level)/2} sqrt(Xi_jj / T)`.
pub fn confidence_interval(
    est: &DebiasedEstimate,
    xi: &LongRunVariance,
    j: usize,
    t: usize,
    level: f64,
) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Configuration(format!(
            "confidence level {level} not in (0, 1)"
        )));
    }
    let v = variance(xi, j)?;
    let center = *est
        .beta_debiased
        .get(j)
        .ok_or_else(|| Error::Dimension(format!("coordinate {j} outside the group")))?;
    let half = normal_quantile(0.5 * (1.0 + level)) * (v / t as f64).sqrt();
    Ok((center - half, center + half))
}

/// Wald test of `R beta_G = r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerTestResult {
    pub wald_stat: f64,
    /// Rank of `R Xi R'` kept by the generalized inverse.
    pub dof: usize,
    /// Number of rows of `R`.
    pub restrictions: usize,
    pub p_value: f64,
    pub xi: LongRunVariance,
    pub ci_per_coordinate: Vec<(f64, f64)>,
    pub kernel_kind: KernelKind,
    pub bandwidth: f64,
}

impl GrangerTestResult {
    pub fn rank_reduced(&self) -> bool {
        self.dof < self.restrictions
    }
}

/// Rows of `r` that add nothing to the span of the rows before them.
fn deficient_rows(r: &Array2<f64>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rank = 0;
    for i in 0..r.nrows() {
        let upto = r.slice(ndarray::s![0..=i, ..]);
        let sv = singular_values(upto);
        let top = sv.first().copied().unwrap_or(0.0);
        let k = sv.iter().filter(|&&s| s > 1e-10 * top && s > 0.0).count();
        if k > rank {
            rank = k;
        } else {
            out.push(i);
        }
    }
    out
}

/// `W_T = T [R d]' (R Xi R')^+ [R d]` with `d` the debiased group estimate,
/// testing `R beta_G = 0`.
pub fn wald_test(
    est: &DebiasedEstimate,
    xi: &LongRunVariance,
    restriction: &Array2<f64>,
    t: usize,
) -> Result<GrangerTestResult> {
    let zero = Array1::zeros(restriction.nrows());
    wald_test_value(est, xi, restriction, &zero, t)
}

/// Wald test of `R beta_G = rhs`.
pub fn wald_test_value(
    est: &DebiasedEstimate,
    xi: &LongRunVariance,
    restriction: &Array2<f64>,
    rhs: &Array1<f64>,
    t: usize,
) -> Result<GrangerTestResult> {
    let g = est.beta_debiased.len();
    if restriction.ncols() != g || xi.xi.nrows() != g {
        return Err(Error::Dimension(format!(
            "restriction has {} columns, group has {g}, variance is {}x{}",
            restriction.ncols(),
            xi.xi.nrows(),
            xi.xi.ncols()
        )));
    }
    if rhs.len() != restriction.nrows() || restriction.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{} restrictions with {} right-hand values",
            restriction.nrows(),
            rhs.len()
        )));
    }
    let sv = singular_values(restriction.view());
    let top = sv[0];
    let rank = sv.iter().filter(|&&s| s > 1e-10 * top && s > 0.0).count();
    if rank < restriction.nrows() {
        return Err(Error::DeficientRestriction {
            rows: deficient_rows(restriction),
        });
    }
    let a = restriction.dot(&xi.xi).dot(&restriction.t());
    let a = (&a + &a.t()) * 0.5;
    let (a_pinv, kept) = symmetric_pinv(a.view(), PINV_CUTOFF);
    if kept == 0 {
        return Err(Error::DegenerateVariance {
            index: 0,
            value: 0.0,
        });
    }
    let d = restriction.dot(&est.beta_debiased) - rhs;
    let wald_stat = (t as f64 * d.dot(&a_pinv.dot(&d))).max(0.0);
    let p_value = chi2_sf(wald_stat, kept);
    let ci_per_coordinate = (0..g)
        .map(|j| confidence_interval(est, xi, j, t, 0.95))
        .collect::<Result<Vec<_>>>()?;
    Ok(GrangerTestResult {
        wald_stat,
        dof: kept,
        restrictions: restriction.nrows(),
        p_value,
        xi: xi.clone(),
        ci_per_coordinate,
        kernel_kind: xi.kernel.kind,
        bandwidth: xi.kernel.bandwidth,
    })
}

/// Granger non-causality test of a whole group: `R = I`.
pub fn granger_test(
    est: &DebiasedEstimate,
    xi: &LongRunVariance,
    t: usize,
) -> Result<GrangerTestResult> {
    wald_test(est, xi, &Array2::eye(est.beta_debiased.len()), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hac::KernelSpec;
    use ndarray::array;

    fn estimate(values: Array1<f64>) -> DebiasedEstimate {
        let g = values.len();
        DebiasedEstimate {
            group: (0..g).collect(),
            beta_hat: values.clone(),
            bias_correction: Array1::zeros(g),
            beta_debiased: values,
        }
    }

    fn lrv(xi: Array2<f64>) -> LongRunVariance {
        let g = xi.nrows();
        LongRunVariance {
            xi,
            kernel: KernelSpec::new(KernelKind::Parzen, 20.0).unwrap(),
            group: (0..g).collect(),
            asymmetry: 0.0,
        }
    }

    #[test]
    fn pivot_examples() {
        let e = estimate(array![1.4]);
        let x = lrv(array![[4.0]]);
        assert_eq!(pivot(&e, &x, 0, 1.4, 100).unwrap(), 0.0);
        assert!((pivot(&e, &x, 0, 1.0, 100).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            pivot(&e, &lrv(array![[0.0]]), 0, 0.0, 100),
            Err(Error::DegenerateVariance { .. })
        ));
    }

    #[test]
    fn interval_width() {
        let e = estimate(array![0.3]);
        let (lo, hi) = confidence_interval(&e, &lrv(array![[1.0]]), 0, 10_000, 0.95).unwrap();
        assert!((hi - lo - 2.0 * 1.959_963_984_540_054 * 0.01).abs() < 1e-12);
        assert!(((hi + lo) / 2.0 - 0.3).abs() < 1e-15);
        assert!((hi - lo - 0.0392).abs() < 1e-5);
        assert!(confidence_interval(&e, &lrv(array![[0.0]]), 0, 100, 0.95).is_err());
    }

    #[test]
    fn wald_zero_estimate() {
        let e = estimate(array![0.0, 0.0]);
        let r = granger_test(&e, &lrv(array![[1.0, 0.2], [0.2, 2.0]]), 500).unwrap();
        assert_eq!(r.wald_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.dof, 2);
    }

    #[test]
    fn wald_scalar_is_pivot_squared() {
        let e = estimate(array![0.13]);
        let x = lrv(array![[2.5]]);
        let t = 400;
        let r = granger_test(&e, &x, t).unwrap();
        let z = pivot(&e, &x, 0, 0.0, t).unwrap();
        assert!((r.wald_stat - z * z).abs() <= 1e-10 * z * z);
        assert!((r.p_value - 2.0 * (1.0 - normal_cdf(z.abs()))).abs() < 1e-8);
        assert_eq!(r.ci_per_coordinate.len(), 1);
    }

    #[test]
    fn wald_invariant_to_row_mixing() {
        let e = estimate(array![0.2, -0.1, 0.05]);
        let x = lrv(array![[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]]);
        let r = array![[1.0, -1.0, 0.0], [0.0, 1.0, 2.0]];
        let m = array![[2.0, 1.0], [-0.5, 3.0]];
        let a = wald_test(&e, &x, &r, 300).unwrap();
        let b = wald_test(&e, &x, &m.dot(&r), 300).unwrap();
        assert!((a.wald_stat - b.wald_stat).abs() <= 1e-6 * a.wald_stat);
        assert_eq!(a.dof, 2);
    }

    #[test]
    fn deficient_restriction_named() {
        let e = estimate(array![0.2, -0.1, 0.05]);
        let x = lrv(Array2::eye(3));
        let r = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, -1.0, 0.0]];
        match wald_test(&e, &x, &r, 100) {
            Err(Error::DeficientRestriction { rows }) => assert_eq!(rows, vec![2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn singular_variance_reduces_dof() {
        let e = estimate(array![0.2, 0.2]);
        let x = lrv(array![[1.0, 1.0], [1.0, 1.0]]);
        let r = granger_test(&e, &x, 100).unwrap();
        assert_eq!(r.dof, 1);
        assert!(r.rank_reduced());
    }

    #[test]
    fn p_value_monotone() {
        let x = lrv(array![[1.0, 0.0], [0.0, 1.0]]);
        let mut last = 1.0;
        for k in 0..50 {
            let e = estimate(array![0.01 * k as f64, 0.0]);
            let r = granger_test(&e, &x, 100).unwrap();
            assert!((0.0..=1.0).contains(&r.p_value));
            assert!(r.p_value <= last);
            last = r.p_value;
        }
    }
}
