//! Kernel-weighted long-run variance of debiasing scores.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::nodewise::PrecisionEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Parzen,
    QuadraticSpectral,
    Bartlett,
}

const QS_SERIES_CUTOFF: f64 = 0.25;

// 3 sum_{n>=1} (-1)^{n+1} 2n z^{2n-2} / (2n+1)!
fn qs_series(z: f64) -> f64 {
    let z2 = z * z;
    let mut sum = 0.0;
    let mut pow = 1.0;
    let mut fact = 6.0;
    for n in 1..20 {
        let nf = n as f64;
        let term = 3.0 * 2.0 * nf * pow / fact;
        sum += if n % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
        pow *= z2;
        fact *= (2.0 * nf + 2.0) * (2.0 * nf + 3.0);
    }
    sum
}

impl KernelKind {
    /// `K(x)`.
    pub fn weight(self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            KernelKind::Parzen => {
                if a <= 0.5 {
                    1.0 - 6.0 * a * a + 6.0 * a * a * a
                } else if a <= 1.0 {
                    2.0 * (1.0 - a).powi(3)
                } else {
                    0.0
                }
            }
            KernelKind::Bartlett => (1.0 - a).max(0.0),
            KernelKind::QuadraticSpectral => {
                let z = 6.0 * PI * a / 5.0;
                if a < QS_SERIES_CUTOFF {
                    qs_series(z)
                } else {
                    25.0 / (12.0 * PI * PI * a * a) * (z.sin() / z - z.cos())
                }
            }
        }
    }

    /// Whether `K(x) = 0` for `|x| >= 1`.
    pub fn truncated(self) -> bool {
        !matches!(self, KernelKind::QuadraticSpectral)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Parzen => "parzen",
            KernelKind::QuadraticSpectral => "qs",
            KernelKind::Bartlett => "bartlett",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parzen" | "pr" => Ok(KernelKind::Parzen),
            "qs" | "quadratic_spectral" | "quadratic-spectral" => Ok(KernelKind::QuadraticSpectral),
            "bartlett" | "nw" => Ok(KernelKind::Bartlett),
            other => Err(Error::Configuration(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Kernel and bandwidth `M_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Configuration(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { kind, bandwidth })
    }

    /// Weight on lag `k`: `K(k / M_T)`.
    pub fn lag_weight(&self, k: usize) -> f64 {
        self.kind.weight(k as f64 / self.bandwidth)
    }

    /// Number of lags with possibly nonzero weight in a sample of size `t`.
    pub fn lag_count(&self, t: usize) -> usize {
        if self.kind.truncated() {
            let last = (self.bandwidth.ceil() as usize).min(t);
            // lags k < M_T have nonzero weight
            last.max(1)
        } else {
            t
        }
    }
}

/// `K(x)` for the given kernel; the bandwidth is not applied.
pub fn kernel_value(spec: &KernelSpec, x: f64) -> f64 {
    spec.kind.weight(x)
}

/// `ceil(1.3 * T^(1/3))`.
pub fn default_bandwidth(t: usize) -> f64 {
    (1.3 * (t as f64).cbrt()).ceil()
}

/// HAC estimate for a group of coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunVariance {
    pub xi: Array2<f64>,
    pub kernel: KernelSpec,
    pub group: Vec<usize>,
    /// Relative asymmetry removed by symmetrization.
    pub asymmetry: f64,
}

/// Debiasing scores `V_t = u_t * Theta_G x_t`, one column per requested row.
pub fn score_series(
    residuals: &Array1<f64>,
    data: &TimeSeriesDataset,
    prec: &PrecisionEstimate,
) -> Result<Array2<f64>> {
    if residuals.len() != data.n_obs() {
        return Err(Error::Dimension(format!(
            "{} residuals for {} observations",
            residuals.len(),
            data.n_obs()
        )));
    }
    if prec.p != data.n_features() {
        return Err(Error::Dimension(format!(
            "precision rows have {} columns, data has {}",
            prec.p,
            data.n_features()
        )));
    }
    let theta = prec.theta_rows(&prec.requested)?;
    let mut scores = data.x().dot(&theta.t());
    for (mut row, u) in scores.rows_mut().into_iter().zip(residuals.iter()) {
        row.mapv_inplace(|v| v * u);
    }
    Ok(scores)
}

/// `Gamma_k = (1/T) sum_{t < T-k} V_t V_{t+k}'` for `k = 0..lags`.
pub fn autocovariances(scores: ArrayView2<f64>, lags: usize) -> Vec<Array2<f64>> {
    let (t, g) = scores.dim();
    let tf = t as f64;
    (0..lags.min(t))
        .map(|k| {
            let mut gamma = Array2::<f64>::zeros((g, g));
            for s in 0..t - k {
                let a = scores.row(s);
                let b = scores.row(s + k);
                for i in 0..g {
                    let ai = a[i];
                    if ai == 0.0 {
                        continue;
                    }
                    for j in 0..g {
                        gamma[[i, j]] += ai * b[j];
                    }
                }
            }
            gamma / tf
        })
        .collect()
}

/// Combine precomputed autocovariances with kernel weights, then symmetrize.
/// Lags beyond `acov.len()` are treated as having zero weight.
pub fn hac_from_autocovariances(acov: &[Array2<f64>], kernel: &KernelSpec) -> (Array2<f64>, f64) {
    let mut xi = acov[0].clone();
    for (k, gamma) in acov.iter().enumerate().skip(1) {
        let w = kernel.lag_weight(k);
        if w == 0.0 {
            continue;
        }
        xi.scaled_add(w, gamma);
        xi.scaled_add(w, &gamma.t());
    }
    let sym = (&xi + &xi.t()) * 0.5;
    let scale = sym.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = (&xi - &sym).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rel = if scale > 0.0 { asym / scale } else { 0.0 };
    (sym, rel)
}

/// `sum_{|k| < T} K(k / M_T) Gamma_k` with `Gamma_{-k} = Gamma_k'`.
pub fn hac_estimate(scores: ArrayView2<f64>, kernel: &KernelSpec) -> Result<LongRunVariance> {
    hac_estimate_for_group(scores, kernel, (0..scores.ncols()).collect())
}

pub fn hac_estimate_for_group(
    scores: ArrayView2<f64>,
    kernel: &KernelSpec,
    group: Vec<usize>,
) -> Result<LongRunVariance> {
    let t = scores.nrows();
    if t < 2 {
        return Err(Error::Dimension(format!("need T >= 2 scores, got {t}")));
    }
    if !(kernel.bandwidth > 0.0) {
        return Err(Error::Configuration("bandwidth must be positive".into()));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score series".into()));
    }
    if group.len() != scores.ncols() {
        return Err(Error::Dimension(format!(
            "group of size {} for {} score columns",
            group.len(),
            scores.ncols()
        )));
    }
    let acov = autocovariances(scores, kernel.lag_count(t));
    let (xi, asymmetry) = hac_from_autocovariances(&acov, kernel);
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("long-run variance".into()));
    }
    Ok(LongRunVariance {
        xi,
        kernel: *kernel,
        group,
        asymmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;
    use crate::nodewise::{NodewiseRow, PrecisionEstimate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::collections::BTreeMap;

    fn spec(kind: KernelKind, m: f64) -> KernelSpec {
        KernelSpec::new(kind, m).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let p = spec(KernelKind::Parzen, 1.0);
        assert_eq!(kernel_value(&p, 0.0), 1.0);
        assert!((kernel_value(&p, 0.25) - 0.71875).abs() < 1e-15);
        assert_eq!(kernel_value(&p, 1.5), 0.0);
        assert_eq!(kernel_value(&spec(KernelKind::Bartlett, 1.0), 0.5), 0.5);
        assert_eq!(
            kernel_value(&spec(KernelKind::QuadraticSpectral, 1.0), 0.0),
            1.0
        );
    }

    #[test]
    fn kernels_even_bounded_and_qs_continuous() {
        for kind in [
            KernelKind::Parzen,
            KernelKind::QuadraticSpectral,
            KernelKind::Bartlett,
        ] {
            let mut x = -5.0;
            while x <= 5.0 {
                let k = kind.weight(x);
                assert!(k.abs() <= 1.0 + 1e-15, "{kind} {x}");
                assert_eq!(k, kind.weight(-x));
                x += 1e-3;
            }
            assert_eq!(kind.weight(0.0), 1.0);
        }
        // series branch and closed form agree across the switch point
        let below = KernelKind::QuadraticSpectral.weight(QS_SERIES_CUTOFF - 1e-12);
        let above = KernelKind::QuadraticSpectral.weight(QS_SERIES_CUTOFF + 1e-12);
        assert!((below - above).abs() < 1e-11, "{}", below - above);
        let z: f64 = 6.0 * PI * 1e-5 / 5.0;
        let two_terms = 1.0 - z * z / 10.0 + z.powi(4) / 280.0;
        assert!((KernelKind::QuadraticSpectral.weight(1e-5) - two_terms).abs() < 1e-15);
        // Parzen continuity at 1/2
        assert!((KernelKind::Parzen.weight(0.5) - 0.25).abs() < 1e-15);
    }

    fn prec_identity(p: usize) -> PrecisionEstimate {
        let mut nodes = BTreeMap::new();
        for j in 0..p {
            nodes.insert(
                j,
                NodewiseRow {
                    j,
                    gamma_hat: Array1::zeros(p - 1),
                    sigma2_j: 1.0,
                    lambda_j: 0.0,
                    converged: true,
                    kkt_violation: 0.0,
                },
            );
        }
        let rows = nodes.iter().map(|(&j, n)| (j, n.theta_row(p))).collect();
        PrecisionEstimate {
            rows,
            nodes,
            requested: (0..p).collect(),
            p,
        }
    }

    fn random_data(t: usize, p: usize, seed: u64) -> TimeSeriesDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((t, p), |_| rng.sample(StandardNormal));
        TimeSeriesDataset::new(
            Array1::zeros(t),
            x,
            (0..p).map(|j| format!("x{j}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn scores_examples() {
        let data = random_data(20, 3, 1);
        let prec = prec_identity(3);
        let zero = score_series(&Array1::zeros(20), &data, &prec).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = Array1::from_shape_fn(20, |_| rng.random::<f64>());
        let s = score_series(&u, &data, &prec).unwrap();
        for t in 0..20 {
            for j in 0..3 {
                assert!((s[[t, j]] - u[t] * data.x()[[t, j]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scores_match_double_loop() {
        let data = random_data(15, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut prec = prec_identity(4);
        prec.requested = vec![1, 3];
        for j in [1usize, 3] {
            let row = Array1::from_shape_fn(4, |_| rng.random::<f64>() - 0.5);
            prec.rows.insert(j, row);
        }
        let u = Array1::from_shape_fn(15, |_| rng.random::<f64>());
        let s = score_series(&u, &data, &prec).unwrap();
        for t in 0..15 {
            for (a, j) in [1usize, 3].iter().enumerate() {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += prec.rows[j][k] * data.x()[[t, k]] * u[t];
                }
                assert!((s[[t, a]] - acc).abs() < 1e-14);
            }
        }
        assert!(score_series(&Array1::zeros(3), &data, &prec).is_err());
    }

    fn random_scores(t: usize, g: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Array2::<f64>::zeros((t, g));
        for i in 0..t {
            for j in 0..g {
                let e: f64 = rng.sample(StandardNormal);
                s[[i, j]] = if i > 0 { 0.4 * s[[i - 1, j]] + e } else { e };
            }
        }
        s
    }

    #[test]
    fn tiny_bandwidth_keeps_only_lag_zero() {
        let s = random_scores(200, 3, 5);
        let lrv = hac_estimate(s.view(), &spec(KernelKind::Parzen, 1e-9)).unwrap();
        let g0 = s.t().dot(&s) / 200.0;
        for (a, b) in lrv.xi.iter().zip(g0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_scores_recover_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = 20_000;
        let s = Array2::from_shape_fn((t, 1), |_| rng.sample::<f64, _>(StandardNormal) * 1.7);
        let lrv = hac_estimate(s.view(), &spec(KernelKind::Parzen, 10.0)).unwrap();
        let var = s.column(0).mapv(|v| v * v).sum() / t as f64;
        assert!((lrv.xi[[0, 0]] / var - 1.0).abs() < 0.05);
    }

    #[test]
    fn ar1_scores_recover_long_run_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = 50_000;
        let rho = 0.6;
        let mut s = Array2::<f64>::zeros((t, 1));
        s[[0, 0]] = rng.sample::<f64, _>(StandardNormal) / (1.0f64 - rho * rho).sqrt();
        for i in 1..t {
            s[[i, 0]] = rho * s[[i - 1, 0]] + rng.sample::<f64, _>(StandardNormal);
        }
        let m = (t as f64).cbrt();
        let lrv = hac_estimate(s.view(), &spec(KernelKind::Parzen, m)).unwrap();
        let truth = 1.0 / ((1.0 - rho) * (1.0 - rho));
        assert!(
            (lrv.xi[[0, 0]] / truth - 1.0).abs() < 0.1,
            "{}",
            lrv.xi[[0, 0]]
        );
    }

    #[test]
    fn symmetric_and_psd() {
        for seed in 0..100u64 {
            let s = random_scores(120, 4, 100 + seed);
            for kind in [KernelKind::Parzen, KernelKind::QuadraticSpectral] {
                let lrv = hac_estimate(s.view(), &spec(kind, 8.0)).unwrap();
                assert!(lrv.asymmetry < 1e-10);
                for i in 0..4 {
                    for j in 0..4 {
                        assert_eq!(lrv.xi[[i, j]], lrv.xi[[j, i]]);
                    }
                }
                let (ev, _) = symmetric_eigen(lrv.xi.view());
                assert!(ev[0] >= -1e-10 * ev[3], "{kind} seed {seed}: {ev}");
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let s = random_scores(100, 2, 8);
        let k = spec(KernelKind::Parzen, 6.0);
        let a = hac_estimate(s.view(), &k).unwrap();
        let b = hac_estimate((&s * 2.0).view(), &k).unwrap();
        for (x, y) in a.xi.iter().zip(b.xi.iter()) {
            assert_eq!(4.0 * x, *y);
        }
    }

    #[test]
    fn parzen_continuous_in_bandwidth() {
        let s = random_scores(80, 2, 9);
        let t = 80.0;
        let f = |m: f64| {
            hac_estimate(s.view(), &spec(KernelKind::Parzen, m))
                .unwrap()
                .xi
        };
        for m in [t, 1.5 * t, 3.0 * t] {
            let k = spec(KernelKind::Parzen, m);
            for lag in 1..40 {
                assert!(k.lag_weight(lag) > 0.0);
            }
            let a = f(m);
            let b = f(m + 1e-6);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-6 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut s = random_scores(10, 1, 10);
        assert!(hac_estimate(
            s.slice(ndarray::s![0..1, ..]),
            &spec(KernelKind::Parzen, 2.0)
        )
        .is_err());
        s[[3, 0]] = f64::NAN;
        assert!(matches!(
            hac_estimate(s.view(), &spec(KernelKind::Parzen, 2.0)),
            Err(Error::NonFinite(_))
        ));
        assert!(KernelSpec::new(KernelKind::Parzen, 0.0).is_err());
    }

    #[test]
    fn reuse_of_autocovariances_matches_direct() {
        let s = random_scores(300, 3, 11);
        let acov = autocovariances(s.view(), 60);
        for m in [5.0, 20.0, 60.0] {
            let k = spec(KernelKind::Parzen, m);
            let direct = hac_estimate(s.view(), &k).unwrap();
            let (reused, _) = hac_from_autocovariances(&acov, &k);
            for (a, b) in direct.xi.iter().zip(reused.iter()) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }
    }
}
