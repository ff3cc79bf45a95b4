mod common;

use common::*;
use hdgranger::sglasso::{
    cv_select, fit_sglasso, kkt_violation, lambda_grid, penalty_value, GroupWeighting, PenaltySpec,
    SolverSettings,
};
use hdgranger::GroupStructure;
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;

fn settings() -> SolverSettings {
    SolverSettings::default()
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Naive cyclic coordinate descent for `||y - Xb||_T^2 + 2 lambda |b|_1`,
/// working on the raw data rather than moments.
fn l1_oracle(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Array1<f64> {
    let (t, p) = x.dim();
    let tf = t as f64;
    let mut b = Array1::<f64>::zeros(p);
    let mut r = y.clone();
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for j in 0..p {
            let col = x.column(j);
            let nj = col.dot(&col) / tf;
            let rho = col.dot(&r) / tf + nj * b[j];
            let new = soft(rho, lambda) / nj;
            let d = new - b[j];
            if d != 0.0 {
                r.scaled_add(-d, &col);
                b[j] = new;
                change = change.max(d.abs());
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    b
}

#[test]
fn lasso_matches_coordinate_descent_oracle() {
    let mut rng = rng(1);
    for inst in 0..20 {
        let x = gaussian(50, 10, &mut rng);
        let beta = array![2.0, -1.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.0];
        let y = x.dot(&beta) + gaussian_vec(50, &mut rng);
        let data = dataset(y.clone(), x.clone());
        let lambda = 0.05 + 0.02 * inst as f64;
        let fit = fit_sglasso(&data, &PenaltySpec::lasso(lambda, 10), &settings()).unwrap();
        assert!(fit.converged);
        assert!(kkt_violation(&fit, &data) < 1e-6);
        let oracle = l1_oracle(&x, &y, lambda);
        assert!(max_abs_diff(&fit.beta, &oracle) < 1e-6, "instance {inst}");
    }
}

#[test]
fn objective_never_increases() {
    let mut rng = rng(2);
    let x = gaussian(80, 12, &mut rng);
    let y = x.column(0).to_owned() * 2.0 - x.column(5) + gaussian_vec(80, &mut rng);
    let data = dataset(y, x);
    let groups = GroupStructure::contiguous(&[3, 3, 3, 3]).unwrap();
    for alpha in [0.0, 0.3, 1.0] {
        let spec = PenaltySpec::new(0.05, alpha, groups.clone()).unwrap();
        let s = SolverSettings {
            trace_objective: true,
            ..settings()
        };
        let fit = fit_sglasso(&data, &spec, &s).unwrap();
        let trace = fit.objective_trace.as_ref().unwrap();
        assert!(trace.len() > 1);
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
                "alpha {alpha}: {} -> {}",
                w[0],
                w[1]
            );
        }
        assert!(fit.converged);
        assert!(kkt_violation(&fit, &data) < 1e-6);
    }
}

#[test]
fn stored_fields_are_consistent() {
    let mut rng = rng(3);
    let x = gaussian(60, 8, &mut rng);
    let y = x.column(1).to_owned() + gaussian_vec(60, &mut rng);
    let data = dataset(y.clone(), x.clone());
    let groups = GroupStructure::contiguous(&[2, 2, 4]).unwrap();
    let spec = PenaltySpec::new(0.1, 0.5, groups).unwrap();
    let fit = fit_sglasso(&data, &spec, &settings()).unwrap();
    let resid = &y - &x.dot(&fit.beta);
    assert_eq!(fit.residuals, resid);
    let loss = resid.dot(&resid) / 60.0;
    let omega = penalty_value(fit.beta.view(), &spec);
    assert!((fit.objective_value - (loss + 2.0 * 0.1 * omega)).abs() < 1e-10);
    assert!(fit.sigma2_hat >= loss);
    assert!((fit.sigma2_hat - (loss + 0.1 * omega)).abs() < 1e-12);
}

#[test]
fn group_gradient_norm_equals_lambda_on_nonzero_groups() {
    let mut rng = rng(4);
    let x = gaussian(100, 9, &mut rng);
    let beta = array![1.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0];
    let y = x.dot(&beta) + gaussian_vec(100, &mut rng) * 0.5;
    let data = dataset(y.clone(), x.clone());
    let groups = GroupStructure::contiguous(&[3, 3, 3]).unwrap();
    let lambda = 0.08;
    let spec = PenaltySpec::new(lambda, 0.0, groups.clone()).unwrap();
    let fit = fit_sglasso(&data, &spec, &settings()).unwrap();
    assert!(kkt_violation(&fit, &data) < 1e-6);
    let corr = x.t().dot(&fit.residuals) / 100.0;
    let mut nonzero = 0;
    for g in groups.groups() {
        let norm_b: f64 = g
            .indices
            .iter()
            .map(|&j| fit.beta[j].powi(2))
            .sum::<f64>()
            .sqrt();
        let norm_g: f64 = g
            .indices
            .iter()
            .map(|&j| corr[j].powi(2))
            .sum::<f64>()
            .sqrt();
        if norm_b > 0.0 {
            nonzero += 1;
            assert!((norm_g - lambda).abs() < 1e-6, "{norm_g}");
        } else {
            assert!(norm_g <= lambda + 1e-6);
        }
    }
    assert!(nonzero >= 1);
}

#[test]
fn univariate_soft_threshold_example() {
    // ||x||_T^2 = 1 and <x, y>_T = 0.8
    let x = Array2::from_shape_vec((4, 1), vec![1.0, -1.0, 1.0, -1.0]).unwrap();
    let y = array![0.8, -0.8, 0.8, -0.8];
    let data = dataset(y, x);
    let fit = fit_sglasso(&data, &PenaltySpec::lasso(0.3, 1), &settings()).unwrap();
    assert!((fit.beta[0] - 0.5).abs() < 1e-12);
    assert!(kkt_violation(&fit, &data) < 1e-8);
}

#[test]
fn orthonormal_group_example() {
    let mut rng = rng(5);
    let x = orthonormal_design(40, 2, &mut rng);
    // choose y in the column span with X'y/T = (0.6, 0.8)
    let y = x.dot(&array![0.6, 0.8]);
    let data = dataset(y, x);
    let spec = PenaltySpec::new(0.5, 0.0, GroupStructure::contiguous(&[2]).unwrap()).unwrap();
    let fit = fit_sglasso(&data, &spec, &settings()).unwrap();
    assert!(max_abs_diff(&fit.beta, &array![0.3, 0.4]) < 1e-9);
    assert!(kkt_violation(&fit, &data) < 1e-8);
}

#[test]
fn null_threshold_gives_zero() {
    let mut rng = rng(6);
    let x = gaussian(70, 6, &mut rng);
    let y = gaussian_vec(70, &mut rng) + x.column(2);
    let data = dataset(y.clone(), x.clone());
    let xty = x.t().dot(&y) / 70.0;
    let lmax = xty.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let fit = fit_sglasso(&data, &PenaltySpec::lasso(lmax, 6), &settings()).unwrap();
    assert!(fit.beta.iter().all(|b| *b == 0.0));
    assert!(kkt_violation(&fit, &data) < 1e-10);
    let grid = lambda_grid(&data, &PenaltySpec::lasso(0.0, 6), 1);
    assert!((grid[0] - lmax).abs() < 1e-15);
}

#[test]
fn exact_lambda_max_zeroes_sparse_group_fit() {
    let mut rng = rng(7);
    let x = gaussian(90, 8, &mut rng);
    let y = x.column(0).to_owned() + x.column(4) + gaussian_vec(90, &mut rng);
    let data = dataset(y, x);
    let groups = GroupStructure::contiguous(&[4, 4]).unwrap();
    for alpha in [0.2, 0.5, 0.8] {
        for w in [GroupWeighting::Unit, GroupWeighting::SqrtSize] {
            let spec = PenaltySpec::new(0.0, alpha, groups.clone())
                .unwrap()
                .with_weighting(w);
            let lmax = lambda_grid(&data, &spec, 1)[0];
            let at =
                fit_sglasso(&data, &spec.with_lambda(lmax * (1.0 + 1e-9)), &settings()).unwrap();
            assert!(at.beta.iter().all(|b| *b == 0.0));
            let below = fit_sglasso(&data, &spec.with_lambda(lmax * 0.99), &settings()).unwrap();
            assert!(below.beta.iter().any(|b| *b != 0.0));
            assert!(kkt_violation(&below, &data) < 1e-6);
        }
    }
}

#[test]
fn perturbed_solution_violates_kkt() {
    let mut rng = rng(8);
    let x = gaussian(100, 5, &mut rng);
    let y = x.dot(&array![1.5, 0.0, -1.0, 0.0, 0.0]) + gaussian_vec(100, &mut rng) * 0.3;
    let data = dataset(y, x);
    let mut fit = fit_sglasso(&data, &PenaltySpec::lasso(0.05, 5), &settings()).unwrap();
    assert!(kkt_violation(&fit, &data) < 1e-8);
    let j = fit.beta.iter().position(|b| *b != 0.0).unwrap();
    fit.beta[j] += 0.1;
    assert!(kkt_violation(&fit, &data) >= 0.05);
}

#[test]
fn cv_on_pure_noise_picks_large_lambda() {
    // T and p of the Wald size/power design
    let (t, p) = (1000, 50);
    let mut hits = 0;
    for seed in 0..50 {
        let mut rng = rng(1000 + seed);
        let x = gaussian(t, p, &mut rng);
        let y = gaussian_vec(t, &mut rng);
        let data = dataset(y, x);
        let grid = lambda_grid(&data, &PenaltySpec::lasso(0.0, p), 50);
        let cv = cv_select(
            &data,
            &GroupStructure::singletons(p),
            1.0,
            10,
            &grid,
            &settings(),
        )
        .unwrap();
        if cv.selected_index < 5 {
            hits += 1;
        }
    }
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn cv_recovers_strong_support() {
    let mut hits = 0;
    for seed in 0..50 {
        let mut rng = rng(2000 + seed);
        let x = gaussian(100, 10, &mut rng);
        let beta = array![4.0, -4.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let y = x.dot(&beta) + gaussian_vec(100, &mut rng) * 0.1;
        let data = dataset(y, x);
        let grid = lambda_grid(&data, &PenaltySpec::lasso(0.0, 10), 50);
        let cv = cv_select(
            &data,
            &GroupStructure::singletons(10),
            1.0,
            10,
            &grid,
            &settings(),
        )
        .unwrap();
        let fit = fit_sglasso(
            &data,
            &PenaltySpec::lasso(cv.selected_lambda, 10),
            &settings(),
        )
        .unwrap();
        assert!(kkt_violation(&fit, &data) < 1e-6);
        if (0..3).all(|j| fit.beta[j] != 0.0) {
            hits += 1;
        }
    }
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn cv_selection_minimizes_mean_error() {
    let mut rng = rng(9);
    let x = gaussian(120, 6, &mut rng);
    let y = x.column(0).to_owned() * 0.5 + gaussian_vec(120, &mut rng);
    let data = dataset(y, x);
    let grid = lambda_grid(&data, &PenaltySpec::lasso(0.0, 6), 30);
    let cv = cv_select(
        &data,
        &GroupStructure::singletons(6),
        1.0,
        10,
        &grid,
        &settings(),
    )
    .unwrap();
    let best = cv.mean_errors.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(cv.mean_errors[cv.selected_index], best);
    let first = cv.mean_errors.iter().position(|e| *e == best).unwrap();
    assert_eq!(cv.selected_index, first);
    assert_eq!(cv.cv_errors.dim(), (30, 10));
    let covered: usize = cv.fold_boundaries.iter().map(|r| r.len()).sum();
    assert_eq!(covered, 120);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_fits_certify_kkt(
        seed in 0u64..10_000,
        alpha in 0.0f64..=1.0,
        scale in 0.01f64..0.5,
    ) {
        let mut rng = rng(seed);
        let x = gaussian(40, 6, &mut rng);
        let y = x.column(0).to_owned() - x.column(3) + gaussian_vec(40, &mut rng);
        let data = dataset(y, x);
        let groups = GroupStructure::contiguous(&[2, 2, 2]).unwrap();
        let spec = PenaltySpec::new(0.0, alpha, groups).unwrap();
        let lmax = lambda_grid(&data, &spec, 1)[0];
        let fit = fit_sglasso(&data, &spec.with_lambda(scale * lmax), &settings()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(kkt_violation(&fit, &data) < 1e-6);
    }
}
