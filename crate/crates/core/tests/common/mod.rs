#![allow(dead_code)]

use hdgranger::TimeSeriesDataset;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(t: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((t, p), || StandardNormal.sample(rng))
}

pub fn gaussian_vec(t: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(t, || StandardNormal.sample(rng))
}

/// Columns with `X'X / T = I`.
pub fn orthonormal_design(t: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = gaussian(t, p, rng);
    let m = DMatrix::from_fn(t, p, |i, j| g[[i, j]]);
    let q = m.qr().q();
    let s = (t as f64).sqrt();
    Array2::from_shape_fn((t, p), |(i, j)| q[(i, j)] * s)
}

pub fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

pub fn dataset(y: Array1<f64>, x: Array2<f64>) -> TimeSeriesDataset {
    let p = x.ncols();
    TimeSeriesDataset::new(y, x, names(p)).unwrap()
}

pub fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
