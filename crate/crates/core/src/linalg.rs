//! Small dense linear-algebra helpers backed by nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

pub(crate) fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenvalues (ascending) and matching eigenvectors (as columns) of a
/// symmetric matrix.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(to_dmatrix(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(a: ArrayView2<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[[0, 0]];
    }
    let (values, _) = symmetric_eigen(a);
    values[values.len() - 1]
}

/// Moore-Penrose inverse of a symmetric matrix; eigenvalues at or below
/// `rel_cutoff * max|eigenvalue|` are dropped. Returns the inverse and the rank kept.
pub fn symmetric_pinv(a: ArrayView2<f64>, rel_cutoff: f64) -> (Array2<f64>, usize) {
    let n = a.nrows();
    let (values, vectors) = symmetric_eigen(a);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Array2::zeros((n, n));
    let mut rank = 0;
    if scale == 0.0 {
        return (out, 0);
    }
    for (k, &lam) in values.iter().enumerate() {
        if lam.abs() <= rel_cutoff * scale {
            continue;
        }
        rank += 1;
        let v = vectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] += v[i] * v[j] / lam;
            }
        }
    }
    (out, rank)
}

/// Singular values of a general matrix, descending.
pub fn singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    let m = to_dmatrix(a);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Solve a symmetric positive-definite system; `None` if not PD.
pub fn solve_spd(a: ArrayView2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let chol = to_dmatrix(a).cholesky()?;
    let rhs = nalgebra::DVector::from_iterator(b.len(), b.iter().copied());
    let x = chol.solve(&rhs);
    Some(Array1::from_iter(x.iter().copied()))
}

/// Inverse of an SPD matrix; `None` if not PD.
pub fn inverse_spd(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let chol = to_dmatrix(a).cholesky()?;
    Some(from_dmatrix(&chol.inverse()))
}
