use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Normalized second moments of a regression problem: `X'X/n`, `X'y/n`, `y'y/n`.
///
/// The least-squares part of the objective only depends on these, so the
/// solver never touches the raw rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub gram: Array2<f64>,
    pub xty: Array1<f64>,
    pub yty: f64,
    pub n: usize,
}

impl Moments {
    pub fn from_data(x: ArrayView2<f64>, y: &Array1<f64>) -> Self {
        let n = x.nrows();
        let nf = n as f64;
        Self {
            gram: x.t().dot(&x) / nf,
            xty: x.t().dot(y) / nf,
            yty: y.dot(y) / nf,
            n,
        }
    }

    pub fn n_features(&self) -> usize {
        self.xty.len()
    }

    /// `||y - Xb||_T^2` evaluated from the moments.
    pub fn loss(&self, b: &Array1<f64>) -> f64 {
        let gb = self.gram.dot(b);
        (self.yty - 2.0 * self.xty.dot(b) + b.dot(&gb)).max(0.0)
    }
}

/// Unnormalized cross products `Z'Z` of a stacked matrix, kept per time block
/// so training/validation moments for blocked cross-validation come from
/// subtractions instead of recomputation.
#[derive(Debug, Clone)]
pub struct FoldedCrossProducts {
    folds: Vec<Range<usize>>,
    per_fold: Vec<Array2<f64>>,
    total: Array2<f64>,
    n: usize,
}

impl FoldedCrossProducts {
    pub fn new(z: ArrayView2<f64>, folds: Vec<Range<usize>>) -> Result<Self> {
        let n = z.nrows();
        let covered: usize = folds.iter().map(|r| r.len()).sum();
        if covered != n || folds.iter().any(|r| r.end > n) {
            return Err(Error::Dimension(format!(
                "folds cover {covered} rows of {n}"
            )));
        }
        let q = z.ncols();
        let mut total = Array2::zeros((q, q));
        let mut per_fold = Vec::with_capacity(folds.len());
        for r in &folds {
            let block = z.slice(s![r.clone(), ..]);
            let zz = block.t().dot(&block);
            total += &zz;
            per_fold.push(zz);
        }
        Ok(Self {
            folds,
            per_fold,
            total,
            n,
        })
    }

    pub fn folds(&self) -> &[Range<usize>] {
        &self.folds
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    /// Moments of regressing column `response` on `predictors` over all rows.
    pub fn full(&self, response: usize, predictors: &[usize]) -> Moments {
        extract(&self.total, self.n, response, predictors)
    }

    /// Moments over all rows except fold `k`.
    pub fn training(&self, k: usize, response: usize, predictors: &[usize]) -> Moments {
        let diff = &self.total - &self.per_fold[k];
        extract(&diff, self.n - self.folds[k].len(), response, predictors)
    }

    /// Moments over fold `k` only.
    pub fn validation(&self, k: usize, response: usize, predictors: &[usize]) -> Moments {
        extract(&self.per_fold[k], self.folds[k].len(), response, predictors)
    }
}

fn extract(zz: &Array2<f64>, n: usize, response: usize, predictors: &[usize]) -> Moments {
    let nf = n as f64;
    let p = predictors.len();
    let gram = Array2::from_shape_fn((p, p), |(a, b)| zz[[predictors[a], predictors[b]]] / nf);
    let xty = Array1::from_shape_fn(p, |a| zz[[predictors[a], response]] / nf);
    Moments {
        gram,
        xty,
        yty: zz[[response, response]] / nf,
        n,
    }
}
