use ndarray::Array1;

use super::{penalty_value, prox_block, Moments, PenaltySpec, SolverSettings};
use crate::data::GroupStructure;
use crate::error::{Error, Result};
use crate::linalg::max_eigenvalue;

/// Raw solver output on a moments problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub beta: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `||y - X beta||_T^2 + 2 lambda Omega(beta)` from the moments.
    pub objective: f64,
    pub trace: Option<Vec<f64>>,
}

/// Cyclic block coordinate descent over the groups of a partition.
///
/// Each block takes one proximal-gradient step with step size `1/L_G`, where
/// `L_G` is the largest eigenvalue of the block of `X'X/T`. For singleton
/// groups that step is the exact coordinate minimizer. The per-group
/// constants depend only on the moments, so one solver serves a whole
/// regularization path.
pub struct BlockSolver<'a> {
    moments: &'a Moments,
    groups: &'a GroupStructure,
    lipschitz: Vec<f64>,
}

impl<'a> BlockSolver<'a> {
    pub fn new(moments: &'a Moments, groups: &'a GroupStructure) -> Self {
        let lipschitz = groups
            .groups()
            .iter()
            .map(|g| {
                let idx = &g.indices;
                if idx.len() == 1 {
                    moments.gram[[idx[0], idx[0]]]
                } else {
                    let sub = ndarray::Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| {
                        moments.gram[[idx[a], idx[b]]]
                    });
                    max_eigenvalue(sub.view())
                }
            })
            .collect();
        Self {
            moments,
            groups,
            lipschitz,
        }
    }

    fn objective(&self, beta: &Array1<f64>, grad: &Array1<f64>, spec: &PenaltySpec) -> f64 {
        // grad = G b - c, so b'Gb = b'(grad + c)
        let m = self.moments;
        let loss = m.yty - m.xty.dot(beta) + beta.dot(grad);
        loss + 2.0 * spec.lambda * penalty_value(beta.view(), spec)
    }

    /// One pass over the selected groups; returns the largest coefficient change.
    fn pass(
        &self,
        spec: &PenaltySpec,
        beta: &mut Array1<f64>,
        grad: &mut Array1<f64>,
        only_active: bool,
        block: &mut Vec<f64>,
    ) -> f64 {
        let gram = &self.moments.gram;
        let p = beta.len();
        let mut max_change = 0.0f64;
        for (g, group) in self.groups.groups().iter().enumerate() {
            let lip = self.lipschitz[g];
            if lip <= 0.0 {
                continue;
            }
            let idx = &group.indices;
            if only_active && idx.iter().all(|&j| beta[j] == 0.0) {
                continue;
            }
            let step = 1.0 / lip;
            block.clear();
            block.extend(idx.iter().map(|&j| beta[j] - step * grad[j]));
            prox_block(
                block,
                step * spec.lambda * spec.alpha,
                step * spec.lambda * (1.0 - spec.alpha) * spec.group_weight(idx.len()),
            );
            for (&j, &new) in idx.iter().zip(block.iter()) {
                let delta = new - beta[j];
                if delta != 0.0 {
                    beta[j] = new;
                    for k in 0..p {
                        grad[k] += gram[[k, j]] * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
        }
        max_change
    }

    pub fn solve(
        &self,
        spec: &PenaltySpec,
        settings: &SolverSettings,
        warm: Option<&Array1<f64>>,
    ) -> Result<Solution> {
        let p = self.moments.n_features();
        if self.groups.n_features() != p {
            return Err(Error::GroupMismatch(format!(
                "groups partition {} columns, problem has {p}",
                self.groups.n_features()
            )));
        }
        let mut beta = match warm {
            Some(w) if w.len() == p => w.clone(),
            Some(w) => {
                return Err(Error::Dimension(format!(
                    "warm start has length {}, expected {p}",
                    w.len()
                )))
            }
            None => Array1::zeros(p),
        };
        let mut grad = self.moments.gram.dot(&beta) - &self.moments.xty;
        let mut trace = settings
            .trace_objective
            .then(|| vec![self.objective(&beta, &grad, spec)]);
        let mut block = Vec::new();
        let mut iterations = 0;
        let mut converged = false;

        'outer: while iterations < settings.max_cycles {
            let change = self.pass(spec, &mut beta, &mut grad, false, &mut block);
            iterations += 1;
            self.record(&mut trace, &beta, &grad, spec)?;
            if change < settings.tol {
                converged = true;
                break;
            }
            // settle the active set before the next full sweep
            loop {
                if iterations >= settings.max_cycles {
                    break 'outer;
                }
                let change = self.pass(spec, &mut beta, &mut grad, true, &mut block);
                iterations += 1;
                self.record(&mut trace, &beta, &grad, spec)?;
                if change < settings.tol {
                    break;
                }
            }
        }

        let objective = self.objective(&beta, &grad, spec);
        if !objective.is_finite() {
            return Err(Error::SolverDivergence(format!(
                "objective is {objective} after {iterations} cycles"
            )));
        }
        Ok(Solution {
            beta,
            iterations,
            converged,
            objective,
            trace,
        })
    }

    fn record(
        &self,
        trace: &mut Option<Vec<f64>>,
        beta: &Array1<f64>,
        grad: &Array1<f64>,
        spec: &PenaltySpec,
    ) -> Result<()> {
        if let Some(t) = trace {
            let v = self.objective(beta, grad, spec);
            if !v.is_finite() {
                return Err(Error::SolverDivergence(format!("objective became {v}")));
            }
            t.push(v);
        }
        Ok(())
    }

    /// Warm-started solutions along a decreasing grid.
    pub fn path(
        &self,
        spec: &PenaltySpec,
        grid: &[f64],
        settings: &SolverSettings,
    ) -> Result<Vec<Solution>> {
        let mut out: Vec<Solution> = Vec::with_capacity(grid.len());
        for &lambda in grid {
            let warm = out.last().map(|s| s.beta.clone());
            out.push(self.solve(&spec.with_lambda(lambda), settings, warm.as_ref())?);
        }
        Ok(out)
    }
}
