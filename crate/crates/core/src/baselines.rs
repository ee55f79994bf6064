//! Least-squares baselines fit on one-step transitions `x_t -> x_{t+1}`.
//!
//! [`ols_fit`] is plain least squares. [`lasso_fit`] solves an
//! l1-penalized regression per output coordinate by coordinate descent and
//! picks the penalty by one-step prediction error on a held-out trajectory
//! suffix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{cholesky_solve, Matrix};

/// Ridge added to the OLS Gram matrix.
pub const OLS_JITTER: f64 = 1e-10;

/// Gram `sum x_t x_t^T` and cross `sum x_{t+1} x_t^T` over the first
/// `pairs` transitions, plus the number of nonzero regressor rows.
struct TransitionMoments {
    gram: Matrix,
    cross: Matrix,
    nonzero_regressors: usize,
}

fn transition_moments(states: &Matrix, range: std::ops::Range<usize>) -> TransitionMoments {
    let n = states.cols();
    let mut gram = Matrix::zeros(n, n);
    let mut cross = Matrix::zeros(n, n);
    let mut nonzero_regressors = 0;
    for t in range {
        let x = states.row(t);
        let y = states.row(t + 1);
        if x.iter().any(|v| *v != 0.0) {
            nonzero_regressors += 1;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (g, xj) in gram.row_mut(i).iter_mut().zip(x) {
                *g += xi * xj;
            }
        }
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (c, xj) in cross.row_mut(i).iter_mut().zip(x) {
                *c += yi * xj;
            }
        }
    }
    TransitionMoments {
        gram,
        cross,
        nonzero_regressors,
    }
}

/// OLS solution `cross (gram + jitter I)^{-1}`.
///
/// Fewer nonzero regressor rows than dimensions means the Gram matrix is
/// rank deficient, which is reported as singular instead of being masked by
/// the jitter.
pub fn ols_from_moments(
    gram: &Matrix,
    cross: &Matrix,
    nonzero_regressors: usize,
) -> Result<Matrix> {
    let n = gram.rows();
    if nonzero_regressors < n {
        return Err(Error::Singular {
            pivot: nonzero_regressors,
        });
    }
    let jittered = gram.add(&Matrix::identity(n).scale(OLS_JITTER))?;
    // gram is symmetric, so A^T = gram^{-1} cross^T.
    let l = jittered.cholesky()?;
    Ok(cholesky_solve(&l, &cross.transpose()).transpose())
}

pub fn ols_fit(states: &Matrix) -> Result<Matrix> {
    if states.rows() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            got: states.rows(),
        });
    }
    let m = transition_moments(states, 0..states.rows() - 1);
    ols_from_moments(&m.gram, &m.cross, m.nonzero_regressors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaGrid {
    /// `points` values from `lambda_max` down to `lambda_max * min_ratio`.
    Geometric { points: usize, min_ratio: f64 },
    /// Fixed, strictly descending penalties.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda_grid: LambdaGrid,
    /// Cap on coordinate-descent sweeps per penalty value.
    pub max_iter: usize,
    /// Largest coordinate change accepted as converged.
    pub tol: f64,
    pub holdout_frac: f64,
    /// Stop walking down the grid after this many consecutive penalties
    /// without a new best held-out error, counted from the first penalty
    /// with a nonzero solution. `None` walks the whole grid.
    pub patience: Option<usize>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            lambda_grid: LambdaGrid::Geometric {
                points: 30,
                min_ratio: 1e-3,
            },
            max_iter: 10_000,
            tol: 1e-7,
            holdout_frac: 0.2,
            patience: Some(5),
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.lambda_grid {
            LambdaGrid::Geometric { points, min_ratio } => {
                if *points == 0 || !(*min_ratio > 0.0 && *min_ratio <= 1.0) {
                    return Err(Error::invalid(
                        "geometric grid needs points >= 1 and min_ratio in (0, 1]",
                    ));
                }
            }
            LambdaGrid::Explicit(grid) => {
                if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return Err(Error::invalid("lambda grid must be non-empty and positive"));
                }
                if grid.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::invalid("lambda grid must be strictly descending"));
                }
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac <= 0.5) {
            return Err(Error::invalid("holdout_frac must lie in (0, 0.5]"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }

    fn grid(&self, lambda_max: f64) -> Vec<f64> {
        match &self.lambda_grid {
            LambdaGrid::Explicit(g) => g.clone(),
            LambdaGrid::Geometric { points, min_ratio } => {
                if *points == 1 {
                    return vec![lambda_max];
                }
                let step = min_ratio.ln() / (*points - 1) as f64;
                (0..*points)
                    .map(|k| lambda_max * (step * k as f64).exp())
                    .collect()
            }
        }
    }
}

/// `sign(z) max(|z| - lambda, 0) / a`, the minimizer of
/// `a/2 theta^2 - z theta + lambda |theta|`.
pub fn soft_threshold(z: f64, lambda: f64, a: f64) -> f64 {
    if z > lambda {
        (z - lambda) / a
    } else if z < -lambda {
        (z + lambda) / a
    } else {
        0.0
    }
}

/// Coordinate descent for `1/2 theta^T G theta - c^T theta + lambda |theta|_1`,
/// which is the per-row lasso objective after dividing by the sample count.
///
/// `theta` is used as the warm start and overwritten with the solution.
/// Returns the number of sweeps taken.
pub(crate) fn coordinate_descent(
    gram: &Matrix,
    c: &[f64],
    lambda: f64,
    theta: &mut [f64],
    max_iter: usize,
    tol: f64,
    mut on_sweep: impl FnMut(&[f64]),
) -> Result<usize> {
    let n = c.len();
    // residual correlation r = c - G theta
    let mut r = c.to_vec();
    for (k, &tk) in theta.iter().enumerate() {
        if tk != 0.0 {
            for (rj, gk) in r.iter_mut().zip(gram.row(k)) {
                *rj -= gk * tk;
            }
        }
    }

    let update = |j: usize, theta: &mut [f64], r: &mut [f64]| -> f64 {
        let a = gram.get(j, j);
        if a <= 0.0 {
            return 0.0;
        }
        let old = theta[j];
        let new = soft_threshold(r[j] + a * old, lambda, a);
        let delta = new - old;
        if delta != 0.0 {
            theta[j] = new;
            for (rj, gk) in r.iter_mut().zip(gram.row(j)) {
                *rj -= gk * delta;
            }
        }
        delta.abs()
    };

    let mut sweeps = 0;
    let mut full_pass = true;
    while sweeps < max_iter {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        if full_pass {
            for j in 0..n {
                max_delta = max_delta.max(update(j, theta, &mut r));
            }
        } else {
            for j in 0..n {
                if theta[j] != 0.0 {
                    max_delta = max_delta.max(update(j, theta, &mut r));
                }
            }
        }
        on_sweep(theta);
        if max_delta <= tol {
            if full_pass {
                return Ok(sweeps);
            }
            // Active set settled; confirm with a pass over every coordinate.
            full_pass = true;
        } else {
            full_pass = false;
        }
    }

    let gap = (0..n)
        .map(|j| {
            if theta[j] == 0.0 {
                (r[j].abs() - lambda).max(0.0)
            } else {
                (r[j] - lambda * theta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max);
    Err(Error::Convergence { lambda, gap })
}

/// Lasso estimate with the penalty chosen per output row.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coef: Matrix,
    pub lambda_max: f64,
    /// Selected penalty for each output coordinate.
    pub selected: Vec<f64>,
    pub n_train: usize,
}

pub fn lasso_fit(states: &Matrix, cfg: &LassoConfig) -> Result<Matrix> {
    lasso_fit_detailed(states, cfg).map(|f| f.coef)
}

pub fn lasso_fit_detailed(states: &Matrix, cfg: &LassoConfig) -> Result<LassoFit> {
    cfg.validate()?;
    let rows = states.rows();
    if rows < 4 {
        return Err(Error::InsufficientData {
            required: 4,
            got: rows,
        });
    }
    let n = states.cols();
    let pairs = rows - 1;
    let n_hold = ((cfg.holdout_frac * pairs as f64).round() as usize).max(1);
    let n_train = pairs - n_hold;

    let train = transition_moments(states, 0..n_train);
    let scale = 1.0 / n_train as f64;
    let gram = train.gram.scale(scale);
    let cross = train.cross.scale(scale);
    let lambda_max = cross.max_norm();
    let grid = cfg.grid(lambda_max);

    let fits: Vec<Result<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = cross.row(i);
            let mut theta = vec![0.0; n];
            let mut best: Option<(f64, Vec<f64>, f64)> = None;
            let mut since_best = 0;
            for &lambda in &grid {
                coordinate_descent(&gram, c, lambda, &mut theta, cfg.max_iter, cfg.tol, |_| {})?;
                let err = holdout_error(states, n_train..pairs, i, &theta);
                let started = theta.iter().any(|v| *v != 0.0);
                match &best {
                    Some((b, _, _)) if err >= *b => since_best += usize::from(started),
                    _ => {
                        best = Some((err, theta.clone(), lambda));
                        since_best = 0;
                    }
                }
                if cfg.patience.is_some_and(|p| since_best >= p) {
                    break;
                }
            }
            let (_, coef, lambda) = best.expect("grid is non-empty");
            Ok((coef, lambda))
        })
        .collect();

    let mut coef = Matrix::zeros(n, n);
    let mut selected = Vec::with_capacity(n);
    for (i, fit) in fits.into_iter().enumerate() {
        let (row, lambda) = fit?;
        coef.row_mut(i).copy_from_slice(&row);
        selected.push(lambda);
    }
    Ok(LassoFit {
        coef,
        lambda_max,
        selected,
        n_train,
    })
}

fn holdout_error(states: &Matrix, range: std::ops::Range<usize>, i: usize, theta: &[f64]) -> f64 {
    let support: Vec<(usize, f64)> = theta
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, v)| (j, *v))
        .collect();
    range
        .map(|t| {
            let x = states.row(t);
            let pred: f64 = support.iter().map(|&(j, v)| v * x[j]).sum();
            (states.get(t + 1, i) - pred).powi(2)
        })
        .sum()
}
