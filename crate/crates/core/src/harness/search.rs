use crate::baselines::{lasso_fit, ols_from_moments, LassoConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::moments::{LagSums, BLOCK_FLOORS};
use crate::simulate::{Simulator, StateRows};
use crate::sysgen::{gen_dense_star, gen_sparse_2regular, partition, SymmetricDynamics};

use super::config::{ExperimentConfig, Family, Method, Mode, Target};

/// First trajectory length tried by the search.
pub const SEARCH_START: usize = 16;

/// `||estimate - truth||_max`.
pub fn error_metric(estimate: &Matrix, truth: &Matrix) -> Result<f64> {
    Ok(estimate.sub(truth)?.max_norm())
}

/// A system together with the matrix the estimator is scored against.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dynamics: SymmetricDynamics,
    pub truth: Matrix,
}

/// Builds the dimension-`n` system of a sweep. The sparse graph is drawn
/// once per `n` from `delta_seed`; trials differ only in their noise.
pub fn build_problem(cfg: &ExperimentConfig, n: usize) -> Result<Problem> {
    let d = match cfg.family {
        Family::Sparse2Regular => gen_sparse_2regular(n, cfg.delta_seed)?,
        Family::DenseStar => gen_dense_star(n)?,
    };
    let d = match cfg.mode {
        Mode::Full => d,
        Mode::Partial => d.with_n_obs(n / 2)?,
    };
    let truth = match cfg.target {
        Target::A => d.a().clone(),
        Target::B => partition(&d)?.b,
        Target::Cct => partition(&d)?.cct(),
        Target::Cect => partition(&d)?.cect(),
    };
    Ok(Problem { dynamics: d, truth })
}

/// Smallest trajectory length (stored states, `x_0` included) at which the
/// configured estimator is within `cfg.threshold` of the truth.
pub fn min_t_single_trial(cfg: &ExperimentConfig, n: usize, trial_seed: u64) -> Result<usize> {
    cfg.validate()?;
    let problem = build_problem(cfg, n)?;
    search_min_t(cfg, &problem, trial_seed)
}

/// Estimator state that can be grown along one trajectory.
#[derive(Clone)]
enum Probe<'a> {
    Moments { sums: LagSums, target: Target },
    Ols { sums: LagSums, nonzero_rows: usize },
    Lasso { cfg: &'a LassoConfig },
}

impl<'a> Probe<'a> {
    fn new(cfg: &'a ExperimentConfig, d: &SymmetricDynamics) -> Self {
        match cfg.method {
            Method::Moments => Probe::Moments {
                sums: LagSums::for_orders(d.n_obs(), 3),
                target: cfg.target,
            },
            Method::Ols => Probe::Ols {
                sums: LagSums::new(d.n(), &[0, 1]),
                nonzero_rows: 0,
            },
            Method::Lasso => Probe::Lasso { cfg: &cfg.lasso },
        }
    }

    /// Rows before `t - history()` are never read again once `t` is reached,
    /// or `None` if every row must be kept.
    fn history(&self) -> Option<usize> {
        match self {
            Probe::Moments { .. } => Some(5),
            Probe::Ols { .. } => Some(1),
            Probe::Lasso { .. } => None,
        }
    }

    fn advance(&mut self, sim: &Simulator, rows: usize) {
        match self {
            Probe::Moments { sums, .. } => sums.advance(sim, rows),
            Probe::Ols { sums, nonzero_rows } => {
                for r in sums.rows()..rows {
                    if sim.state(r).iter().any(|v| *v != 0.0) {
                        *nonzero_rows += 1;
                    }
                }
                sums.advance(sim, rows);
            }
            Probe::Lasso { .. } => {}
        }
    }

    fn estimate(&self, sim: &Simulator, rows: usize) -> Result<Matrix> {
        match self {
            Probe::Moments { sums, target } => match target {
                Target::A => sums.a_hat(),
                _ => {
                    let blocks = sums.partial_blocks()?;
                    let (block, floor) = match target {
                        Target::B => (Some(blocks.b_hat), BLOCK_FLOORS[0]),
                        Target::Cct => (blocks.cct_hat, BLOCK_FLOORS[1]),
                        _ => (blocks.cect_hat, BLOCK_FLOORS[2]),
                    };
                    block.ok_or(Error::InsufficientData {
                        required: floor,
                        got: rows,
                    })
                }
            },
            Probe::Ols { sums, nonzero_rows } => {
                if rows < 2 {
                    return Err(Error::InsufficientData {
                        required: 2,
                        got: rows,
                    });
                }
                // Regressors are x_0..x_{R-2}; drop the final row from C_0.
                let last = sim.state(rows - 1);
                let mut gram = sums.sum(0).expect("lag 0 tracked").clone();
                for (i, &li) in last.iter().enumerate() {
                    for (j, &lj) in last.iter().enumerate() {
                        gram[(i, j)] -= li * lj;
                    }
                }
                let last_nonzero = usize::from(last.iter().any(|v| *v != 0.0));
                let cross = sums.sum(1).expect("lag 1 tracked").transpose();
                ols_from_moments(&gram, &cross, nonzero_rows - last_nonzero)
            }
            Probe::Lasso { cfg } => lasso_fit(&sim.states(rows), cfg),
        }
    }
}

/// Numerical failures of a fit count as a miss at that length.
fn within(result: Result<f64>, threshold: f64) -> Result<bool> {
    match result {
        Ok(e) => Ok(e <= threshold),
        Err(
            Error::Singular { .. }
            | Error::InsufficientData { .. }
            | Error::DegenerateVariance(_)
            | Error::Convergence { .. },
        ) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Doubling from [`SEARCH_START`] until the first success, then bisection
/// between the last miss and the first success, all on one noise stream.
pub fn search_min_t(cfg: &ExperimentConfig, problem: &Problem, seed: u64) -> Result<usize> {
    let mut sim = Simulator::new(&problem.dynamics, seed);
    let mut probe = Probe::new(cfg, &problem.dynamics);
    let check = |p: &Probe, sim: &Simulator, rows: usize| -> Result<bool> {
        let err = p
            .estimate(sim, rows)
            .and_then(|est| error_metric(&est, &problem.truth));
        within(err, cfg.threshold)
    };

    let mut miss: Option<(usize, Probe)> = None;
    let mut t = SEARCH_START.min(cfg.t_cap);
    let hit = loop {
        sim.extend_to(t);
        probe.advance(&sim, t);
        if check(&probe, &sim, t)? {
            break t;
        }
        if t >= cfg.t_cap {
            return Err(Error::CapExceeded { cap: cfg.t_cap });
        }
        if let Some(h) = probe.history() {
            sim.forget_before(t.saturating_sub(h));
        }
        miss = Some((t, probe.clone()));
        t = (2 * t).min(cfg.t_cap);
    };

    let Some((mut lo, mut lo_probe)) = miss else {
        return Ok(hit);
    };
    let mut hi = hit;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let mut p = lo_probe.clone();
        p.advance(&sim, mid);
        if check(&p, &sim, mid)? {
            hi = mid;
        } else {
            lo = mid;
            lo_probe = p;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::ols_fit;
    use crate::moments::{estimate_a, partial_blocks};
    use crate::simulate::rollout;

    fn cfg(family: Family, method: Method) -> ExperimentConfig {
        ExperimentConfig {
            n_values: vec![16],
            trials: 1,
            ..ExperimentConfig::desk(family, method)
        }
    }

    #[test]
    fn metric_cases() {
        let t = gen_dense_star(5).unwrap().a().clone();
        assert_eq!(error_metric(&t, &t).unwrap(), 0.0);
        let mut e = t.clone();
        e[(2, 3)] += 0.3;
        assert!((error_metric(&e, &t).unwrap() - 0.3).abs() < 1e-15);
        assert!(error_metric(&Matrix::zeros(2, 2), &t).is_err());
    }

    #[test]
    fn probes_match_batch_estimators() {
        let c = cfg(Family::Sparse2Regular, Method::Ols);
        let p = build_problem(&c, 12).unwrap();
        let states = rollout(&p.dynamics, 59, 4).unwrap().states().clone();
        let mut sim = Simulator::new(&p.dynamics, 4);
        sim.extend_to(60);

        let mut ols = Probe::new(&c, &p.dynamics);
        ols.advance(&sim, 60);
        let fast = ols.estimate(&sim, 60).unwrap();
        let slow = ols_fit(&states).unwrap();
        assert!(fast.sub(&slow).unwrap().max_norm() < 1e-9);
        // Too few transitions for 12 unknowns per row.
        let mut short = Probe::new(&c, &p.dynamics);
        short.advance(&sim, 12);
        assert!(matches!(
            short.estimate(&sim, 12),
            Err(Error::Singular { .. })
        ));

        let m = ExperimentConfig {
            method: Method::Moments,
            ..c.clone()
        };
        let mut mom = Probe::new(&m, &p.dynamics);
        mom.advance(&sim, 60);
        let diff = mom
            .estimate(&sim, 60)
            .unwrap()
            .sub(&estimate_a(&states).unwrap())
            .unwrap();
        assert!(diff.max_norm() < 1e-12);

        let part = ExperimentConfig {
            method: Method::Moments,
            mode: Mode::Partial,
            target: Target::Cct,
            ..c
        };
        let pp = build_problem(&part, 12).unwrap();
        let mut pr = Probe::new(&part, &pp.dynamics);
        pr.advance(&sim, 60);
        let batch = partial_blocks(&states.leading_columns(6)).unwrap();
        let diff = pr
            .estimate(&sim, 60)
            .unwrap()
            .sub(&batch.cct_hat.unwrap())
            .unwrap();
        assert!(diff.max_norm() < 1e-12);
        assert_eq!(pp.truth, partition(&pp.dynamics).unwrap().cct());
    }

    #[test]
    fn huge_threshold_returns_lattice_start() {
        for method in [Method::Moments, Method::Ols, Method::Lasso] {
            let c = ExperimentConfig {
                threshold: 10.0,
                ..cfg(Family::DenseStar, method)
            };
            assert_eq!(min_t_single_trial(&c, 8, 1).unwrap(), SEARCH_START);
        }
    }

    #[test]
    fn result_is_a_boundary_on_the_lattice() {
        let c = cfg(Family::Sparse2Regular, Method::Moments);
        let p = build_problem(&c, 24).unwrap();
        let t = search_min_t(&c, &p, 9).unwrap();
        let states = rollout(&p.dynamics, t - 1, 9).unwrap().states().clone();
        let at = error_metric(&estimate_a(&states).unwrap(), &p.truth).unwrap();
        assert!(at <= c.threshold);
        let before = estimate_a(&states.leading_rows(t - 1)).unwrap();
        assert!(error_metric(&before, &p.truth).unwrap() > c.threshold);
    }

    #[test]
    fn tighter_threshold_needs_longer_trajectories() {
        for method in [Method::Moments, Method::Ols] {
            let loose = ExperimentConfig {
                threshold: 0.5,
                ..cfg(Family::Sparse2Regular, method)
            };
            let tight = ExperimentConfig {
                threshold: 0.1,
                ..loose.clone()
            };
            for seed in 0..3 {
                let a = min_t_single_trial(&loose, 16, seed).unwrap();
                let b = min_t_single_trial(&tight, 16, seed).unwrap();
                assert!(b >= a, "{method}: {b} < {a}");
            }
        }
    }

    #[test]
    fn moments_sparse_n64_is_finite_and_moderate() {
        let c = cfg(Family::Sparse2Regular, Method::Moments);
        let t = min_t_single_trial(&c, 64, 0).unwrap();
        assert!(t <= 10_000, "{t}");
    }

    #[test]
    fn cap_is_reported() {
        let c = ExperimentConfig {
            threshold: 1e-6,
            t_cap: 300,
            ..cfg(Family::DenseStar, Method::Moments)
        };
        assert!(matches!(
            min_t_single_trial(&c, 8, 0),
            Err(Error::CapExceeded { cap: 300 })
        ));
    }
}
