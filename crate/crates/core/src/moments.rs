//! Method-of-moments estimators for symmetric stable dynamics.
//!
//! The lag-`m` estimator over the first `T` states `x_0..x_{T-1}` is
//!
//! ```text
//! S_m(T) = 1/(T-m)   * sum_{t=0}^{T-m-1} x_t x_{t+m}^T
//!        - 1/(T-m-2) * sum_{t=0}^{T-m-3} x_t x_{t+m+2}^T
//! ```
//!
//! Sums start at the zero initial state `x_0`, and `T` counts stored states,
//! so the estimator never looks past row `T - 1`. Its expectation is
//! `sigma^2 A^m + h_m(T)` with `h_m` given by [`bias_h`].
//!
//! Under partial observation the same formula applied to the observed columns
//! yields the observed sub-block; [`partial_blocks`] turns lags 0..3 into
//! estimates of `sigma^2`, `B`, `C C^T` and `C E C^T`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::simulate::StateRows;
use crate::sysgen::SymmetricDynamics;

/// Smallest `sigma^2` estimate that downstream divisions accept.
pub const MIN_SIGMA2: f64 = 1e-12;

/// Number of stored states each partial block needs (`B`, `CC^T`, `CEC^T`).
pub const BLOCK_FLOORS: [usize; 3] = [6, 8, 10];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub order_m: usize,
    pub t_used: usize,
    pub s_hat: Matrix,
}

impl MomentEstimate {
    /// Average of the estimate with its transpose. The raw estimate is not
    /// symmetric at finite `T`.
    pub fn symmetrized(&self) -> MomentEstimate {
        MomentEstimate {
            s_hat: self.s_hat.symmetrized().expect("estimates are square"),
            ..self.clone()
        }
    }
}

/// Running sums `C_k = sum_t x_t x_{t+k}^T` over all pairs whose later index
/// is below the number of rows consumed.
///
/// Sums are prefix-structured in the trajectory, so a clone taken at `T`
/// can be advanced to any `T' > T` without revisiting old rows.
#[derive(Debug, Clone)]
pub struct LagSums {
    dim: usize,
    lags: Vec<usize>,
    sums: Vec<Matrix>,
    rows: usize,
}

impl LagSums {
    /// Tracks the given lags over the leading `dim` coordinates of each row.
    pub fn new(dim: usize, lags: &[usize]) -> Self {
        let mut lags = lags.to_vec();
        lags.sort_unstable();
        lags.dedup();
        LagSums {
            dim,
            sums: vec![Matrix::zeros(dim, dim); lags.len()],
            lags,
            rows: 0,
        }
    }

    /// All lags needed for `S_0..S_{max_order}`.
    pub fn for_orders(dim: usize, max_order: usize) -> Self {
        let lags: Vec<usize> = (0..=max_order + 2).collect();
        LagSums::new(dim, &lags)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rows consumed so far; this is the `T` of every estimate built from
    /// these sums.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn advance<S: StateRows + ?Sized>(&mut self, src: &S, to_rows: usize) {
        assert!(to_rows <= src.num_rows(), "not enough rows in source");
        let d = self.dim;
        for r in self.rows..to_rows {
            let cur = &src.state(r)[..d];
            for (slot, &k) in self.lags.iter().enumerate() {
                if r < k {
                    continue;
                }
                let prev = &src.state(r - k)[..d];
                let sum = &mut self.sums[slot];
                for (i, &p) in prev.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (s, c) in sum.row_mut(i).iter_mut().zip(cur) {
                        *s += p * c;
                    }
                }
            }
        }
        self.rows = self.rows.max(to_rows);
    }

    pub fn sum(&self, lag: usize) -> Option<&Matrix> {
        self.lags
            .iter()
            .position(|&k| k == lag)
            .map(|i| &self.sums[i])
    }

    /// Diagonal-only view of `S_m`, used for the variance estimate.
    fn s_hat_trace(&self, m: usize) -> Result<f64> {
        let (near, far) = self.weights(m)?;
        let c_m = self.sum(m).expect("checked by weights");
        let c_far = self.sum(m + 2).expect("checked by weights");
        Ok(near * c_m.trace() - far * c_far.trace())
    }

    fn weights(&self, m: usize) -> Result<(f64, f64)> {
        if self.sum(m).is_none() || self.sum(m + 2).is_none() {
            return Err(Error::invalid(format!(
                "lags {m} and {} are not tracked",
                m + 2
            )));
        }
        let t = self.rows;
        if t < m + 3 {
            return Err(Error::InsufficientData {
                required: m + 3,
                got: t,
            });
        }
        Ok((1.0 / (t - m) as f64, 1.0 / (t - m - 2) as f64))
    }

    pub fn s_hat(&self, m: usize) -> Result<MomentEstimate> {
        let (near, far) = self.weights(m)?;
        let c_m = self.sum(m).expect("checked by weights");
        let c_far = self.sum(m + 2).expect("checked by weights");
        let s_hat = c_m
            .scale(near)
            .sub(&c_far.scale(far))
            .expect("sums share a shape");
        Ok(MomentEstimate {
            order_m: m,
            t_used: self.rows,
            s_hat,
        })
    }

    /// `Tr(S_0) / dim`.
    pub fn sigma2_hat(&self) -> Result<f64> {
        Ok(self.s_hat_trace(0)? / self.dim as f64)
    }

    /// `S_1 / sigma2_hat`, the full-observation estimate of `A`.
    pub fn a_hat(&self) -> Result<Matrix> {
        let s2 = self.sigma2_hat()?;
        if !(s2 > MIN_SIGMA2) {
            return Err(Error::DegenerateVariance(s2));
        }
        Ok(self.s_hat(1)?.s_hat.scale(1.0 / s2))
    }

    pub fn partial_blocks(&self) -> Result<PartialBlockEstimates> {
        let t = self.rows;
        if t < BLOCK_FLOORS[0] {
            return Err(Error::InsufficientData {
                required: BLOCK_FLOORS[0],
                got: t,
            });
        }
        let sigma2_hat = self.sigma2_hat()?;
        if !(sigma2_hat > MIN_SIGMA2) {
            return Err(Error::DegenerateVariance(sigma2_hat));
        }
        let inv = 1.0 / sigma2_hat;
        let b_hat = self.s_hat(1)?.s_hat.scale(inv);
        let b2 = b_hat.matmul(&b_hat)?;

        let cct_hat = if t >= BLOCK_FLOORS[1] {
            Some(self.s_hat(2)?.s_hat.scale(inv).sub(&b2)?)
        } else {
            None
        };
        let cect_hat = match &cct_hat {
            Some(cct) if t >= BLOCK_FLOORS[2] => {
                let b3 = b2.matmul(&b_hat)?;
                let est = self
                    .s_hat(3)?
                    .s_hat
                    .scale(inv)
                    .sub(&b3)?
                    .sub(&cct.matmul(&b_hat)?)?
                    .sub(&b_hat.matmul(cct)?)?;
                Some(est)
            }
            _ => None,
        };
        Ok(PartialBlockEstimates {
            t_used: t,
            sigma2_hat,
            b_hat,
            cct_hat,
            cect_hat,
        })
    }
}

/// Lag-`m` estimate from every row of `states`.
pub fn s_hat(states: &Matrix, m: usize) -> Result<MomentEstimate> {
    let t = states.rows();
    if t < m + 3 {
        return Err(Error::InsufficientData {
            required: m + 3,
            got: t,
        });
    }
    let mut sums = LagSums::new(states.cols(), &[m, m + 2]);
    sums.advance(states, t);
    sums.s_hat(m)
}

/// Variance-normalized estimate `S_1 / (Tr(S_0)/N)` of the dynamics matrix.
pub fn estimate_a(states: &Matrix) -> Result<Matrix> {
    let mut sums = LagSums::for_orders(states.cols(), 1);
    sums.advance(states, states.rows());
    sums.a_hat()
}

/// Block estimates from observed coordinates. `CC^T` is absent below 8
/// stored states and `CEC^T` below 10.
#[derive(Debug, Clone, Serialize)]
pub struct PartialBlockEstimates {
    pub t_used: usize,
    pub sigma2_hat: f64,
    pub b_hat: Matrix,
    pub cct_hat: Option<Matrix>,
    pub cect_hat: Option<Matrix>,
}

pub fn partial_blocks(obs_states: &Matrix) -> Result<PartialBlockEstimates> {
    let mut sums = LagSums::for_orders(obs_states.cols(), 3);
    sums.advance(obs_states, obs_states.rows());
    sums.partial_blocks()
}

fn require_stable(d: &SymmetricDynamics) -> Result<()> {
    if d.rho() >= 1.0 {
        return Err(Error::invalid(format!(
            "spectral radius {} is not below 1",
            d.rho()
        )));
    }
    Ok(())
}

/// Bias `h_m(T) = E[S_m(T)] - sigma^2 A^m`, evaluated on the spectrum of `A`.
pub fn bias_h(d: &SymmetricDynamics, m: usize, t_len: usize) -> Result<Matrix> {
    require_stable(d)?;
    if t_len < m + 3 {
        return Err(Error::InsufficientData {
            required: m + 3,
            got: t_len,
        });
    }
    let s2 = d.sigma() * d.sigma();
    let near_len = (t_len - m) as f64;
    let far_len = (t_len - m - 2) as f64;
    let near_exp = 2 * (t_len - m) as i32;
    let far_exp = 2 * (t_len - m - 2) as i32;
    let m = m as i32;
    let spec = d.a().sym_eigen()?;
    Ok(spec.map(|l| {
        let denom = (1.0 - l * l).powi(2);
        let near = l.powi(m) * (l.powi(near_exp) - 1.0) / near_len;
        let far = l.powi(m + 2) * (l.powi(far_exp) - 1.0) / far_len;
        s2 * (near - far) / denom
    }))
}

/// `E[x_t x_s^T] = sigma^2 A^{s-t} (I - A^{2t}) (I - A^2)^{-1}` for `s >= t`.
pub fn expected_cov(d: &SymmetricDynamics, t: usize, s: usize) -> Result<Matrix> {
    require_stable(d)?;
    if s < t {
        return Err(Error::invalid(format!("need s >= t, got t={t}, s={s}")));
    }
    let n = d.n();
    let a = d.a();
    let eye = Matrix::identity(n);
    let a2 = a.matmul(a)?;
    let resolvent = eye.sub(&a2)?.solve_spd(&eye)?;
    let lag = a.pow((s - t) as u32)?;
    let transient = eye.sub(&a2.pow(t as u32)?)?;
    Ok(lag
        .matmul(&transient)?
        .matmul(&resolvent)?
        .scale(d.sigma() * d.sigma()))
}

/// A required trajectory length together with the accuracy it buys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleBound {
    pub epsilon: f64,
    pub delta: f64,
    pub t_required: usize,
}

fn check_common(delta: f64, sigma: f64, rho: f64, n: usize) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    Ok(())
}

/// `(1 + 2 sqrt(log(2 N^2 / delta)))^2 / (epsilon^2 (1 - rho)^4)`.
fn union_factor(epsilon: f64, delta: f64, rho: f64, n: usize) -> f64 {
    let n = n as f64;
    let tail = 1.0 + 2.0 * (2.0 * n * n / delta).ln().sqrt();
    tail * tail / (epsilon * epsilon * (1.0 - rho).powi(4))
}

fn ceil_to_usize(x: f64) -> usize {
    if x >= usize::MAX as f64 {
        usize::MAX
    } else {
        x.ceil() as usize
    }
}

/// Trajectory length after which `||S_m - sigma^2 A^m||_max <= epsilon` holds
/// with probability at least `1 - delta`.
pub fn sample_bound(
    epsilon: f64,
    delta: f64,
    sigma: f64,
    rho: f64,
    m: usize,
    n: usize,
) -> Result<SampleBound> {
    check_common(delta, sigma, rho, n)?;
    let upper = 4.0 * sigma * sigma / (1.0 - rho).powi(2);
    if !(epsilon > 0.0 && epsilon < upper) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, {upper}), got {epsilon}"
        )));
    }
    let first = 64.0 * sigma.powi(4) * union_factor(epsilon, delta, rho, n);
    Ok(SampleBound {
        epsilon,
        delta,
        t_required: ceil_to_usize(first).max(2 * (m + 2)),
    })
}

/// Required lengths for `sigma^2`/`B`, `C C^T` and `C E C^T` under partial
/// observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockBounds {
    pub t_b: usize,
    pub t_cct: usize,
    pub t_cect: usize,
}

pub fn block_sample_bounds(
    epsilon: f64,
    delta: f64,
    sigma: f64,
    rho: f64,
    n: usize,
) -> Result<BlockBounds> {
    check_common(delta, sigma, rho, n)?;
    let upper = sigma * sigma / 2.0;
    if !(epsilon > 0.0 && epsilon < upper) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, {upper}), got {epsilon}"
        )));
    }
    let kappa = (64.0 * sigma * sigma).max(32.0 * 32.0);
    let base = kappa * union_factor(epsilon, delta, rho, n);
    let nf = n as f64;
    Ok(BlockBounds {
        t_b: ceil_to_usize(base).max(BLOCK_FLOORS[0]),
        t_cct: ceil_to_usize(400.0 * nf * nf * base).max(BLOCK_FLOORS[1]),
        t_cect: ceil_to_usize(140.0 * 140.0 * nf.powi(4) * base).max(BLOCK_FLOORS[2]),
    })
}

/// Writes `i,j,value` rows for every entry.
pub fn write_matrix_csv<W: Write>(m: &Matrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "value"])?;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            w.write_record(&[
                i.to_string(),
                j.to_string(),
                format!("{:.16e}", m.get(i, j)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
