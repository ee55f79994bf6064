//! Trajectory rollout of `x_t = A x_{t-1} + xi_{t-1}` from `x_0 = 0`.
//!
//! Noise is drawn step by step from a seeded ChaCha stream, so a longer
//! rollout with the same seed extends a shorter one exactly. The scaling
//! harness relies on this to evaluate estimators on nested data.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sysgen::SymmetricDynamics;

/// States `x_0..x_T` stored as the rows of a `(T+1) x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Matrix,
    sigma: f64,
    n_obs: usize,
    seed: u64,
}

impl Trajectory {
    pub fn states(&self) -> &Matrix {
        &self.states
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of transitions `T`; there are `T + 1` stored states.
    pub fn t_len(&self) -> usize {
        self.states.rows() - 1
    }

    /// Columns of the observed coordinates.
    pub fn observed_view(&self) -> Matrix {
        if self.n_obs == self.states.cols() {
            self.states.clone()
        } else {
            self.states.leading_columns(self.n_obs)
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_states_csv(&self.states, out)
    }
}

/// Anything that hands out state rows `x_t` in time order.
pub trait StateRows {
    fn num_rows(&self) -> usize;
    fn state(&self, t: usize) -> &[f64];
}

impl StateRows for Matrix {
    fn num_rows(&self) -> usize {
        self.rows()
    }

    fn state(&self, t: usize) -> &[f64] {
        self.row(t)
    }
}

/// Incremental simulator. Rows are appended on demand and never change once
/// produced.
pub struct Simulator {
    n: usize,
    sigma: f64,
    // Nonzero pattern of A per row; the star and 2-regular families are sparse.
    row_entries: Vec<Vec<(usize, f64)>>,
    rng: ChaCha8Rng,
    // Rows before `base` have been released by `forget_before`.
    base: usize,
    data: Vec<f64>,
}

impl Simulator {
    pub fn new(d: &SymmetricDynamics, seed: u64) -> Self {
        let n = d.n();
        let a = d.a();
        let row_entries = (0..n)
            .map(|i| {
                a.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Simulator {
            n,
            sigma: d.sigma(),
            row_entries,
            rng: ChaCha8Rng::seed_from_u64(seed),
            base: 0,
            data: vec![0.0; n],
        }
    }

    /// Number of states produced so far (including `x_0`).
    pub fn len(&self) -> usize {
        self.base + self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Panics if `t` was released by [`Simulator::forget_before`].
    pub fn row(&self, t: usize) -> &[f64] {
        assert!(t >= self.base, "row {t} was released");
        let r = t - self.base;
        &self.data[r * self.n..(r + 1) * self.n]
    }

    /// First row still held in memory.
    pub fn first_held(&self) -> usize {
        self.base
    }

    /// Releases rows before `t`. The latest row is always kept so the
    /// recursion can continue.
    pub fn forget_before(&mut self, t: usize) {
        let t = t.min(self.len() - 1);
        if t > self.base {
            self.data.drain(..(t - self.base) * self.n);
            self.base = t;
        }
    }

    /// Grows the trajectory until it holds `rows` states.
    pub fn extend_to(&mut self, rows: usize) {
        let n = self.n;
        self.data.reserve(rows.saturating_sub(self.len()) * n);
        while self.len() < rows {
            let prev_start = self.data.len() - n;
            for i in 0..n {
                let drift: f64 = self.row_entries[i]
                    .iter()
                    .map(|&(j, a)| a * self.data[prev_start + j])
                    .sum();
                let z: f64 = StandardNormal.sample(&mut self.rng);
                self.data.push(drift + self.sigma * z);
            }
        }
    }

    /// Copies the first `rows` states into a matrix.
    ///
    /// Panics if any row has been released.
    pub fn states(&self, rows: usize) -> Matrix {
        assert_eq!(self.base, 0, "early rows were released");
        let rows = rows.min(self.len());
        Matrix::from_vec(rows, self.n, self.data[..rows * self.n].to_vec())
            .expect("simulated states are finite")
    }
}

impl StateRows for Simulator {
    fn num_rows(&self) -> usize {
        self.len()
    }

    fn state(&self, t: usize) -> &[f64] {
        self.row(t)
    }
}

pub fn rollout(d: &SymmetricDynamics, t_len: usize, seed: u64) -> Result<Trajectory> {
    if t_len < 1 {
        return Err(Error::invalid("trajectory length must be at least 1"));
    }
    let mut sim = Simulator::new(d, seed);
    sim.extend_to(t_len + 1);
    Ok(Trajectory {
        states: sim.states(t_len + 1),
        sigma: d.sigma(),
        n_obs: d.n_obs(),
        seed,
    })
}

/// Writes `t,x0,x1,...` with 17 significant digits per value.
pub fn write_states_csv<W: Write>(states: &Matrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..states.cols()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for t in 0..states.rows() {
        let mut rec = vec![t.to_string()];
        rec.extend(states.row(t).iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV produced by [`write_states_csv`].
pub fn read_states_csv<R: Read>(input: R) -> Result<Matrix> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(Error::invalid(
            "trajectory CSV must start with a `t` column",
        ));
    }
    let cols = headers.len() - 1;
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad number `{field}` on row {rows}")))?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysgen::gen_random_stable;

    fn zero_dynamics(n: usize, sigma: f64) -> SymmetricDynamics {
        SymmetricDynamics::new(Matrix::zeros(n, n), sigma, n).unwrap()
    }

    #[test]
    fn first_state_is_zero_and_shape() {
        let d = gen_random_stable(4, 0.5, 0).unwrap();
        let traj = rollout(&d, 10, 1).unwrap();
        assert_eq!(traj.states().shape(), (11, 4));
        assert!(traj.states().row(0).iter().all(|&v| v == 0.0));
        assert!(rollout(&d, 0, 1).is_err());
    }

    #[test]
    fn noiseless_stays_at_zero() {
        let d = gen_random_stable(3, 0.9, 0)
            .unwrap()
            .with_sigma(0.0)
            .unwrap();
        assert_eq!(rollout(&d, 50, 2).unwrap().states().max_norm(), 0.0);
    }

    #[test]
    fn recursion_holds() {
        // The noise stream does not depend on A, so a rollout of A = 0 with
        // the same seed exposes xi_{t-1} directly.
        let d = gen_random_stable(3, 0.8, 5).unwrap();
        let traj = rollout(&d, 20, 3).unwrap();
        let s = traj.states();
        let zero = zero_dynamics(3, 1.0);
        let noise = rollout(&zero, 20, 3).unwrap();
        for t in 1..=20 {
            for i in 0..3 {
                let drift: f64 = (0..3).map(|j| d.a().get(i, j) * s.get(t - 1, j)).sum();
                let xi = noise.states().get(t, i);
                assert!((s.get(t, i) - drift - xi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prefix_consistent_and_deterministic() {
        let d = gen_random_stable(5, 0.6, 9).unwrap();
        let short = rollout(&d, 30, 77).unwrap();
        let long = rollout(&d, 100, 77).unwrap();
        assert_eq!(&long.states().leading_rows(31), short.states());
        assert_eq!(long, rollout(&d, 100, 77).unwrap());
        assert_ne!(long, rollout(&d, 100, 78).unwrap());
    }

    #[test]
    fn forgetting_rows_keeps_the_stream() {
        let d = gen_random_stable(3, 0.6, 2).unwrap();
        let full = rollout(&d, 60, 5).unwrap();
        let mut sim = Simulator::new(&d, 5);
        sim.extend_to(20);
        sim.forget_before(15);
        assert_eq!(sim.first_held(), 15);
        sim.extend_to(61);
        sim.forget_before(1000);
        assert_eq!(sim.first_held(), 60);
        assert_eq!(sim.len(), 61);
        assert_eq!(sim.row(60), full.states().row(60));
    }

    #[test]
    fn observed_view_slices_columns() {
        let d = gen_random_stable(4, 0.5, 1).unwrap();
        let full = rollout(&d, 8, 4).unwrap();
        assert_eq!(&full.observed_view(), full.states());
        let part = rollout(&d.clone().with_n_obs(1).unwrap(), 8, 4).unwrap();
        let view = part.observed_view();
        assert_eq!(view.shape(), (9, 1));
        for t in 0..9 {
            assert_eq!(view.get(t, 0), full.states().get(t, 0));
        }
    }

    #[test]
    fn zero_dynamics_are_white_gaussian() {
        // 10^5 samples: variance near 1, kurtosis near 3, lag-1 correlation near 0.
        let d = zero_dynamics(1, 1.0);
        let traj = rollout(&d, 100_000, 12).unwrap();
        let xs: Vec<f64> = (1..=100_000).map(|t| traj.states().get(t, 0)).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let kurt = m4 / (m2 * m2);
        assert!((2.8..=3.2).contains(&kurt), "kurtosis {kurt}");
        assert!((m2 - 1.0).abs() < 0.02);
        let lag1 = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        assert!(lag1.abs() < 5.0 / n.sqrt());
    }

    #[test]
    fn stationary_covariance_matches_closed_form() {
        // Cov(x_20) = sigma^2 (I - A^40)(I - A^2)^{-1}.
        let d = gen_random_stable(3, 0.5, 21).unwrap();
        let a2 = d.a().matmul(d.a()).unwrap();
        let i3 = Matrix::identity(3);
        let inv = i3.sub(&a2).unwrap().solve_spd(&i3).unwrap();
        let expected = i3
            .sub(&d.a().pow(40).unwrap())
            .unwrap()
            .matmul(&inv)
            .unwrap();

        let reps = 10_000;
        let mut sum = Matrix::zeros(3, 3);
        let mut sum_sq = Matrix::zeros(3, 3);
        for r in 0..reps {
            let x = rollout(&d, 20, 1000 + r).unwrap().states().row(20).to_vec();
            for i in 0..3 {
                for j in 0..3 {
                    let p = x[i] * x[j];
                    sum[(i, j)] += p;
                    sum_sq[(i, j)] += p * p;
                }
            }
        }
        let n = reps as f64;
        for i in 0..3 {
            for j in 0..3 {
                let mean = sum.get(i, j) / n;
                let var = sum_sq.get(i, j) / n - mean * mean;
                let se = (var / n).sqrt();
                assert!(
                    (mean - expected.get(i, j)).abs() <= 5.0 * se,
                    "({i},{j}): {mean} vs {}",
                    expected.get(i, j)
                );
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = gen_random_stable(3, 0.7, 2).unwrap();
        let traj = rollout(&d, 25, 8).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x0,x1,x2\n"));
        let back = read_states_csv(buf.as_slice()).unwrap();
        assert_eq!(&back, traj.states());
    }
}
