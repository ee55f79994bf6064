//! Dense algebraic constructions used to cross-check the fast estimators.
//!
//! Stack the states after the zero initial state as
//! `X = [x_1; x_2; ...; x_{T-1}]` (length `N (T-1)`). Then
//!
//! * `X = L Xi` with `L` block lower-triangular, block `(r, c) = A^{r-c}`,
//!   so `X ~ N(0, sigma^2 L L^T)`;
//! * each estimator entry is a quadratic form `[S_m(T)]_ij = X^T G_ij X`
//!   with `G_ij` symmetric and banded at block lags `m` and `m + 2`;
//! * the spectrum of `L^T G_ij L` is bounded by [`lambda_bar`].
//!
//! These matrices are quadratic in `N T`, so they are only built below
//! [`ORACLE_LIMIT`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::moments::{bias_h, expected_cov, s_hat};
use crate::simulate::rollout;
use crate::sysgen::{gen_random_stable, SymmetricDynamics};

/// Largest oracle matrix order.
pub const ORACLE_LIMIT: usize = 4096;

fn guard(size: usize) -> Result<()> {
    if size > ORACLE_LIMIT {
        return Err(Error::OracleScale {
            size,
            limit: ORACLE_LIMIT,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub l: Matrix,
    pub t_len: usize,
    pub n: usize,
}

impl StackedSystem {
    /// `L L^T`; times `sigma^2` this is the covariance of the stacked states.
    pub fn gram(&self) -> Matrix {
        self.l.matmul(&self.l.transpose()).expect("square")
    }
}

pub fn build_l(d: &SymmetricDynamics, t_len: usize) -> Result<StackedSystem> {
    if t_len < 2 {
        return Err(Error::invalid("stacked system needs t_len >= 2"));
    }
    let n = d.n();
    let blocks = t_len - 1;
    let size = n * blocks;
    guard(size)?;
    let mut powers = vec![Matrix::identity(n)];
    for k in 1..blocks {
        powers.push(powers[k - 1].matmul(d.a())?);
    }
    let mut l = Matrix::zeros(size, size);
    for r in 0..blocks {
        for c in 0..=r {
            let p = &powers[r - c];
            for i in 0..n {
                for j in 0..n {
                    l[(r * n + i, c * n + j)] = p.get(i, j);
                }
            }
        }
    }
    Ok(StackedSystem { l, t_len, n })
}

/// Quadratic-form matrix of entry `(i, j)` of the lag-`m` estimator.
///
/// Row `(b, k)` of `G` belongs to coordinate `k` of `x_{b+1}`; products with
/// the zero state `x_0` drop out, which is why the stack starts at `x_1`.
pub fn build_g(i: usize, j: usize, m: usize, t_len: usize, n: usize) -> Result<Matrix> {
    if i >= n || j >= n {
        return Err(Error::invalid(format!(
            "index ({i}, {j}) out of range for dimension {n}"
        )));
    }
    if t_len < m + 3 {
        return Err(Error::InsufficientData {
            required: m + 3,
            got: t_len,
        });
    }
    let size = n * (t_len - 1);
    guard(size)?;
    let c1 = 1.0 / (2.0 * (t_len - m) as f64);
    let c2 = 1.0 / (2.0 * (t_len - m - 2) as f64);
    let pos = |t: usize, k: usize| (t - 1) * n + k;
    let mut g = Matrix::zeros(size, size);
    for t in 1..(t_len - m) {
        let (p, q) = (pos(t, i), pos(t + m, j));
        g[(p, q)] += c1;
        g[(q, p)] += c1;
    }
    for t in 1..(t_len - m - 2) {
        let (p, q) = (pos(t, i), pos(t + m + 2, j));
        g[(p, q)] -= c2;
        g[(q, p)] -= c2;
    }
    Ok(g)
}

/// `(1/(T-m) + 1/(T-m-2)) / (1 - rho)^2`.
pub fn lambda_bar(rho: f64, m: usize, t_len: usize) -> Result<f64> {
    if t_len < m + 3 {
        return Err(Error::InsufficientData {
            required: m + 3,
            got: t_len,
        });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    let band = 1.0 / (t_len - m) as f64 + 1.0 / (t_len - m - 2) as f64;
    Ok(band / (1.0 - rho).powi(2))
}

/// Both sides of `-log det(I - H) = Tr(sum_{k>=1} H^k / k)`.
///
/// The left side comes from the eigenvalues of `H`, the right side from
/// `k_terms` explicit matrix powers.
pub fn logdet_trace_check(h: &Matrix, k_terms: usize) -> Result<(f64, f64)> {
    let spec = h.sym_eigen()?;
    if spec.radius() >= 1.0 {
        return Err(Error::invalid(format!(
            "all eigenvalues must be inside (-1, 1); spectral radius is {}",
            spec.radius()
        )));
    }
    let lhs = -spec.eigenvalues.iter().map(|l| (1.0 - l).ln()).sum::<f64>();
    let mut power = Matrix::identity(h.rows());
    let mut rhs = 0.0;
    for k in 1..=k_terms {
        power = power.matmul(h)?;
        rhs += power.trace() / k as f64;
    }
    Ok((lhs, rhs))
}

/// `2 exp(-epsilon^2 / (16 T lambda_bar^2 sigma^4))`, uncapped.
pub fn concentration_bound(
    epsilon: f64,
    sigma: f64,
    rho: f64,
    lambda_bar: f64,
    t_len: usize,
) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    let upper = 4.0 * sigma * sigma / (1.0 - rho).powi(2);
    if !(epsilon > 0.0 && epsilon < upper) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, {upper}), got {epsilon}"
        )));
    }
    let exponent = epsilon * epsilon / (16.0 * t_len as f64 * lambda_bar.powi(2) * sigma.powi(4));
    Ok(2.0 * (-exponent).exp())
}

/// `x_1..x_{T-1}` of a `T`-row state matrix, concatenated.
pub fn stack_states(states: &Matrix) -> Vec<f64> {
    states.as_slice()[states.cols()..].to_vec()
}

pub fn quadratic_form(g: &Matrix, x: &[f64]) -> f64 {
    (0..g.rows())
        .map(|p| x[p] * g.row(p).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Outcome of one identity in [`verify_suite`].
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Runs the algebraic identities on small random systems.
pub fn verify_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();

    // Quadratic representation of every estimator entry.
    let (n, t) = (3, 10);
    let d = gen_random_stable(n, 0.7, 2024)?;
    let states = rollout(&d, t - 1, 7)?.states().clone();
    let x = stack_states(&states);
    let mut worst = 0.0f64;
    for m in 0..4 {
        let est = s_hat(&states, m)?.s_hat;
        for i in 0..n {
            for j in 0..n {
                let g = build_g(i, j, m, t, n)?;
                let v = est.get(i, j);
                worst = worst.max((quadratic_form(&g, &x) - v).abs() / (1.0 + v.abs()));
            }
        }
    }
    out.push(check(
        "quadratic_form",
        worst <= 1e-10,
        format!("max relative gap {worst:e}"),
    ));

    // Spectral chain: rho(L^T G L) <= sigma_max(G) lambda_max(L L^T) <= lambda_bar.
    let (t, mut ok, mut detail) = (8, true, String::new());
    for seed in 0..5 {
        let d = gen_random_stable(n, 0.3 + 0.1 * seed as f64, 100 + seed)?;
        let stacked = build_l(&d, t)?;
        let ll = stacked.gram();
        let ll_max = ll.spectral_radius()?;
        let ll_cap = 1.0 / (1.0 - d.rho()).powi(2);
        ok &= ll_max <= ll_cap + 1e-10;
        for m in 0..2 {
            let bar = lambda_bar(d.rho(), m, t)?;
            let band = 1.0 / (t - m) as f64 + 1.0 / (t - m - 2) as f64;
            for i in 0..n {
                for j in 0..n {
                    let g = build_g(i, j, m, t, n)?;
                    let g_rad = g.spectral_radius()?;
                    let prod = stacked.l.transpose().matmul(&g)?.matmul(&stacked.l)?;
                    let rad = prod.spectral_radius()?;
                    if g_rad > band + 1e-10 || rad > bar + 1e-10 {
                        ok = false;
                        detail = format!("seed {seed} m {m} ({i},{j}): {rad} vs {bar}");
                    }
                }
            }
        }
    }
    out.push(check("spectral_bound", ok, detail));

    // Log-determinant series.
    let h = gen_random_stable(6, 0.5, 77)?;
    let (lhs, rhs) = logdet_trace_check(h.a(), 80)?;
    out.push(check(
        "logdet_trace",
        (lhs - rhs).abs() <= 1e-10,
        format!("lhs {lhs} rhs {rhs}"),
    ));

    // Closed-form bias against term-by-term covariance sums.
    let d = gen_random_stable(4, 0.8, 5)?;
    let (m, t) = (1, 25);
    let closed = d.a().pow(m as u32)?.add(&bias_h(&d, m, t)?)?;
    let mut summed = Matrix::zeros(4, 4);
    for s in 0..t - m {
        summed = summed.add(&expected_cov(&d, s, s + m)?.scale(1.0 / (t - m) as f64))?;
    }
    for s in 0..t - m - 2 {
        summed = summed.sub(&expected_cov(&d, s, s + m + 2)?.scale(1.0 / (t - m - 2) as f64))?;
    }
    let gap = closed.sub(&summed)?.max_norm();
    out.push(check(
        "bias_formula",
        gap <= 1e-10,
        format!("max gap {gap:e}"),
    ));

    // E[X^T G X] = sigma^2 Tr(L^T G L) reproduces the expected estimator.
    let stacked = build_l(&d, t)?;
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let g = build_g(i, j, m, t, 4)?;
            let tr = stacked
                .l
                .transpose()
                .matmul(&g)?
                .matmul(&stacked.l)?
                .trace();
            worst = worst.max((tr - closed.get(i, j)).abs());
        }
    }
    out.push(check(
        "trace_expectation",
        worst <= 1e-10,
        format!("max gap {worst:e}"),
    ));

    Ok(out)
}
