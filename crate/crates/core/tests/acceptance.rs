//! Acceptance suite. Each test prints one `[PASS]`/`[FAIL]` line per
//! criterion before asserting, so `cargo test --test acceptance -- --nocapture`
//! gives a full report even when a criterion fails.

use std::path::Path;
use std::time::Instant;

use ldsm_core::harness::{
    better, run_sweep, write_reports, Curve, ExperimentConfig, Family, Method, Mode, ScalingRun,
    Target,
};
use ldsm_core::moments::{bias_h, partial_blocks, s_hat, sample_bound, LagSums};
use ldsm_core::oracles::{
    build_g, build_l, lambda_bar, logdet_trace_check, quadratic_form, stack_states,
};
use ldsm_core::simulate::{rollout, Simulator};
use ldsm_core::sysgen::{gen_random_stable, partition};
use ldsm_core::Matrix;

fn report(id: u32, name: &str, pass: bool, detail: impl AsRef<str>, started: Instant) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!(
        "[{tag}] criterion {id:>2} {name}: {} ({:.1?})",
        detail.as_ref(),
        started.elapsed()
    );
}

/// Entrywise running mean and standard error.
struct MeanAcc {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: usize,
}

impl MeanAcc {
    fn new(len: usize) -> Self {
        MeanAcc {
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
            count: 0,
        }
    }

    fn push(&mut self, xs: impl IntoIterator<Item = f64>) {
        for ((s, q), x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(xs) {
            *s += x;
            *q += x * x;
        }
        self.count += 1;
    }

    /// Largest `|mean - expected| / se` over all entries.
    fn worst_z(&self, expected: &[f64]) -> f64 {
        let n = self.count as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .zip(expected)
            .map(|((s, q), e)| {
                let mean = s / n;
                let var = (q / n - mean * mean) * n / (n - 1.0);
                (mean - e).abs() / (var / n).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[test]
fn criterion_01_quadratic_form_equivalence() {
    let started = Instant::now();
    let (n, t) = (3, 10);
    let d = gen_random_stable(n, 0.8, 101).unwrap();
    let states = rollout(&d, t - 1, 202).unwrap().states().clone();
    let x = stack_states(&states);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_gap = 0.0f64;
    for m in 0..4 {
        let est = s_hat(&states, m).unwrap().s_hat;
        for i in 0..n {
            for j in 0..n {
                let q = quadratic_form(&build_g(i, j, m, t, n).unwrap(), &x);
                let v = est.get(i, j);
                let gap = (q - v).abs();
                worst_gap = worst_gap.max(gap);
                worst_excess = worst_excess.max(gap - 1e-10 * (1.0 + v.abs()));
            }
        }
    }
    let pass = worst_excess <= 0.0;
    report(
        1,
        "quadratic-form equivalence",
        pass,
        format!("max |gap| {worst_gap:.2e}"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_02_trajectory_law() {
    let started = Instant::now();
    let (n, t, reps) = (3, 6, 5000);
    let d = gen_random_stable(n, 0.5, 303).unwrap();
    let ll = build_l(&d, t).unwrap().gram();
    let size = ll.rows();
    let mut acc = MeanAcc::new(size * size);
    for r in 0..reps {
        let x = stack_states(rollout(&d, t - 1, 10_000 + r).unwrap().states());
        acc.push((0..size * size).map(|k| x[k / size] * x[k % size]));
    }
    let z = acc.worst_z(ll.as_slice());
    let pass = z <= 5.0;
    report(
        2,
        "stacked covariance vs sigma^2 L L^T",
        pass,
        format!("worst |z| {z:.2} over {} entries", size * size),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_03_bias_formula() {
    let started = Instant::now();
    let (n, t, trials) = (4, 200, 500);
    let d = gen_random_stable(n, 0.6, 404).unwrap();
    let h = bias_h(&d, 1, t).unwrap();
    let expected = d.a().add(&h).unwrap();
    let mut acc = MeanAcc::new(n * n);
    for k in 0..trials {
        let s = s_hat(rollout(&d, t - 1, 20_000 + k).unwrap().states(), 1)
            .unwrap()
            .s_hat;
        acc.push(s.as_slice().iter().copied());
    }
    let z = acc.worst_z(expected.as_slice());
    let z_no_bias = acc.worst_z(d.a().as_slice());
    let ratio = bias_h(&d, 1, 800).unwrap().max_norm() / bias_h(&d, 1, 400).unwrap().max_norm();
    let pass = z <= 5.0 && (0.4..=0.6).contains(&ratio);
    report(
        3,
        "bias formula",
        pass,
        format!("worst |z| {z:.2} (without h: {z_no_bias:.2}), h ratio {ratio:.4}"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_04_spectral_bound() {
    let started = Instant::now();
    let t = 8;
    let slack = 1e-10;
    let (mut worst_prod, mut worst_g, mut worst_ll) =
        (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in 0..20u64 {
        let rho = 0.05 + 0.045 * s as f64;
        let d = gen_random_stable(3, rho, 500 + s).unwrap();
        let stacked = build_l(&d, t).unwrap();
        let lt = stacked.l.transpose();
        let ll_max = stacked.gram().spectral_radius().unwrap();
        worst_ll = worst_ll.max(ll_max - 1.0 / (1.0 - d.rho()).powi(2));
        for m in 0..2 {
            let bar = lambda_bar(d.rho(), m, t).unwrap();
            let band = 1.0 / (t - m) as f64 + 1.0 / (t - m - 2) as f64;
            for i in 0..3 {
                for j in 0..3 {
                    let g = build_g(i, j, m, t, 3).unwrap();
                    worst_g = worst_g.max(g.spectral_radius().unwrap() - band);
                    let prod = lt.matmul(&g).unwrap().matmul(&stacked.l).unwrap();
                    worst_prod = worst_prod.max(prod.spectral_radius().unwrap() - bar);
                }
            }
        }
    }
    let pass = worst_prod <= slack && worst_g <= slack && worst_ll <= slack;
    report(
        4,
        "spectral bound chain",
        pass,
        format!("max excess: L^T G L {worst_prod:.3e}, G {worst_g:.3e}, L L^T {worst_ll:.3e}"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_05_logdet_trace_identity() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for s in 0..5u64 {
        let h = gen_random_stable(6, 0.5, 600 + s).unwrap();
        let (lhs, rhs) = logdet_trace_check(h.a(), 80).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    let pass = worst <= 1e-10;
    report(
        5,
        "log-det trace identity",
        pass,
        format!("max gap {worst:.2e}"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_06_concentration() {
    let started = Instant::now();
    let bound = sample_bound(0.5, 0.1, 1.0, 0.5, 1, 3).unwrap();
    let t = bound.t_required;
    let d = gen_random_stable(3, 0.5, 707).unwrap();
    let trials = 200;
    let failures = (0..trials)
        .filter(|&k| {
            let mut sim = Simulator::new(&d, 30_000 + k);
            let mut sums = LagSums::for_orders(3, 1);
            sim.extend_to(t);
            sums.advance(&sim, t);
            sums.s_hat(1).unwrap().s_hat.sub(d.a()).unwrap().max_norm() > 0.5
        })
        .count();
    let freq = failures as f64 / trials as f64;
    let limit = 0.1 + 3.0 * (0.1f64 * 0.9 / 200.0).sqrt();
    let pass = freq <= limit;
    report(
        6,
        "concentration at the sample bound",
        pass,
        format!("T = {t}, failure frequency {freq:.3} (limit {limit:.3})"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_07_block_recovery() {
    let started = Instant::now();
    let d = gen_random_stable(8, 0.6, 808)
        .unwrap()
        .with_n_obs(4)
        .unwrap();
    let blocks = partition(&d).unwrap();
    let t = 1_000_000;
    let mut sim = Simulator::new(&d, 31);
    let mut sums = LagSums::for_orders(4, 3);
    let chunk = 50_000;
    let mut rows = 0;
    while rows < t {
        rows = (rows + chunk).min(t);
        sim.extend_to(rows);
        sums.advance(&sim, rows);
        sim.forget_before(rows - 5);
    }
    let est = sums.partial_blocks().unwrap();
    let b_err = est.b_hat.sub(&blocks.b).unwrap().max_norm();
    let cct_err = est.cct_hat.unwrap().sub(&blocks.cct()).unwrap().max_norm();
    let pass = b_err <= 0.05 && cct_err <= 0.2;
    report(
        7,
        "partial-observation block recovery",
        pass,
        format!("B error {b_err:.4}, CC^T error {cct_err:.4}"),
        started,
    );
    assert!(pass);

    // The streaming route agrees with the batch estimator on a prefix.
    let short = rollout(&d, 4_999, 31).unwrap().observed_view();
    let mut s = LagSums::for_orders(4, 3);
    let mut sim = Simulator::new(&d, 31);
    sim.extend_to(5_000);
    s.advance(&sim, 5_000);
    let gap = s
        .partial_blocks()
        .unwrap()
        .b_hat
        .sub(&partial_blocks(&short).unwrap().b_hat)
        .unwrap()
        .max_norm();
    assert!(gap < 1e-12);
}

fn scaling_line(label: &str, run: &ScalingRun) -> String {
    let r2 = |c| {
        run.fit(c)
            .r2
            .map_or("undefined".to_string(), |v| format!("{v:.3}"))
    };
    format!(
        "{label} max min-T {:?}, r2 log {} linear {} nlogn {}",
        run.max_min_t()
            .iter()
            .map(|(_, t)| t.unwrap_or(0))
            .collect::<Vec<_>>(),
        r2(Curve::Log),
        r2(Curve::Linear),
        r2(Curve::NLogN)
    )
}

const FIGURE1_RUNS: [(Family, Method); 5] = [
    (Family::Sparse2Regular, Method::Moments),
    (Family::Sparse2Regular, Method::Lasso),
    (Family::Sparse2Regular, Method::Ols),
    (Family::DenseStar, Method::Moments),
    (Family::DenseStar, Method::Ols),
];

fn figure1_sweeps(out: &Path) -> Vec<(Family, Method, ScalingRun)> {
    FIGURE1_RUNS
        .iter()
        .map(|&(family, method)| {
            let run = run_sweep(&ExperimentConfig::desk(family, method)).unwrap();
            write_reports(&run, &out.join(format!("{family}_{method}"))).unwrap();
            (family, method, run)
        })
        .collect()
}

#[test]
fn criteria_08_and_10_full_observation_scaling_and_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let runs = figure1_sweeps(&dir.path().join("first"));

    let mut pass8 = true;
    for (family, method, run) in &runs {
        let log = run.fit(Curve::Log);
        let linear = run.fit(Curve::Linear);
        let ok = match method {
            Method::Ols => better(linear, log),
            _ => better(log, linear),
        };
        pass8 &= ok;
        println!("    {}", scaling_line(&format!("{family}/{method}:"), run));
    }
    report(
        8,
        "full-observation scaling",
        pass8,
        "see fits above",
        started,
    );

    let started = Instant::now();
    figure1_sweeps(&dir.path().join("second"));
    let mut identical = true;
    let mut compared = 0;
    for (family, method) in FIGURE1_RUNS {
        let sub = format!("{family}_{method}");
        for file in ["scaling.csv", "scaling_summary.csv"] {
            let a = std::fs::read(dir.path().join("first").join(&sub).join(file)).unwrap();
            let b = std::fs::read(dir.path().join("second").join(&sub).join(file)).unwrap();
            identical &= a == b;
            compared += 1;
        }
    }
    report(
        10,
        "determinism",
        identical,
        format!("{compared} CSV files compared"),
        started,
    );
    assert!(pass8, "criterion 8 failed");
    assert!(identical, "criterion 10 failed");
}

#[test]
fn criterion_09_partial_observation_scaling() {
    let started = Instant::now();
    let sweep = |target| {
        run_sweep(&ExperimentConfig {
            mode: Mode::Partial,
            target,
            n_values: vec![32, 64, 128, 256],
            ..ExperimentConfig::desk(Family::Sparse2Regular, Method::Moments)
        })
        .unwrap()
    };
    let b = sweep(Target::B);
    let cct = sweep(Target::Cct);
    let b_ok = better(b.fit(Curve::Log), b.fit(Curve::Linear));
    let cct_ok = better(cct.fit(Curve::NLogN), cct.fit(Curve::Log))
        || better(cct.fit(Curve::Linear), cct.fit(Curve::Log));
    println!("    {}", scaling_line("B:", &b));
    println!("    {}", scaling_line("CCT:", &cct));
    report(
        9,
        "partial-observation scaling",
        b_ok && cct_ok,
        format!("B log-over-linear {b_ok}, CCT superlogarithmic {cct_ok}"),
        started,
    );
    assert!(b_ok, "B does not fit log better than linear");
    assert!(cct_ok, "CCT does not grow faster than log N");
}

#[test]
fn streaming_matches_batch_for_bias_estimate() {
    // Sanity link between the two estimator routes used above.
    let d = gen_random_stable(4, 0.6, 404).unwrap();
    let states = rollout(&d, 199, 20_000).unwrap().states().clone();
    let mut sums = LagSums::for_orders(4, 1);
    sums.advance(&states, 200);
    let a: Matrix = sums.s_hat(1).unwrap().s_hat;
    assert!(a.sub(&s_hat(&states, 1).unwrap().s_hat).unwrap().max_norm() < 1e-13);
}
