//! Minimal-trajectory-length sweeps over system size.
//!
//! For every `N` and trial seed the harness finds the shortest trajectory on
//! which an estimator reaches the error threshold, takes the maximum over
//! trials, and fits `T ~ a + b f(N)` for `f` in `{log N, N, N log N}`.

mod config;
mod fit;
mod report;
mod search;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub use config::{ExperimentConfig, Family, Method, Mode, Target, DEFAULT_T_CAP};
pub use fit::{better, fit_curve, fit_line, Curve, Fit};
pub use report::{
    fit_report_json, write_reports, write_scaling_csv, write_summary_csv, FIT_JSON, SCALING_CSV,
    SUMMARY_CSV,
};
pub use search::{
    build_problem, error_metric, min_t_single_trial, search_min_t, Problem, SEARCH_START,
};

/// Environment variable limiting the number of worker threads.
pub const THREADS_ENV: &str = "LDSM_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_seed: u64,
    /// `None` when the trial hit the length cap.
    pub min_t: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NRecord {
    pub n: usize,
    pub trials: Vec<TrialRecord>,
    /// Maximum over trials; `None` if any trial was capped.
    pub max_min_t: Option<usize>,
}

impl NRecord {
    fn new(n: usize, trials: Vec<TrialRecord>) -> Self {
        let max_min_t = trials
            .iter()
            .map(|t| t.min_t)
            .collect::<Option<Vec<_>>>()
            .and_then(|v| v.into_iter().max());
        NRecord {
            n,
            trials,
            max_min_t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRun {
    pub config: ExperimentConfig,
    pub records: Vec<NRecord>,
    pub fit_log: Fit,
    pub fit_linear: Fit,
    pub fit_nlogn: Fit,
    pub excluded_n: Vec<usize>,
}

impl ScalingRun {
    /// Fits every curve family to the uncapped records.
    pub fn from_records(config: ExperimentConfig, records: Vec<NRecord>) -> Self {
        let (mut ns, mut ts, mut excluded_n) = (Vec::new(), Vec::new(), Vec::new());
        for rec in &records {
            match rec.max_min_t {
                Some(t) => {
                    ns.push(rec.n);
                    ts.push(t as f64);
                }
                None => excluded_n.push(rec.n),
            }
        }
        ScalingRun {
            fit_log: fit_curve(Curve::Log, &ns, &ts),
            fit_linear: fit_curve(Curve::Linear, &ns, &ts),
            fit_nlogn: fit_curve(Curve::NLogN, &ns, &ts),
            config,
            records,
            excluded_n,
        }
    }

    pub fn fit(&self, curve: Curve) -> &Fit {
        match curve {
            Curve::Log => &self.fit_log,
            Curve::Linear => &self.fit_linear,
            Curve::NLogN => &self.fit_nlogn,
        }
    }

    pub fn max_min_t(&self) -> Vec<(usize, Option<usize>)> {
        self.records.iter().map(|r| (r.n, r.max_min_t)).collect()
    }
}

/// Worker count from [`THREADS_ENV`], else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |k| k.get()))
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ScalingRun> {
    cfg.validate()?;
    let problems = cfg
        .n_values
        .iter()
        .map(|&n| search::build_problem(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..problems.len())
        .flat_map(|i| (0..cfg.trials as u64).map(move |k| (i, cfg.delta_seed.wrapping_add(k))))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    // `collect` keeps job order, so the output never depends on scheduling.
    let outcomes: Vec<Result<TrialRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let min_t = match search::search_min_t(cfg, &problems[i], seed) {
                    Ok(t) => Some(t),
                    Err(Error::CapExceeded { .. }) => None,
                    Err(e) => return Err(e),
                };
                Ok(TrialRecord {
                    trial_seed: seed,
                    min_t,
                })
            })
            .collect()
    });

    let mut outcomes = outcomes.into_iter();
    let mut records = Vec::with_capacity(problems.len());
    for &n in &cfg.n_values {
        let trials = outcomes
            .by_ref()
            .take(cfg.trials)
            .collect::<Result<Vec<_>>>()?;
        records.push(NRecord::new(n, trials));
    }
    Ok(ScalingRun::from_records(cfg.clone(), records))
}
