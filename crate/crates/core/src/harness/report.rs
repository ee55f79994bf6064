use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::fit::Fit;
use super::ScalingRun;

pub const SCALING_CSV: &str = "scaling.csv";
pub const SUMMARY_CSV: &str = "scaling_summary.csv";
pub const FIT_JSON: &str = "scaling_fit.json";

/// One row per trial; `min_t` is empty for capped trials.
pub fn write_scaling_csv<W: Write>(run: &ScalingRun, out: W) -> Result<()> {
    let cfg = &run.config;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "family",
        "method",
        "mode",
        "target",
        "n",
        "trial_seed",
        "min_t",
        "capped",
    ])?;
    for rec in &run.records {
        for trial in &rec.trials {
            w.write_record([
                cfg.family.to_string(),
                cfg.method.to_string(),
                cfg.mode.to_string(),
                cfg.target.to_string(),
                rec.n.to_string(),
                trial.trial_seed.to_string(),
                trial.min_t.map(|t| t.to_string()).unwrap_or_default(),
                trial.min_t.is_none().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `n,max_min_t`; the maximum is empty when any trial was capped.
pub fn write_summary_csv<W: Write>(run: &ScalingRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "max_min_t"])?;
    for rec in &run.records {
        w.write_record([
            rec.n.to_string(),
            rec.max_min_t.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    fit_log: &'a Fit,
    fit_linear: &'a Fit,
    fit_nlogn: &'a Fit,
    excluded_n: &'a [usize],
}

pub fn fit_report_json(run: &ScalingRun) -> Result<String> {
    Ok(serde_json::to_string_pretty(&FitReport {
        fit_log: &run.fit_log,
        fit_linear: &run.fit_linear,
        fit_nlogn: &run.fit_nlogn,
        excluded_n: &run.excluded_n,
    })?)
}

/// Writes the three report files into `dir` and returns their paths.
pub fn write_reports(run: &ScalingRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let scaling = dir.join(SCALING_CSV);
    write_scaling_csv(run, fs::File::create(&scaling)?)?;
    let summary = dir.join(SUMMARY_CSV);
    write_summary_csv(run, fs::File::create(&summary)?)?;
    let fit = dir.join(FIT_JSON);
    fs::write(&fit, fit_report_json(run)? + "\n")?;
    Ok(vec![scaling, summary, fit])
}
