use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::LassoConfig;
use crate::error::{Error, Result};

/// Default cap on the searched trajectory length.
pub const DEFAULT_T_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sparse2Regular,
    DenseStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Moments,
    Ols,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    A,
    B,
    #[serde(rename = "CCT")]
    Cct,
    #[serde(rename = "CECT")]
    Cect,
}

macro_rules! display_as_serde {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(s.as_str().ok_or(fmt::Error)?)
            }
        }
    )*};
}

display_as_serde!(Family, Method, Mode, Target);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub method: Method,
    pub mode: Mode,
    pub n_values: Vec<usize>,
    pub threshold: f64,
    pub trials: usize,
    pub delta_seed: u64,
    pub target: Target,
    /// Largest trajectory length tried before a trial is marked capped.
    #[serde(default = "default_t_cap")]
    pub t_cap: usize,
    #[serde(default)]
    pub lasso: LassoConfig,
}

fn default_t_cap() -> usize {
    DEFAULT_T_CAP
}

impl ExperimentConfig {
    /// Desk-scale sweep: `N` in 32..=512, 10 trials, threshold 0.25.
    pub fn desk(family: Family, method: Method) -> Self {
        ExperimentConfig {
            family,
            method,
            mode: Mode::Full,
            n_values: vec![32, 64, 128, 256, 512],
            threshold: 0.25,
            trials: 10,
            delta_seed: 0,
            target: Target::A,
            t_cap: DEFAULT_T_CAP,
            lasso: LassoConfig::default(),
        }
    }

    /// Same as [`ExperimentConfig::desk`] with 30 trials.
    pub fn full_protocol(family: Family, method: Method) -> Self {
        ExperimentConfig {
            trials: 30,
            ..Self::desk(family, method)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "threshold must be positive and finite, got {}",
                self.threshold
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.n_values.is_empty() {
            return Err(Error::invalid("n_values must not be empty"));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_values must be strictly increasing"));
        }
        let min_n = match self.family {
            Family::Sparse2Regular => 3,
            Family::DenseStar => 2,
        };
        if self.n_values[0] < min_n {
            return Err(Error::invalid(format!(
                "{} needs N >= {min_n}",
                self.family
            )));
        }
        if self.t_cap < 16 {
            return Err(Error::invalid("t_cap must be at least 16"));
        }
        match self.mode {
            Mode::Full if self.target != Target::A => {
                return Err(Error::invalid("full observation only supports target A"));
            }
            Mode::Partial => {
                if self.method != Method::Moments {
                    return Err(Error::invalid(
                        "partial observation is only supported for the moments method",
                    ));
                }
                if self.target == Target::A {
                    return Err(Error::invalid("partial observation targets B, CCT or CECT"));
                }
                if let Some(n) = self.n_values.iter().find(|n| *n % 2 != 0) {
                    return Err(Error::invalid(format!(
                        "partial observation needs even N, got {n}"
                    )));
                }
            }
            _ => {}
        }
        if self.method == Method::Lasso {
            self.lasso.validate()?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
