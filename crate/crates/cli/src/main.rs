use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ldsm_core::baselines::{lasso_fit, ols_fit, LassoConfig};
use ldsm_core::harness::{run_sweep, write_reports, ExperimentConfig};
use ldsm_core::moments::{
    block_sample_bounds, estimate_a, partial_blocks, s_hat, sample_bound, write_matrix_csv,
};
use ldsm_core::oracles::verify_suite;
use ldsm_core::simulate::{read_states_csv, rollout};
use ldsm_core::sysgen::{gen_dense_star, gen_random_stable, gen_sparse_2regular};
use ldsm_core::{Error, SymmetricDynamics};

#[derive(Parser)]
#[command(
    name = "ldsm",
    version,
    about = "Moment-based identification of symmetric linear dynamical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemKind {
    Sparse2regular,
    Densestar,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    /// The lag-m moment matrix.
    Moment,
    /// Full-observation estimate of A.
    A,
    /// Partial-observation blocks as JSON.
    Blocks,
    Ols,
    Lasso,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory and write it as CSV.
    Simulate {
        /// System JSON file; overrides --family.
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sparse2regular")]
        family: SystemKind,
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Spectral radius for the random family.
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        /// Seed for the system graph or matrix.
        #[arg(long, default_value_t = 0)]
        system_seed: u64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Number of transitions; the file holds t_len + 1 states.
        #[arg(long, default_value_t = 1000)]
        t_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate from a trajectory CSV.
    Estimate {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "a")]
        what: Estimator,
        /// Lag for --what moment.
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Observed coordinates for --what blocks (default: half).
        #[arg(long)]
        n_obs: Option<usize>,
        /// Lasso settings as JSON.
        #[arg(long)]
        lasso_config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print sample-size bounds.
    Bound {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long)]
        n: usize,
        /// Print the partial-observation block bounds instead.
        #[arg(long)]
        blocks: bool,
    },
    /// Run a scaling sweep from a JSON config.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the algebraic identity checks.
    Verify,
}

/// A failure tagged with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::OracleScale { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn build_system(
    kind: SystemKind,
    n: usize,
    rho: f64,
    seed: u64,
) -> Result<SymmetricDynamics, Error> {
    match kind {
        SystemKind::Sparse2regular => gen_sparse_2regular(n, seed),
        SystemKind::Densestar => gen_dense_star(n),
        SystemKind::Random => gen_random_stable(n, rho, seed),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            system,
            family,
            n,
            rho,
            system_seed,
            sigma,
            t_len,
            seed,
            out,
        } => {
            let d = match system {
                Some(p) => SymmetricDynamics::load(&p)?,
                None => build_system(family, n, rho, system_seed)?.with_sigma(sigma)?,
            };
            let traj = rollout(&d, t_len, seed)?;
            let mut w = output(out.as_deref())?;
            traj.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Estimate {
            input,
            what,
            m,
            n_obs,
            lasso_config,
            out,
        } => {
            let states = read_states_csv(File::open(&input)?)?;
            let mut w = output(out.as_deref())?;
            match what {
                Estimator::Moment => write_matrix_csv(&s_hat(&states, m)?.s_hat, &mut w)?,
                Estimator::A => write_matrix_csv(&estimate_a(&states)?, &mut w)?,
                Estimator::Ols => write_matrix_csv(&ols_fit(&states)?, &mut w)?,
                Estimator::Lasso => {
                    let cfg = match lasso_config {
                        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                            .map_err(Error::from)?,
                        None => LassoConfig::default(),
                    };
                    write_matrix_csv(&lasso_fit(&states, &cfg)?, &mut w)?;
                }
                Estimator::Blocks => {
                    let k = n_obs.unwrap_or(states.cols() / 2);
                    if k == 0 || k > states.cols() {
                        return Err(Error::InvalidInput(format!(
                            "n_obs must lie in 1..={}, got {k}",
                            states.cols()
                        ))
                        .into());
                    }
                    let blocks = partial_blocks(&states.leading_columns(k))?;
                    let text = serde_json::to_string_pretty(&blocks).map_err(Error::from)?;
                    writeln!(w, "{text}")?;
                }
            }
            w.flush()?;
        }
        Command::Bound {
            eps,
            delta,
            sigma,
            rho,
            m,
            n,
            blocks,
        } => {
            if blocks {
                let b = block_sample_bounds(eps, delta, sigma, rho, n)?;
                println!("t_b {}\nt_cct {}\nt_cect {}", b.t_b, b.t_cct, b.t_cect);
            } else {
                println!("{}", sample_bound(eps, delta, sigma, rho, m, n)?.t_required);
            }
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let run = run_sweep(&cfg)?;
            for path in write_reports(&run, &out)? {
                eprintln!("wrote {}", path.display());
            }
            for (n, t) in run.max_min_t() {
                match t {
                    Some(t) => println!("n={n} max_min_t={t}"),
                    None => println!("n={n} capped"),
                }
            }
        }
        Command::Verify => {
            let checks = verify_suite()?;
            let mut failed = 0;
            for c in &checks {
                let tag = if c.passed { "ok  " } else { "FAIL" };
                println!("{tag} {:<20} {}", c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Failure {
                    code: 3,
                    message: format!("{failed} of {} checks failed", checks.len()),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
