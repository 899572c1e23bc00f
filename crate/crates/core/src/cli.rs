//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
//! runtime error, 3 when `fit` finds no CAN model (the report is still
//! written).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{generate, load_csv, write_columns, write_csv, Dataset, GeneratorSpec};
use crate::dependence::{hsic_pvalue, PValueMethod};
use crate::error::{Error, Result};
use crate::ican::{run_ican, Decision, IcanConfig};
use crate::moments::{
    epsilon_probe, estimate_noise_moments, reconstruct_moments, scaling_study, MomentEstimate, MomentProblem,
    NoiseMomentOptions, ScalingStudy,
};
use crate::report::FitReport;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NO_CAN_FIT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ican", version, about = "Confounder detection with additive noise models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Gamma,
    Perm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a CAN model to a two-column CSV and decide the causal structure.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long = "max-iters", default_value_t = 10)]
        max_iters: usize,
        #[arg(long, default_value_t = 5000)]
        budget: usize,
        #[arg(long = "ratio-low", default_value_t = 0.2)]
        ratio_low: f64,
        #[arg(long = "ratio-high", default_value_t = 5.0)]
        ratio_high: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic data set.
    Simulate {
        #[arg(long, value_parser = parse_dataset)]
        dataset: Dataset,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the latent values and noise draws.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// HSIC independence test between the two columns of a CSV.
    Hsic {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Gamma)]
        method: MethodArg,
        #[arg(long, default_value_t = 1000)]
        perms: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Moment reconstruction: either explicit problems or one draw per ℓ of
    /// a study, with quadrature probes of the finite-ℓ error.
    Moments {
        #[arg(long)]
        config: PathBuf,
    },
    /// Error table of noise-moment estimates over ℓ and seeds.
    ScalingStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dataset(s: &str) -> std::result::Result<Dataset, String> {
    s.parse::<Dataset>().map_err(|e| e.to_string())
}

/// Input of the `moments` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MomentsConfig {
    Problems { problems: Vec<MomentProblem> },
    Study(ScalingStudy),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StudyCell {
    ell: f64,
    estimate: MomentEstimate,
    /// `ε_order(y_j)` at each base point.
    epsilon: Vec<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn run_moments(config: &PathBuf) -> Result<String> {
    match read_json::<MomentsConfig>(config)? {
        MomentsConfig::Problems { problems } => Ok(serde_json::to_string_pretty(&reconstruct_moments(&problems)?)?),
        MomentsConfig::Study(study) => {
            study.validate()?;
            let mut cells = Vec::new();
            for &ell in &study.ell_values {
                let (x, y) = study.sample(ell, study.seed);
                let pts: Vec<f64> = study.y_points.iter().map(|p| ell * p).collect();
                let estimate = estimate_noise_moments(
                    &x,
                    &y,
                    study.w_scaled(ell),
                    &pts,
                    study.order,
                    &NoiseMomentOptions {
                        bandwidth: study.bandwidth.map(|b| b * ell),
                    },
                )?
                .with_truth(|k| study.noise_x.moment(k), |k| study.noise_y.moment(k));
                let epsilon = study
                    .y_points
                    .iter()
                    .map(|&y0| epsilon_probe(&study, study.order, y0, ell))
                    .collect::<Result<Vec<_>>>()?;
                cells.push(StudyCell { ell, estimate, epsilon });
            }
            Ok(serde_json::to_string_pretty(&cells)?)
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Fit {
            csv,
            alpha,
            max_iters,
            budget,
            ratio_low,
            ratio_high,
            seed,
            out,
        } => {
            let config = IcanConfig {
                alpha,
                max_iterations: max_iters,
                eval_budget: budget,
                ratio_low,
                ratio_high,
                seed,
                ..IcanConfig::default()
            };
            config.validate()?;
            let data = load_csv(&csv)?.normalize()?;
            let result = run_ican(&data, &config)?;
            let report = FitReport::new(&result, &config, data.normalization);
            match out {
                Some(path) => report.write(path)?,
                None => println!("{}", report.to_json()?),
            }
            let p = result.p_values();
            eprintln!(
                "decision {} var_ratio {:.4} p [{:.3}, {:.3}, {:.3}] iterations {}",
                result.decision, result.var_ratio, p[0], p[1], p[2], result.iterations_used
            );
            Ok(if result.decision == Decision::NoCanFit {
                EXIT_NO_CAN_FIT
            } else {
                EXIT_OK
            })
        }
        Command::Simulate {
            dataset,
            n,
            seed,
            out,
            truth,
        } => {
            let g = generate(&GeneratorSpec::new(dataset, n, seed))?;
            write_csv(&out, &g.sample)?;
            if let Some(path) = truth {
                write_columns(path, &["t", "nx", "ny"], &[&g.truth.t, &g.truth.nx, &g.truth.ny])?;
            }
            Ok(EXIT_OK)
        }
        Command::Hsic {
            csv,
            method,
            perms,
            seed,
        } => {
            let data = load_csv(&csv)?;
            let method = match method {
                MethodArg::Gamma => PValueMethod::Gamma,
                MethodArg::Perm => PValueMethod::Permutation {
                    permutations: perms,
                    seed,
                },
            };
            let report = hsic_pvalue(&data.x, &data.y, method)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_OK)
        }
        Command::Moments { config } => {
            println!("{}", run_moments(&config)?);
            Ok(EXIT_OK)
        }
        Command::ScalingStudy { config, out } => {
            let study: ScalingStudy = read_json(&config)?;
            let table = scaling_study(&study)?;
            table.write_csv(&out)?;
            for ell in table.ells() {
                let medians: Vec<String> = (1..=study.order)
                    .map(|o| format!("{:.3e}", table.median_error(ell, o).unwrap_or(f64::NAN)))
                    .collect();
                eprintln!("ell {ell}: median error by order [{}]", medians.join(", "));
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first) and runs one subcommand, returning
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e @ Error::InvalidParameter(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
