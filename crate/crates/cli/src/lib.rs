//! Command-line front end: simulation, matching, registration and the
//! repeated-trial benchmark.

pub mod bench;
pub mod commands;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lrgm::io::MatrixFormat;
use lrgm::pipeline::SignaturePolicy;

use crate::commands::{MatchArgs, MatchReport};
use crate::config::ExperimentConfig;

/// Exit status for a sign-signature disagreement between the two graphs.
pub const EXIT_SIGNATURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lrgm", version, about = "Unseeded graph matching for low-rank graphons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a pair of graphs from a graphon and hide a relabelling.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Write matrices in the binary format instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// Match two graphs given as adjacency matrix files.
    Match {
        a1: PathBuf,
        a2: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// True permutation, one image per line; enables scoring.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Probability matrix used for the RMSE; defaults to the first graph.
        #[arg(long)]
        prob: Option<PathBuf>,
        /// Reconcile differing sign signatures instead of failing.
        #[arg(long)]
        joint: bool,
    },
    /// Register two point clouds given as CSV files, one point per row.
    Register {
        x: PathBuf,
        y: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Repeat simulate-and-match over graphons and sizes and report
    /// per-cell means.
    Bench {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Leave the timing columns empty so reruns give identical files.
        #[arg(long)]
        no_timings: bool,
    },
}

/// Settings shared by every subcommand. Flags override the config file.
#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    /// `key = value` file with the same keys as the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// 1, 2, 3, er:<p> or sbm:<w1>,...;<between>; repeat for several.
    #[arg(long)]
    pub graphon: Vec<String>,
    /// Graph sizes, comma separated.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    /// Number of sampled frequencies.
    #[arg(long)]
    pub ms: Option<String>,
    /// Frequency truncation.
    #[arg(long = "R")]
    pub r: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    /// Grid resolution of the multistart search.
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub noise_sigma: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// laplace or icp; a comma-separated list for `bench`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Objective evaluations per polished start.
    #[arg(long)]
    pub budget: Option<String>,
    /// Give the second graph its own latent positions.
    #[arg(long)]
    pub independent_latents: bool,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.graphon.is_empty() {
            cfg.set("graphon", &self.graphon.join(" "))?;
        }
        let flags = [
            ("n", &self.n),
            ("reps", &self.reps),
            ("d", &self.d),
            ("ms", &self.ms),
            ("R", &self.r),
            ("gamma", &self.gamma),
            ("p", &self.p),
            ("noise-sigma", &self.noise_sigma),
            ("seed", &self.seed),
            ("method", &self.method),
            ("budget", &self.budget),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{key}"))?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if self.independent_latents {
            cfg.shared_latents = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn single<T: Copy + std::fmt::Debug>(values: &[T], what: &str) -> Result<T> {
    match values {
        [v] => Ok(*v),
        _ => anyhow::bail!("expected a single {what}, got {values:?}"),
    }
}

fn emit(report: &MatchReport, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    match out {
        Some(path) => std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => writeln!(std::io::stdout().lock(), "{json}")?,
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { exp, binary } => {
            let cfg = exp.resolve()?;
            let graphon = match cfg.graphons.as_slice() {
                [g] => g,
                _ => anyhow::bail!("simulate takes a single graphon"),
            };
            let n = single(&cfg.ns, "n")?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let format = if binary { MatrixFormat::Binary } else { MatrixFormat::Csv };
            commands::simulate(graphon, n, &cfg, &dir, format)?;
        }
        Command::Match {
            a1,
            a2,
            exp,
            truth,
            prob,
            joint,
        } => {
            let cfg = exp.resolve()?;
            let args = MatchArgs {
                a1: &a1,
                a2: &a2,
                d: cfg.d,
                loss: cfg.loss,
                search: cfg.search(),
                method: single(&cfg.methods, "method")?,
                policy: if joint { SignaturePolicy::Joint } else { SignaturePolicy::Strict },
                seed: cfg.seed,
                truth: truth.as_deref(),
                prob: prob.as_deref(),
            };
            emit(&commands::match_files(&args)?, cfg.out.as_deref())?;
        }
        Command::Register { x, y, exp } => {
            let cfg = exp.resolve()?;
            let method = single(&cfg.methods, "method")?;
            let report = commands::register_files(&x, &y, &cfg.loss, &cfg.search(), method, cfg.seed)?;
            emit(&report, cfg.out.as_deref())?;
        }
        Command::Bench { exp, no_timings } => {
            let cfg = exp.resolve()?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("bench-out"));
            bench::run_bench(&cfg, &dir, !no_timings)?;
        }
    }
    Ok(())
}

/// Exit status for an error: the signature code when the two graphs disagree
/// in signature, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let mismatch = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<lrgm::Error>(), Some(lrgm::Error::SignatureMismatch { .. })));
    if mismatch {
        EXIT_SIGNATURE
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_method;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "graphon = 2\nn = 100,250\nreps = 10\nseed = 4\n").unwrap();
        let cli = Cli::try_parse_from([
            "lrgm",
            "bench",
            "--config",
            path.to_str().unwrap(),
            "--reps",
            "3",
            "--method",
            "laplace,icp",
        ])
        .unwrap();
        let Command::Bench { exp, .. } = cli.command else { panic!() };
        let cfg = exp.resolve().unwrap();
        assert_eq!(cfg.graphons[0].label, "2");
        assert_eq!(cfg.ns, vec![100, 250]);
        assert_eq!(cfg.reps, 3);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.methods.len(), 2);
    }

    #[test]
    fn mismatch_maps_to_its_own_exit_code() {
        let err = anyhow::Error::from(lrgm::Error::SignatureMismatch {
            pos1: 1,
            neg1: 1,
            pos2: 2,
            neg2: 0,
        })
        .context("matching");
        assert_eq!(exit_code(&err), EXIT_SIGNATURE);
        assert_eq!(exit_code(&anyhow::anyhow!("missing file")), 1);
    }

    #[test]
    fn single_valued_settings() {
        assert_eq!(single(&[3], "n").unwrap(), 3);
        assert!(single(&[3, 4], "n").is_err());
        assert!(parse_method("svd").is_err());
    }
}
