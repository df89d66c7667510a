//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lrgm::experiment::{data_rng, match_rng, simulate_pair};
use lrgm::graphon::Permutation;
use lrgm::io::{load_matrix, load_permutation, save_matrix, save_permutation, MatrixFormat};
use lrgm::laplace::LossConfig;
use lrgm::ortho::SearchConfig;
use lrgm::pipeline::{
    icp_baseline, match_graphs_icp, match_graphs_with, register_points, registration_error, rmse_metric, IcpOptions,
    MatchResult, Method, SignaturePolicy,
};
use lrgm::PointCloud;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{ExperimentConfig, NamedGraphon};

/// Output of `match` and `register`: the match itself plus scores that need
/// the ground truth.
#[derive(Debug, Serialize)]
pub struct MatchReport {
    #[serde(flatten)]
    pub result: MatchResult,
    /// `|P_hat W P_hat^T - P* W P*^T|_F / n`, unscaled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    /// Fraction of rows mapped to their true partner.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registration_error: Option<f64>,
}

/// File names written by `simulate`, relative to the output directory.
pub struct SimulatedFiles {
    pub w: PathBuf,
    pub a1: PathBuf,
    pub a2: PathBuf,
    pub perm_star: PathBuf,
    pub latents: PathBuf,
}

impl SimulatedFiles {
    pub fn in_dir(dir: &Path, format: MatrixFormat) -> Self {
        let ext = match format {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Binary => "bin",
        };
        Self {
            w: dir.join(format!("W.{ext}")),
            a1: dir.join(format!("A1.{ext}")),
            a2: dir.join(format!("A2.{ext}")),
            perm_star: dir.join("perm_star.txt"),
            latents: dir.join("latents.csv"),
        }
    }
}

/// Draws one pair of graphs. `A2` is relabelled by the permutation in
/// `perm_star.txt`; `latents.csv` has the latent positions of both graphs,
/// before relabelling, as two columns.
pub fn simulate(
    graphon: &NamedGraphon,
    n: usize,
    cfg: &ExperimentConfig,
    dir: &Path,
    format: MatrixFormat,
) -> Result<SimulatedFiles> {
    if n == 0 {
        bail!("n must be at least 1");
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut rng = data_rng(cfg.seed);
    let pair = simulate_pair(&graphon.spec, n, cfg.noise_for(&graphon.spec), cfg.shared_latents, &mut rng)?;
    let files = SimulatedFiles::in_dir(dir, format);
    save_matrix(&files.w, &pair.prob.w, format)?;
    save_matrix(&files.a1, &pair.a1, format)?;
    save_matrix(&files.a2, &pair.a2, format)?;
    save_permutation(&files.perm_star, &pair.perm_star)?;
    let latents = DMatrix::from_fn(n, 2, |i, j| if j == 0 { pair.prob.latents[i] } else { pair.latents2[i] });
    save_matrix(&files.latents, &latents, MatrixFormat::Csv)?;
    Ok(files)
}

pub struct MatchArgs<'a> {
    pub a1: &'a Path,
    pub a2: &'a Path,
    pub d: usize,
    pub loss: LossConfig,
    pub search: SearchConfig,
    pub method: Method,
    pub policy: SignaturePolicy,
    pub seed: u64,
    pub truth: Option<&'a Path>,
    pub prob: Option<&'a Path>,
}

fn load(path: &Path) -> Result<DMatrix<f64>> {
    load_matrix(path).with_context(|| format!("reading {}", path.display()))
}

/// Matches two graphs. With `truth`, scores the estimate against the true
/// permutation, using the probability matrix from `prob` or else `A1`.
pub fn match_files(args: &MatchArgs) -> Result<MatchReport> {
    let a1 = load(args.a1)?;
    let a2 = load(args.a2)?;
    let mut rng = match_rng(args.seed);
    let result = match args.method {
        Method::Laplace => match_graphs_with(&a1, &a2, args.d, &args.loss, &args.search, args.policy, &mut rng)?,
        Method::Icp => match_graphs_icp(&a1, &a2, args.d, &IcpOptions::default(), args.policy, &mut rng)?,
    };
    let mut report = MatchReport {
        result,
        rmse: None,
        accuracy: None,
        registration_error: None,
    };
    if let Some(truth) = args.truth {
        let perm_star = load_permutation(truth).with_context(|| format!("reading {}", truth.display()))?;
        let w = match args.prob {
            Some(p) => load(p)?,
            None => a1,
        };
        let perm_hat = report
            .result
            .perm_hat
            .clone()
            .context("graphs of different sizes have no permutation")?;
        report.rmse = Some(rmse_metric(&w, &perm_hat, &perm_star)?);
        report.accuracy = Some(accuracy(&perm_hat, &perm_star));
    }
    Ok(report)
}

fn accuracy(perm_hat: &Permutation, perm_star: &Permutation) -> f64 {
    let n = perm_hat.len();
    (0..n).filter(|&i| perm_hat.image(i) == perm_star.image(i)).count() as f64 / n as f64
}

/// Registers two raw point clouds stored one point per row.
pub fn register_files(
    x: &Path,
    y: &Path,
    loss: &LossConfig,
    search: &SearchConfig,
    method: Method,
    seed: u64,
) -> Result<MatchReport> {
    let x = PointCloud::new(load(x)?)?;
    let y = PointCloud::new(load(y)?)?;
    let mut rng = match_rng(seed);
    let result = match method {
        Method::Laplace => register_points(&x, &y, loss, search, &mut rng)?,
        Method::Icp => icp_baseline(&x, &y, &IcpOptions::default(), &mut rng)?,
    };
    let registration_error = registration_error(&x, &y, &result.matching)?;
    Ok(MatchReport {
        result,
        rmse: None,
        accuracy: None,
        registration_error: Some(registration_error),
    })
}
