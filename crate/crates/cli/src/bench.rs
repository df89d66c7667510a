//! Repeated simulated matching with per-cell aggregation.

use std::fs::{self, File};
use std::path::Path;

use anyhow::{Context, Result};
use lrgm::experiment::{run_trial, trial_seed, TrialOutcome};
use lrgm::pipeline::Method;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// One repetition as written to `detail.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct DetailRow {
    pub graphon: String,
    pub n: usize,
    pub method: Method,
    pub rep: usize,
    pub seed: u64,
    pub rmse: f64,
    pub reg_err: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub d_pos: usize,
    pub d_neg: usize,
    pub reconciled: bool,
    pub time_s: Option<f64>,
    pub embed_ms: Option<f64>,
    pub optimize_ms: Option<f64>,
    pub assign_ms: Option<f64>,
}

/// One (graphon, n, method) cell as written to `aggregate.csv`. RMSE columns
/// are scaled by 100.
#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub graphon: String,
    pub n: usize,
    pub method: Method,
    pub rmse_mean: f64,
    pub rmse_se: f64,
    pub reg_err_mean: f64,
    pub time_mean_s: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation over the square root of the count; zero for a
/// single value.
pub fn standard_error(xs: &[f64]) -> f64 {
    let k = xs.len();
    if k < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

fn detail_row(graphon: &str, rep: usize, out: &TrialOutcome, timings: bool) -> DetailRow {
    let t = &out.result.timings;
    DetailRow {
        graphon: graphon.to_string(),
        n: out.n,
        method: out.method,
        rep,
        seed: out.seed,
        rmse: 100.0 * out.rmse,
        reg_err: out.registration_error,
        accuracy: out.accuracy,
        loss: out.loss,
        d_pos: out.d_pos,
        d_neg: out.d_neg,
        reconciled: out.signature_reconciled,
        time_s: timings.then_some(out.seconds),
        embed_ms: timings.then_some(t.embed_ms),
        optimize_ms: timings.then_some(t.optimize_ms),
        assign_ms: timings.then_some(t.assign_ms),
    }
}

pub fn aggregate(rows: &[DetailRow]) -> ReportRow {
    let rmse: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
    let reg: Vec<f64> = rows.iter().map(|r| r.reg_err).collect();
    let times: Option<Vec<f64>> = rows.iter().map(|r| r.time_s).collect();
    ReportRow {
        graphon: rows[0].graphon.clone(),
        n: rows[0].n,
        method: rows[0].method,
        rmse_mean: mean(&rmse),
        rmse_se: standard_error(&rmse),
        reg_err_mean: mean(&reg),
        time_mean_s: times.map(|t| mean(&t)),
    }
}

/// Runs every repetition of one cell in parallel. Rows come back ordered by
/// repetition whatever the scheduling.
pub fn run_cell(
    cfg: &ExperimentConfig,
    graphon: usize,
    n: usize,
    method: Method,
    timings: bool,
) -> Result<Vec<DetailRow>> {
    let g = &cfg.graphons[graphon];
    let trial = cfg.trial(g, n, method);
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = trial_seed(cfg.seed, &g.label, n, rep);
            let out = run_trial(&trial, seed)
                .with_context(|| format!("graphon {}, n = {n}, repetition {rep}", g.label))?;
            Ok(detail_row(&g.label, rep, &out, timings))
        })
        .collect()
}

/// Writes `aggregate.csv` and `detail.csv` into `dir`, flushing after every
/// cell so an interrupted run keeps what it finished.
pub fn run_bench(cfg: &ExperimentConfig, dir: &Path, timings: bool) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut agg = csv::Writer::from_writer(File::create(dir.join("aggregate.csv"))?);
    let mut detail = csv::Writer::from_writer(File::create(dir.join("detail.csv"))?);
    let mut report = Vec::new();
    for g in 0..cfg.graphons.len() {
        for &n in &cfg.ns {
            for &method in &cfg.methods {
                let rows = run_cell(cfg, g, n, method, timings)?;
                for row in &rows {
                    detail.serialize(row)?;
                }
                let cell = aggregate(&rows);
                log::info!(
                    "graphon {} n = {n} {method:?}: 100*RMSE {:.3} ({:.3})",
                    cell.graphon,
                    cell.rmse_mean,
                    cell.rmse_se
                );
                agg.serialize(&cell)?;
                detail.flush()?;
                agg.flush()?;
                report.push(cell);
            }
        }
    }
    Ok(report)
}
