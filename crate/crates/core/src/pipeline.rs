//! Point registration, graph matching, the ICP baseline and error metrics.

use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign_points, PointMatching};
use crate::error::{Error, Result};
use crate::graphon::Permutation;
use crate::laplace::LossConfig;
use crate::ortho::{minimize_over_o, BlockConstraint, OrthogonalTransform, SearchConfig, StartDiagnostic};
use crate::points::PointCloud;
use crate::spectral::{joint_signature, spectrum, Embedding};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Laplace,
    Icp,
}

/// What to do when the two embeddings disagree on how many eigenvalues of
/// each sign they retain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignaturePolicy {
    /// Fail with [`Error::SignatureMismatch`].
    #[default]
    Strict,
    /// Re-embed both graphs with the signature that captures the most
    /// eigenvalue mass over the pair.
    Joint,
}

/// Wall time per stage, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub embed_ms: f64,
    pub optimize_ms: f64,
    pub assign_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchResult {
    pub method: Method,
    /// `perm_hat[i]` is the row of the second input matched to row `i` of
    /// the first; present when both inputs have the same size.
    pub perm_hat: Option<Permutation>,
    pub matching: PointMatching,
    pub transform: OrthogonalTransform,
    /// Final objective: the sampled Laplace loss, or the mean squared
    /// residual for ICP.
    pub loss: f64,
    /// Total squared distance between matched rows after the transform.
    pub assignment_cost: f64,
    pub d_pos: usize,
    pub d_neg: usize,
    /// The embeddings disagreed in signature and were reconciled.
    pub signature_reconciled: bool,
    pub starts: Vec<StartDiagnostic>,
    /// ICP objective after each iteration; empty for the Laplace method.
    pub objective_history: Vec<f64>,
    pub evaluations: usize,
    pub timings: Timings,
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn check_clouds(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.n() == 0 || y.n() == 0 {
        return Err(Error::EmptyCloud);
    }
    if x.dim() != y.dim() {
        return Err(Error::Dimension(format!("clouds of dimension {} and {}", x.dim(), y.dim())));
    }
    Ok(())
}

/// Estimates the orthogonal transform taking `x` onto `y` by minimising the
/// Laplace-transform loss, then matches rows of `x O` to rows of `y`.
pub fn register_points<R: Rng + ?Sized>(
    x: &PointCloud,
    y: &PointCloud,
    cfg: &LossConfig,
    search: &SearchConfig,
    rng: &mut R,
) -> Result<MatchResult> {
    register_constrained(x, y, cfg, search, None, rng)
}

fn register_constrained<R: Rng + ?Sized>(
    x: &PointCloud,
    y: &PointCloud,
    cfg: &LossConfig,
    search: &SearchConfig,
    constraint: Option<&BlockConstraint>,
    rng: &mut R,
) -> Result<MatchResult> {
    check_clouds(x, y)?;
    let clock = Instant::now();
    let opt = minimize_over_o(x, y, cfg, search, constraint, rng)?;
    let optimize_ms = elapsed_ms(clock);

    let clock = Instant::now();
    let xo = x.transform(opt.transform.matrix())?;
    let matching = assign_points(&xo, y, rng)?;
    let assignment_cost = matching.cost(&xo, y);
    let assign_ms = elapsed_ms(clock);

    let (d_pos, d_neg) = constraint.map_or((x.dim(), 0), |c| (c.d_pos, c.d_neg));
    Ok(MatchResult {
        method: Method::Laplace,
        perm_hat: matching.as_permutation(),
        matching,
        transform: opt.transform,
        loss: opt.loss,
        assignment_cost,
        d_pos,
        d_neg,
        signature_reconciled: false,
        starts: opt.starts,
        objective_history: Vec::new(),
        evaluations: opt.evaluations,
        timings: Timings {
            embed_ms: 0.0,
            optimize_ms,
            assign_ms,
            total_ms: optimize_ms + assign_ms,
        },
    })
}

/// Embeds both adjacency matrices in `d` dimensions and registers the
/// embeddings. An indefinite embedding restricts the transform to act
/// separately on the positive and negative eigen-directions. Fails if the
/// two embeddings differ in signature.
pub fn match_graphs<R: Rng + ?Sized>(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    d: usize,
    cfg: &LossConfig,
    search: &SearchConfig,
    rng: &mut R,
) -> Result<MatchResult> {
    match_graphs_with(a1, a2, d, cfg, search, SignaturePolicy::Strict, rng)
}

pub fn match_graphs_with<R: Rng + ?Sized>(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    d: usize,
    cfg: &LossConfig,
    search: &SearchConfig,
    policy: SignaturePolicy,
    rng: &mut R,
) -> Result<MatchResult> {
    let clock = Instant::now();
    let (e1, e2, reconciled) = embed_pair(a1, a2, d, policy)?;
    let embed_ms = elapsed_ms(clock);

    let constraint = BlockConstraint {
        d_pos: e1.d_pos,
        d_neg: e1.d_neg,
    };
    let indefinite = e1.d_pos > 0 && e1.d_neg > 0;
    info!(
        "matching graphs of sizes {} and {} with signature ({}, {})",
        a1.nrows(),
        a2.nrows(),
        e1.d_pos,
        e1.d_neg
    );
    let (x, y) = (e1.cloud()?, e2.cloud()?);
    let mut result = register_constrained(&x, &y, cfg, search, indefinite.then_some(&constraint), rng)?;
    result.d_pos = e1.d_pos;
    result.d_neg = e1.d_neg;
    result.signature_reconciled = reconciled;
    result.timings.embed_ms = embed_ms;
    result.timings.total_ms += embed_ms;
    Ok(result)
}

/// Embeds both graphs, reconciling their signatures if the policy allows.
/// The flag reports whether reconciliation was needed.
pub fn embed_pair(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    d: usize,
    policy: SignaturePolicy,
) -> Result<(Embedding, Embedding, bool)> {
    let (s1, s2) = (spectrum(a1)?, spectrum(a2)?);
    let (e1, e2) = (s1.embed(d)?, s2.embed(d)?);
    if (e1.d_pos, e1.d_neg) == (e2.d_pos, e2.d_neg) {
        return Ok((e1, e2, false));
    }
    match policy {
        SignaturePolicy::Strict => Err(Error::SignatureMismatch {
            pos1: e1.d_pos,
            neg1: e1.d_neg,
            pos2: e2.d_pos,
            neg2: e2.d_neg,
        }),
        SignaturePolicy::Joint => {
            let (p, q) = joint_signature(&s1, &s2, d)?;
            warn!(
                "signatures ({}, {}) and ({}, {}) differ; embedding both as ({p}, {q})",
                e1.d_pos, e1.d_neg, e2.d_pos, e2.d_neg
            );
            Ok((s1.embed_signed(p, q)?, s2.embed_signed(p, q)?, true))
        }
    }
}

/// ICP on adjacency embeddings, for comparison with [`match_graphs`].
pub fn match_graphs_icp<R: Rng + ?Sized>(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    d: usize,
    opts: &IcpOptions,
    policy: SignaturePolicy,
    rng: &mut R,
) -> Result<MatchResult> {
    let clock = Instant::now();
    let (e1, e2, reconciled) = embed_pair(a1, a2, d, policy)?;
    let embed_ms = elapsed_ms(clock);
    let mut result = icp_baseline(&e1.cloud()?, &e2.cloud()?, opts, rng)?;
    result.d_pos = e1.d_pos;
    result.d_neg = e1.d_neg;
    result.signature_reconciled = reconciled;
    result.timings.embed_ms = embed_ms;
    result.timings.total_ms += embed_ms;
    Ok(result)
}

#[derive(Clone, Debug)]
pub struct IcpOptions {
    pub max_iters: usize,
    /// Starting transform; the identity when absent.
    pub initial: Option<OrthogonalTransform>,
    /// Stop once an iteration lowers the objective by less than this.
    pub tol: f64,
}

impl Default for IcpOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            initial: None,
            tol: 1e-10,
        }
    }
}

/// Alternates an exact assignment for fixed `O` with an exact Procrustes
/// solve for fixed matching. Each half-step can only lower
/// `|P X O - Y|_F^2`, so the recorded objective never increases.
pub fn icp_baseline<R: Rng + ?Sized>(
    x: &PointCloud,
    y: &PointCloud,
    opts: &IcpOptions,
    rng: &mut R,
) -> Result<MatchResult> {
    check_clouds(x, y)?;
    if x.n() != y.n() {
        return Err(Error::Dimension(format!("ICP needs equal sizes, got {} and {}", x.n(), y.n())));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("ICP needs at least one iteration".into()));
    }
    let d = x.dim();
    let mut transform = match &opts.initial {
        Some(t) if t.dim() != d => {
            return Err(Error::Dimension(format!("{}-dimensional start for d = {d}", t.dim())));
        }
        Some(t) => t.clone(),
        None => OrthogonalTransform::identity(d),
    };
    let clock = Instant::now();
    let mut assign_ms = 0.0;
    let mut history: Vec<f64> = Vec::new();
    let mut matching;
    loop {
        let step = Instant::now();
        let xo = x.transform(transform.matrix())?;
        matching = assign_points(&xo, y, rng)?;
        assign_ms += elapsed_ms(step);
        let (xp, yp) = paired_rows(x, y, &matching)?;
        let next = procrustes(&xp, &yp)?;
        let objective = residual(&xp, &yp, next.matrix());
        let previous = history.last().copied();
        // rounding in a converged solve can nudge the value up; keep the old O
        if previous.is_some_and(|prev| objective > prev) {
            break;
        }
        transform = next;
        history.push(objective);
        let stalled = previous.is_some_and(|prev| prev - objective < opts.tol);
        if stalled || history.len() >= opts.max_iters {
            break;
        }
    }
    let xo = x.transform(transform.matrix())?;
    let assignment_cost = matching.cost(&xo, y);
    let total_ms = elapsed_ms(clock);
    let loss = history.last().copied().unwrap_or(0.0) / x.n() as f64;
    Ok(MatchResult {
        method: Method::Icp,
        perm_hat: matching.as_permutation(),
        matching,
        transform,
        loss,
        assignment_cost,
        d_pos: d,
        d_neg: 0,
        signature_reconciled: false,
        starts: Vec::new(),
        objective_history: history,
        evaluations: 0,
        timings: Timings {
            embed_ms: 0.0,
            optimize_ms: total_ms - assign_ms,
            assign_ms,
            total_ms,
        },
    })
}

fn paired_rows(x: &PointCloud, y: &PointCloud, matching: &PointMatching) -> Result<(PointCloud, PointCloud)> {
    let xs: Vec<usize> = matching.pairs.iter().map(|p| p.0).collect();
    let ys: Vec<usize> = matching.pairs.iter().map(|p| p.1).collect();
    Ok((x.select_rows(&xs)?, y.select_rows(&ys)?))
}

/// `|X O - Y|_F^2`.
fn residual(x: &PointCloud, y: &PointCloud, o: &DMatrix<f64>) -> f64 {
    (x.matrix() * o - y.matrix()).norm_squared()
}

/// Orthogonal `O` minimising `|X O - Y|_F` for row-paired clouds:
/// `O = U V^T` where `X^T Y = U S V^T`.
pub fn procrustes(x: &PointCloud, y: &PointCloud) -> Result<OrthogonalTransform> {
    check_clouds(x, y)?;
    if x.n() != y.n() {
        return Err(Error::Dimension(format!("paired clouds of {} and {} rows", x.n(), y.n())));
    }
    let cross = x.matrix().transpose() * y.matrix();
    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::NonFinite("singular value decomposition failed".into())),
    };
    let o = u * v_t;
    // re-orthogonalise away the rounding of the product
    let o = {
        let svd = o.clone().svd(true, true);
        match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => u * v_t,
            _ => o,
        }
    };
    OrthogonalTransform::from_matrix(&o)
}

/// `|P_hat W P_hat^T - P* W P*^T|_F / n`, computed by index remapping.
pub fn rmse_metric(w: &DMatrix<f64>, perm_hat: &Permutation, perm_star: &Permutation) -> Result<f64> {
    let n = w.nrows();
    if w.ncols() != n || perm_hat.len() != n || perm_star.len() != n {
        return Err(Error::Dimension(format!(
            "{}x{} matrix with permutations of sizes {} and {}",
            n,
            w.ncols(),
            perm_hat.len(),
            perm_star.len()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    // (P W P^T)[k, l] = W[p^-1(k), p^-1(l)]
    let (a, b) = (perm_hat.inverse(), perm_star.inverse());
    let (a, b) = (a.as_slice(), b.as_slice());
    let mut sum = 0.0;
    for l in 0..n {
        for k in 0..n {
            let diff = w[(a[k], a[l])] - w[(b[k], b[l])];
            sum += diff * diff;
        }
    }
    Ok(sum.sqrt() / n as f64)
}

/// `min_O |P_hat X O - Y|_F / sqrt(n)` for a total matching.
pub fn registration_error(x: &PointCloud, y: &PointCloud, matching: &PointMatching) -> Result<f64> {
    check_clouds(x, y)?;
    if matching.n_x != x.n() || matching.n_y != y.n() {
        return Err(Error::Dimension(format!(
            "matching between {} and {} rows applied to clouds of {} and {}",
            matching.n_x,
            matching.n_y,
            x.n(),
            y.n()
        )));
    }
    let (xp, yp) = paired_rows(x, y, matching)?;
    let o = procrustes(&xp, &yp)?;
    Ok(residual(&xp, &yp, o.matrix()).sqrt() / (xp.n() as f64).sqrt())
}
