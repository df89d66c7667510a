//! Search over the orthogonal group.
//!
//! Transforms are charted as a product of Givens rotations times a diagonal
//! sign matrix,
//!
//! ```text
//! O = G(0,d-1) ... G(0,1) · G(1,d-1) ... G(1,2) · ... · G(d-2,d-1) · diag(signs)
//! ```
//!
//! where `G(a,b)(θ)` is the identity except for `cos θ` at `(a,a)` and
//! `(b,b)`, `sin θ` at `(b,a)` and `-sin θ` at `(a,b)`. Angles are stored in
//! lexicographic pair order. With only the `(0,k)` angles non-zero this is
//! exactly the multistart family `G_{d-1}(θ_{d-1}) ... G_1(θ_1) G_0(u)`, and
//! the full chart covers all of O(d).

use std::f64::consts::TAU;
use std::time::Instant;

use log::debug;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{sample_frequencies, LaplaceObjective, LossConfig};
use crate::points::PointCloud;
use crate::simplex::{nelder_mead, SimplexOptions};

pub fn pair_count(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

/// Position of pair `(a, b)`, `a < b`, in the lexicographic angle vector.
pub fn pair_index(a: usize, b: usize, d: usize) -> usize {
    debug_assert!(a < b && b < d);
    a * d - a * (a + 1) / 2 + (b - a - 1)
}

/// Pairs in the order their rotations appear in the chart product.
fn chart_order(d: usize) -> impl DoubleEndedIterator<Item = (usize, usize)> + Clone {
    (0..d.saturating_sub(1)).flat_map(move |a| (a + 1..d).rev().map(move |b| (a, b)))
}

/// `m <- G(a,b)(theta) m`.
fn rotate_rows(m: &mut DMatrix<f64>, a: usize, b: usize, theta: f64) {
    if theta == 0.0 {
        return;
    }
    let (s, c) = theta.sin_cos();
    for j in 0..m.ncols() {
        let (ra, rb) = (m[(a, j)], m[(b, j)]);
        m[(a, j)] = c * ra - s * rb;
        m[(b, j)] = s * ra + c * rb;
    }
}

fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// A `d x d` orthogonal matrix together with chart coordinates that rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransformRecord", try_from = "TransformRecord")]
pub struct OrthogonalTransform {
    matrix: DMatrix<f64>,
    signs: Vec<f64>,
    angles: Vec<f64>,
}

impl OrthogonalTransform {
    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            signs: vec![1.0; d],
            angles: vec![0.0; pair_count(d)],
        }
    }

    /// Recovers chart coordinates of an orthogonal matrix by Givens
    /// elimination, column by column.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        if m.ncols() != d || d == 0 {
            return Err(Error::Dimension(format!("{}x{} is not a square transform", d, m.ncols())));
        }
        let err = orthogonality_error(m);
        if !(err <= 1e-8) {
            return Err(Error::InvalidArgument(format!("matrix is not orthogonal (error {err:e})")));
        }
        let mut angles = vec![0.0; pair_count(d)];
        let mut work = m.clone();
        for (a, b) in chart_order(d) {
            let theta = work[(b, a)].atan2(work[(a, a)]);
            rotate_rows(&mut work, a, b, -theta);
            angles[pair_index(a, b, d)] = wrap_angle(theta);
        }
        let signs: Vec<f64> = (0..d).map(|k| if work[(k, k)] < 0.0 { -1.0 } else { 1.0 }).collect();
        Ok(Self {
            matrix: m.clone(),
            signs,
            angles,
        })
    }

    pub fn dim(&self) -> usize {
        self.signs.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// `max |O^T O - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.matrix)
    }

    /// Angle in `[0, 2 pi)` of the first column of a 2-d transform.
    pub fn planar_angle(&self) -> Option<f64> {
        (self.dim() == 2).then(|| wrap_angle(self.matrix[(1, 0)].atan2(self.matrix[(0, 0)])))
    }
}

/// Serialized form: the matrix row-major alongside its chart coordinates.
#[derive(Serialize, Deserialize)]
struct TransformRecord {
    d: usize,
    matrix: Vec<f64>,
    signs: Vec<f64>,
    angles: Vec<f64>,
}

impl From<OrthogonalTransform> for TransformRecord {
    fn from(t: OrthogonalTransform) -> Self {
        Self {
            d: t.dim(),
            matrix: t.matrix.transpose().as_slice().to_vec(),
            signs: t.signs,
            angles: t.angles,
        }
    }
}

impl TryFrom<TransformRecord> for OrthogonalTransform {
    type Error = Error;

    fn try_from(r: TransformRecord) -> Result<Self> {
        if r.matrix.len() != r.d * r.d || r.signs.len() != r.d || r.angles.len() != pair_count(r.d) {
            return Err(Error::Format(format!("inconsistent transform record for d = {}", r.d)));
        }
        let matrix = DMatrix::from_row_slice(r.d, r.d, &r.matrix);
        if !(orthogonality_error(&matrix) <= 1e-8) {
            return Err(Error::Format("transform record is not orthogonal".into()));
        }
        Ok(Self {
            matrix,
            signs: r.signs,
            angles: r.angles,
        })
    }
}

pub fn orthogonality_error(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    (m.transpose() * m - DMatrix::<f64>::identity(d, d)).amax()
}

/// Builds the transform from a full set of chart coordinates.
pub fn full_transform(signs: &[f64], angles: &[f64]) -> Result<OrthogonalTransform> {
    let d = signs.len();
    if d == 0 {
        return Err(Error::Dimension("zero-dimensional transform".into()));
    }
    if angles.len() != pair_count(d) {
        return Err(Error::Dimension(format!(
            "{} angles for d = {d}, expected {}",
            angles.len(),
            pair_count(d)
        )));
    }
    if let Some(bad) = signs.iter().find(|s| s.abs() != 1.0) {
        return Err(Error::InvalidArgument(format!("sign {bad} is not +-1")));
    }
    Ok(OrthogonalTransform {
        matrix: chart_matrix(signs, angles),
        signs: signs.to_vec(),
        angles: angles.iter().map(|&t| wrap_angle(t)).collect(),
    })
}

fn chart_matrix(signs: &[f64], angles: &[f64]) -> DMatrix<f64> {
    let d = signs.len();
    let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(signs));
    for (a, b) in chart_order(d).rev() {
        rotate_rows(&mut m, a, b, angles[pair_index(a, b, d)]);
    }
    m
}

/// `G_{d-1}(θ_{d-1}) ... G_1(θ_1) G_0(u)` with `G_0 = diag(u, 1, ..., 1)` and
/// `G_k` rotating coordinates `0` and `k`.
pub fn givens_start(u: f64, thetas: &[f64]) -> Result<OrthogonalTransform> {
    let d = thetas.len() + 1;
    let mut signs = vec![1.0; d];
    signs[0] = u;
    let mut angles = vec![0.0; pair_count(d)];
    for (k, &t) in thetas.iter().enumerate() {
        angles[pair_index(0, k + 1, d)] = t;
    }
    full_transform(&signs, &angles)
}

/// Multistart grid: `u` in `{+1, -1}` and each angle in `{2 pi j / p}`,
/// `2 p^(d-1)` transforms, `u = +1` first and angles in odometer order.
pub fn init_grid(d: usize, p: usize) -> Result<Vec<OrthogonalTransform>> {
    if d == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!("grid needs d >= 1 and p >= 1 (got d = {d}, p = {p})")));
    }
    let per_sign = p.pow((d - 1) as u32);
    let mut out = Vec::with_capacity(2 * per_sign);
    for u in [1.0, -1.0] {
        for code in 0..per_sign {
            let mut rest = code;
            let mut thetas = vec![0.0; d - 1];
            for t in thetas.iter_mut().rev() {
                *t = TAU * (rest % p) as f64 / p as f64;
                rest /= p;
            }
            out.push(givens_start(u, &thetas)?);
        }
    }
    Ok(out)
}

/// Restricts transforms to `blockdiag(O+, O-)` with `O+` of size `d_pos`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConstraint {
    pub d_pos: usize,
    pub d_neg: usize,
}

impl BlockConstraint {
    pub fn dim(&self) -> usize {
        self.d_pos + self.d_neg
    }

    /// Whether the rotation on `(a, b)` mixes the two blocks.
    pub fn is_frozen(&self, a: usize, b: usize) -> bool {
        (a < self.d_pos) != (b < self.d_pos)
    }

    pub fn is_satisfied(&self, m: &DMatrix<f64>) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| !self.is_frozen(i, j) || m[(i, j)] == 0.0))
    }

    fn clear_off_blocks(&self, m: &mut DMatrix<f64>) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                if self.is_frozen(i, j) {
                    m[(i, j)] = 0.0;
                }
            }
        }
    }

    /// Product of the per-block multistart grids, positive block outermost.
    pub fn grid(&self, p: usize) -> Result<Vec<OrthogonalTransform>> {
        let d = self.dim();
        if self.d_pos == 0 || self.d_neg == 0 {
            return init_grid(d, p);
        }
        let pos = init_grid(self.d_pos, p)?;
        let neg = init_grid(self.d_neg, p)?;
        let mut out = Vec::with_capacity(pos.len() * neg.len());
        for gp in &pos {
            for gn in &neg {
                let mut signs = gp.signs.clone();
                signs.extend_from_slice(&gn.signs);
                let mut angles = vec![0.0; pair_count(d)];
                for a in 0..self.d_pos {
                    for b in a + 1..self.d_pos {
                        angles[pair_index(a, b, d)] = gp.angles[pair_index(a, b, self.d_pos)];
                    }
                }
                for a in 0..self.d_neg {
                    for b in a + 1..self.d_neg {
                        angles[pair_index(a + self.d_pos, b + self.d_pos, d)] =
                            gn.angles[pair_index(a, b, self.d_neg)];
                    }
                }
                let mut t = full_transform(&signs, &angles)?;
                self.clear_off_blocks(&mut t.matrix);
                out.push(t);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Objective evaluations allowed for this start.
    pub budget: usize,
    /// Edge length of the initial simplex, in radians.
    pub initial_step: f64,
    pub xtol: f64,
    pub ftol: f64,
}

impl RefineOptions {
    pub fn with_budget(budget: usize) -> Self {
        Self {
            budget,
            initial_step: 0.3,
            xtol: 1e-8,
            ftol: 1e-15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Refined {
    pub transform: OrthogonalTransform,
    pub loss: f64,
    pub start_loss: f64,
    pub evaluations: usize,
    /// The budget ran out before the descent converged.
    pub exhausted: bool,
}

/// Column sign flips tried after each simplex pass, as bit masks.
fn flip_masks(d: usize, constraint: Option<&BlockConstraint>) -> Vec<u32> {
    if d <= 4 {
        (1..(1u32 << d)).collect()
    } else {
        let mut masks = vec![1u32];
        if let Some(c) = constraint.filter(|c| c.d_pos > 0 && c.d_neg > 0) {
            masks.push(1u32 << c.d_pos);
        }
        masks
    }
}

/// Local derivative-free descent from `start`: simplex passes over the free
/// chart angles alternating with discrete column sign flips, until neither
/// improves or the budget is spent. Under a block constraint, angles that
/// would mix the blocks stay at zero.
pub fn refine<F>(
    objective: F,
    start: &OrthogonalTransform,
    constraint: Option<&BlockConstraint>,
    opts: &RefineOptions,
) -> Result<Refined>
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let d = start.dim();
    if let Some(c) = constraint {
        if c.dim() != d {
            return Err(Error::Dimension(format!("block constraint of size {} for d = {d}", c.dim())));
        }
        let mixes = chart_order(d).any(|(a, b)| c.is_frozen(a, b) && start.angles[pair_index(a, b, d)] != 0.0);
        if mixes {
            return Err(Error::InvalidArgument("start transform is not block diagonal".into()));
        }
    }
    let free: Vec<usize> = chart_order(d)
        .filter(|&(a, b)| constraint.is_none_or(|c| !c.is_frozen(a, b)))
        .map(|(a, b)| pair_index(a, b, d))
        .collect();

    let build = |signs: &[f64], angles: &[f64]| {
        let mut m = chart_matrix(signs, angles);
        if let Some(c) = constraint {
            c.clear_off_blocks(&mut m);
        }
        m
    };

    let start_loss = objective(start.matrix());
    let mut evaluations = 1usize;
    let mut signs = start.signs.clone();
    let mut angles = start.angles.clone();
    let mut best = start_loss;
    let masks = flip_masks(d, constraint);

    loop {
        let round_start = best;
        let remaining = opts.budget.saturating_sub(evaluations);
        let simplex = SimplexOptions {
            initial_step: opts.initial_step,
            xtol: opts.xtol,
            ftol: opts.ftol,
            max_evals: remaining,
        };
        let x0: Vec<f64> = free.iter().map(|&i| angles[i]).collect();
        let outcome = nelder_mead(
            |x| {
                let mut trial = angles.clone();
                for (&i, &v) in free.iter().zip(x) {
                    trial[i] = v;
                }
                objective(&build(&signs, &trial))
            },
            &x0,
            best,
            &simplex,
        );
        evaluations += outcome.evals;
        if outcome.f < best {
            best = outcome.f;
            for (&i, &v) in free.iter().zip(&outcome.x) {
                angles[i] = v;
            }
        }

        let mut flipped = false;
        for &mask in &masks {
            if evaluations >= opts.budget {
                break;
            }
            let trial: Vec<f64> = signs
                .iter()
                .enumerate()
                .map(|(k, &s)| if mask & (1 << k) != 0 { -s } else { s })
                .collect();
            let f = objective(&build(&trial, &angles));
            evaluations += 1;
            if f < best {
                best = f;
                signs = trial;
                flipped = true;
            }
        }

        if evaluations >= opts.budget {
            break;
        }
        let gained = round_start - best;
        if !flipped && gained <= 1e-9 * round_start.abs() {
            break;
        }
    }

    let exhausted = evaluations >= opts.budget;
    let transform = if best < start_loss {
        let mut t = full_transform(&signs, &angles)?;
        t.matrix = build(&signs, &angles);
        t
    } else {
        start.clone()
    };
    Ok(Refined {
        transform,
        loss: best.min(start_loss),
        start_loss,
        evaluations,
        exhausted,
    })
}

/// Coarse pass used to rank multistart candidates before full refinement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    /// Evaluations per start in the coarse pass.
    pub budget: usize,
    /// The coarse pass uses only this many leading frequencies of the sample.
    pub frequencies: usize,
    /// Number of coarse results refined with the full sample and budget.
    pub keep: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Grid resolution: angles `2 pi j / p`.
    pub p: usize,
    /// Evaluations per start; defaults to `200` per free angle.
    pub budget_per_start: Option<usize>,
    pub screening: Option<Screening>,
    pub initial_step: f64,
    pub xtol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            p: 4,
            budget_per_start: None,
            screening: Some(Screening {
                budget: 60,
                frequencies: 128,
                keep: 6,
            }),
            initial_step: 0.3,
            xtol: 1e-8,
        }
    }
}

impl SearchConfig {
    /// Refine every start with the full sample and budget.
    pub fn exhaustive(p: usize) -> Self {
        Self {
            p,
            screening: None,
            ..Self::default()
        }
    }

    fn refine_options(&self, free_angles: usize, d: usize) -> RefineOptions {
        let budget = self
            .budget_per_start
            .unwrap_or_else(|| (200 * free_angles).max((1 << d.min(4)) + 1));
        RefineOptions {
            budget,
            initial_step: self.initial_step,
            xtol: self.xtol,
            ftol: 1e-15,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StartDiagnostic {
    pub index: usize,
    pub start_loss: f64,
    /// Loss after the coarse pass (on the frequency subset), if screened.
    pub screened_loss: Option<f64>,
    /// Loss after full refinement, if this start was refined fully.
    pub final_loss: Option<f64>,
    pub evaluations: usize,
    pub exhausted: bool,
}

#[derive(Clone, Debug)]
pub struct MinimizeOutcome {
    pub transform: OrthogonalTransform,
    pub loss: f64,
    pub best_start: usize,
    pub starts: Vec<StartDiagnostic>,
    pub evaluations: usize,
    pub elapsed_ms: f64,
}

/// Draws one frequency sample and minimises the resulting loss over O from
/// every multistart transform, returning the lowest loss found.
pub fn minimize_over_o<R: Rng + ?Sized>(
    x: &PointCloud,
    y: &PointCloud,
    cfg: &LossConfig,
    search: &SearchConfig,
    constraint: Option<&BlockConstraint>,
    rng: &mut R,
) -> Result<MinimizeOutcome> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension(format!("clouds of dimension {} and {}", x.dim(), y.dim())));
    }
    let freqs = sample_frequencies(cfg, x.dim(), rng)?;
    let objective = LaplaceObjective::new(x, y, &freqs, cfg)?;
    minimize_objective(&objective, search, constraint)
}

/// Multistart minimisation of an already-built objective. Starts are
/// independent and may run in parallel; ties go to the lowest start index,
/// so the result does not depend on scheduling.
pub fn minimize_objective(
    objective: &LaplaceObjective,
    search: &SearchConfig,
    constraint: Option<&BlockConstraint>,
) -> Result<MinimizeOutcome> {
    let clock = Instant::now();
    let d = objective.dim();
    if search.p == 0 {
        return Err(Error::InvalidArgument("grid resolution p must be at least 1".into()));
    }
    let constraint = constraint.filter(|c| c.d_pos > 0 && c.d_neg > 0);
    if let Some(c) = constraint {
        if c.dim() != d {
            return Err(Error::Dimension(format!("block constraint of size {} for d = {d}", c.dim())));
        }
    }
    let starts = match constraint {
        Some(c) => c.grid(search.p)?,
        None => init_grid(d, search.p)?,
    };
    let free = chart_order(d)
        .filter(|&(a, b)| constraint.is_none_or(|c| !c.is_frozen(a, b)))
        .count();
    let full_opts = search.refine_options(free, d);
    let full = |m: &DMatrix<f64>| objective.loss(m);

    let mut diagnostics: Vec<StartDiagnostic> = starts
        .par_iter()
        .enumerate()
        .map(|(index, s)| StartDiagnostic {
            index,
            start_loss: objective.loss(s.matrix()),
            screened_loss: None,
            final_loss: None,
            evaluations: 1,
            exhausted: false,
        })
        .collect();

    // (index, candidate transform) pairs that get the full treatment
    let candidates: Vec<(usize, OrthogonalTransform)> = match search.screening {
        Some(screen) if starts.len() > screen.keep => {
            let m = screen.frequencies.min(objective.frequencies().len());
            let coarse = |mat: &DMatrix<f64>| objective.loss_prefix(mat, m);
            let coarse_opts = RefineOptions {
                budget: screen.budget,
                ..full_opts
            };
            let screened: Vec<Refined> = starts
                .par_iter()
                .map(|s| refine(coarse, s, constraint, &coarse_opts))
                .collect::<Result<_>>()?;
            for (diag, r) in diagnostics.iter_mut().zip(&screened) {
                diag.screened_loss = Some(r.loss);
                diag.evaluations += r.evaluations;
            }
            let mut ranked: Vec<usize> = (0..starts.len()).collect();
            ranked.sort_by(|&a, &b| screened[a].loss.total_cmp(&screened[b].loss).then(a.cmp(&b)));
            ranked.truncate(screen.keep);
            ranked.sort_unstable();
            ranked.into_iter().map(|i| (i, screened[i].transform.clone())).collect()
        }
        _ => starts.iter().cloned().enumerate().collect(),
    };

    let refined: Vec<(usize, Refined)> = candidates
        .par_iter()
        .map(|(i, t)| refine(full, t, constraint, &full_opts).map(|r| (*i, r)))
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, usize, OrthogonalTransform)> = None;
    let mut consider = |loss: f64, index: usize, t: &OrthogonalTransform| {
        let better = match &best {
            None => true,
            Some((bl, bi, _)) => loss < *bl || (loss == *bl && index < *bi),
        };
        if better {
            best = Some((loss, index, t.clone()));
        }
    };
    for (i, r) in &refined {
        let diag = &mut diagnostics[*i];
        diag.final_loss = Some(r.loss);
        diag.evaluations += r.evaluations;
        diag.exhausted = r.exhausted;
        consider(r.loss, *i, &r.transform);
    }
    for (diag, s) in diagnostics.iter().zip(&starts) {
        consider(diag.start_loss, diag.index, s);
    }
    let (loss, best_start, transform) = best.expect("the grid is never empty");
    let evaluations = diagnostics.iter().map(|d| d.evaluations).sum();
    debug!(
        "minimize_over_o: d = {d}, {} starts, {evaluations} evaluations, best loss {loss:.3e} from start {best_start}",
        starts.len()
    );
    Ok(MinimizeOutcome {
        transform,
        loss,
        best_start,
        starts: diagnostics,
        evaluations,
        elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
    })
}
