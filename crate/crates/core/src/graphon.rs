//! Low-rank graphons, latent positions and random graph generation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real function on `[0, 1]` used as one term of an eigen-expansion.
#[derive(Clone)]
pub struct Eigenfunction {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Eigenfunction {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for Eigenfunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Eigenfunction").field(&self.name).finish()
    }
}

/// Closed-form kernels.
#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    /// Erdős–Rényi: `f(x, y) = p`.
    Constant(f64),
    /// `f(x, y) = sin(cycles * pi * (x + y + 1)) / 2 + 1/2`.
    SineOfSum { cycles: f64 },
}

/// A symmetric kernel on `[0, 1]^2`.
#[derive(Clone, Debug)]
pub enum GraphonSpec {
    /// Stochastic block model with `within.len()` equal-width communities.
    Sbm { within: Vec<f64>, between: f64 },
    Formula(Formula),
    /// `f(x, y) = sum_k eigenvalues[k] * xi_k(x) * xi_k(y)`.
    EigenSystem {
        eigenvalues: Vec<f64>,
        eigenfunctions: Vec<Eigenfunction>,
    },
}

impl GraphonSpec {
    /// Four equal communities, within-community probability `i/5` for
    /// community `i`, between-community probability `0.3/5`.
    pub fn graphon1() -> Self {
        GraphonSpec::Sbm {
            within: vec![0.2, 0.4, 0.6, 0.8],
            between: 0.3 / 5.0,
        }
    }

    /// `f(x, y) = sin(5 pi (x + y + 1)) / 2 + 0.5`.
    pub fn graphon2() -> Self {
        GraphonSpec::Formula(Formula::SineOfSum { cycles: 5.0 })
    }

    /// Rank-4 kernel with a repeated eigenvalue. The eigenfunctions are taken
    /// as written (not renormalised).
    pub fn graphon3() -> Self {
        GraphonSpec::EigenSystem {
            eigenvalues: vec![0.167, 0.05, 0.05, 0.05],
            eigenfunctions: vec![
                Eigenfunction::new("1", |_| 1.0),
                Eigenfunction::new("2x-1", |x| 2.0 * x - 1.0),
                Eigenfunction::new("1-4|x-1/2|", |x| 1.0 - 4.0 * (x - 0.5).abs()),
                Eigenfunction::new("2*1[(1/8,3/8)u(5/8,7/8)]-1", |x| {
                    let inside = (x > 0.125 && x < 0.375) || (x > 0.625 && x < 0.875);
                    if inside {
                        1.0
                    } else {
                        -1.0
                    }
                }),
            ],
        }
    }

    pub fn erdos_renyi(p: f64) -> Self {
        GraphonSpec::Formula(Formula::Constant(p))
    }

    /// Rank of the kernel, when it is known in closed form.
    pub fn rank(&self) -> Option<usize> {
        match self {
            GraphonSpec::Sbm { within, .. } => Some(within.len()),
            GraphonSpec::Formula(Formula::Constant(p)) => Some(usize::from(*p != 0.0)),
            // constant plus sin(a + b) = sin a cos b + cos a sin b
            GraphonSpec::Formula(Formula::SineOfSum { .. }) => Some(3),
            GraphonSpec::EigenSystem { eigenvalues, .. } => {
                Some(eigenvalues.iter().filter(|l| **l != 0.0).count())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GraphonSpec::Sbm { within, between } => {
                if within.is_empty() {
                    return Err(Error::InvalidArgument("SBM needs at least one community".into()));
                }
                if within.iter().chain(std::iter::once(between)).any(|p| !p.is_finite()) {
                    return Err(Error::NonFinite("SBM probability".into()));
                }
            }
            GraphonSpec::Formula(Formula::Constant(p)) if !p.is_finite() => {
                return Err(Error::NonFinite("constant graphon".into()));
            }
            GraphonSpec::Formula(_) => {}
            GraphonSpec::EigenSystem {
                eigenvalues,
                eigenfunctions,
            } => {
                if eigenvalues.len() != eigenfunctions.len() {
                    return Err(Error::Dimension(format!(
                        "{} eigenvalues but {} eigenfunctions",
                        eigenvalues.len(),
                        eigenfunctions.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Evaluates `f(x, y)`. The value is not clipped.
pub fn eval_graphon(spec: &GraphonSpec, x: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain { x, y });
    }
    Ok(eval_unchecked(spec, x, y))
}

fn eval_unchecked(spec: &GraphonSpec, x: f64, y: f64) -> f64 {
    match spec {
        GraphonSpec::Sbm { within, between } => {
            let k = within.len();
            let community = |t: f64| ((t * k as f64) as usize).min(k - 1);
            let (a, b) = (community(x), community(y));
            if a == b {
                within[a]
            } else {
                *between
            }
        }
        GraphonSpec::Formula(Formula::Constant(p)) => *p,
        GraphonSpec::Formula(Formula::SineOfSum { cycles }) => {
            (cycles * PI * (x + y + 1.0)).sin() / 2.0 + 0.5
        }
        GraphonSpec::EigenSystem {
            eigenvalues,
            eigenfunctions,
        } => eigenvalues
            .iter()
            .zip(eigenfunctions)
            .map(|(l, xi)| l * (xi.eval(x) * xi.eval(y)))
            .sum(),
    }
}

/// Edge-probability matrix `W_ij = f(u_i, u_j)` together with its latents.
#[derive(Clone, Debug)]
pub struct ProbMatrix {
    pub w: DMatrix<f64>,
    pub latents: Vec<f64>,
}

impl ProbMatrix {
    pub fn n(&self) -> usize {
        self.latents.len()
    }
}

pub fn sample_latents<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

pub fn build_prob_matrix(spec: &GraphonSpec, latents: &[f64]) -> Result<ProbMatrix> {
    spec.validate()?;
    if let Some(&bad) = latents.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(Error::Domain { x: bad, y: bad });
    }
    let n = latents.len();
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = eval_unchecked(spec, latents[i], latents[j]);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(ProbMatrix {
        w,
        latents: latents.to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// `A_ij ~ Bernoulli(W_ij)`.
    Bernoulli,
    /// `A = W + E` with `E_ij ~ N(0, sigma^2)` on the upper triangle.
    Gaussian { sigma: f64 },
}

#[derive(Clone, Debug)]
pub struct Adjacency {
    pub a: DMatrix<f64>,
    pub mode: NoiseMode,
}

impl Adjacency {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Draws one symmetric realisation. Entries with `i <= j` (diagonal
/// included) are independent and mirrored below the diagonal.
pub fn sample_adjacency<R: Rng + ?Sized>(
    w: &DMatrix<f64>,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<Adjacency> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::Dimension(format!("{}x{} probability matrix", n, w.ncols())));
    }
    let mut a = DMatrix::zeros(n, n);
    match mode {
        NoiseMode::Bernoulli => {
            let mut clipped = 0usize;
            for j in 0..n {
                for i in 0..=j {
                    let p = w[(i, j)];
                    if !(0.0..=1.0).contains(&p) {
                        clipped += 1;
                    }
                    let p = p.clamp(0.0, 1.0);
                    let v = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            if clipped > 0 {
                warn!("{clipped} edge probabilities outside [0, 1] were clipped");
            }
        }
        NoiseMode::Gaussian { sigma } => {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidArgument(format!("noise sigma {sigma}")));
            }
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::InvalidArgument(format!("noise sigma {sigma}: {e}")))?;
            for j in 0..n {
                for i in 0..=j {
                    let v = w[(i, j)] + normal.sample(rng);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
        }
    }
    Ok(Adjacency { a, mode })
}

/// A bijection on `0..n`; `perm[i]` is the image of `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument(format!(
                    "not a permutation of 0..{n} (offending image {p})"
                )));
            }
        }
        Ok(Self(perm))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Uniform random permutation (Fisher–Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Self(perm)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    #[inline]
    pub fn image(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Self(inv)
    }

    /// `self` after `first`: `i -> self[first[i]]`.
    pub fn compose(&self, first: &Permutation) -> Self {
        Self(first.0.iter().map(|&i| self.0[i]).collect())
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

pub fn sample_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Permutation> {
    if n == 0 {
        return Err(Error::InvalidArgument("permutation of zero elements".into()));
    }
    Ok(Permutation::random(n, rng))
}

/// `P A P^T` as an index remap: `out[perm[i], perm[j]] = a[i, j]`.
pub fn apply_permutation(a: &DMatrix<f64>, perm: &Permutation) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || perm.len() != n {
        return Err(Error::Dimension(format!(
            "{}x{} matrix with a permutation of length {}",
            n,
            a.ncols(),
            perm.len()
        )));
    }
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let pj = perm.image(j);
        for i in 0..n {
            out[(perm.image(i), pj)] = a[(i, j)];
        }
    }
    Ok(out)
}
