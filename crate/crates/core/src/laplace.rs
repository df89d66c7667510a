//! Laplace-transform discrepancy between two point clouds.
//!
//! Frequencies live on the vertical line `Re(s) = gamma`. Their imaginary
//! parts are drawn from `pi(t) ∝ 1 / sqrt(gamma^2 + t^2)` on `[-R, R]`, so the
//! `1 / |s|` weight of the integrated discrepancy is absorbed by the
//! sampler and the Monte Carlo estimate is a plain average of moduli.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fastmath;
use crate::points::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Real part of every frequency.
    pub gamma: f64,
    /// Imaginary parts are truncated to `[-r, r]`.
    pub r: f64,
    /// Number of sampled frequencies.
    pub m_s: usize,
    /// Multiply by `normalizer(r, gamma)^d`, making the estimate unbiased for
    /// the integrated discrepancy. Irrelevant for minimisation.
    pub include_normalizer: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            r: 15.0,
            m_s: 500,
            include_normalizer: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma = {} must be positive", self.gamma)));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidArgument(format!("R = {} must be positive", self.r)));
        }
        if self.m_s == 0 {
            return Err(Error::InvalidArgument("m_s must be at least 1".into()));
        }
        Ok(())
    }
}

/// Normalising constant of `pi(t)`: `∫_{-R}^{R} dt / sqrt(gamma^2 + t^2)`,
/// equal to `2 asinh(R / gamma) = log(1 + 2R(R + sqrt(R^2 + gamma^2)) / gamma^2)`.
pub fn normalizer(r: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must be positive")));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("R = {r} must be non-negative")));
    }
    Ok(2.0 * (r / gamma).asinh())
}

/// Inverse CDF of `pi(t)`.
pub fn frequency_quantile(u: f64, r: f64, gamma: f64) -> f64 {
    let half_width = (r / gamma).asinh();
    let t = gamma * ((2.0 * u - 1.0) * half_width).sinh();
    t.clamp(-r, r)
}

/// CDF of `pi(t)` on `[-R, R]`.
pub fn frequency_cdf(t: f64, r: f64, gamma: f64) -> f64 {
    let t = t.clamp(-r, r);
    let half_width = (r / gamma).asinh();
    ((t / gamma).asinh() + half_width) / (2.0 * half_width)
}

/// Imaginary parts `t` of `m_s` frequency vectors, stored row-major. The
/// frequency itself is `s = gamma + i t` componentwise.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySample {
    t: Vec<f64>,
    m: usize,
    d: usize,
    gamma: f64,
    r: f64,
}

impl FrequencySample {
    pub fn from_matrix(t: &DMatrix<f64>, gamma: f64, r: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} must be positive")));
        }
        if let Some(bad) = t.iter().find(|v| !(v.abs() <= r)) {
            return Err(Error::InvalidArgument(format!("frequency {bad} outside [-{r}, {r}]")));
        }
        let (m, d) = t.shape();
        if m == 0 || d == 0 {
            return Err(Error::Dimension("empty frequency sample".into()));
        }
        let mut rows = Vec::with_capacity(m * d);
        for j in 0..m {
            rows.extend(t.row(j).iter());
        }
        Ok(Self { t: rows, m, d, gamma, r })
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.d, &self.t)
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Imaginary parts of frequency `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.t[j * self.d..(j + 1) * self.d]
    }

    pub fn frequency(&self, j: usize) -> Vec<Complex64> {
        self.row(j).iter().map(|&t| Complex64::new(self.gamma, t)).collect()
    }

    fn max_abs(&self) -> f64 {
        self.t.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Draws `cfg.m_s` frequency vectors with independent `pi`-distributed
/// coordinates.
pub fn sample_frequencies<R: Rng + ?Sized>(
    cfg: &LossConfig,
    d: usize,
    rng: &mut R,
) -> Result<FrequencySample> {
    cfg.validate()?;
    if d == 0 {
        return Err(Error::Dimension("zero-dimensional frequencies".into()));
    }
    let t = (0..cfg.m_s * d)
        .map(|_| frequency_quantile(rng.random::<f64>(), cfg.r, cfg.gamma))
        .collect();
    Ok(FrequencySample {
        t,
        m: cfg.m_s,
        d,
        gamma: cfg.gamma,
        r: cfg.r,
    })
}

/// `(1/n) sum_j exp(-<s, p_j>)`.
pub fn empirical_laplace(cloud: &PointCloud, s: &[Complex64]) -> Result<Complex64> {
    if s.len() != cloud.dim() {
        return Err(Error::Dimension(format!(
            "{}-dimensional frequency for {}-dimensional points",
            s.len(),
            cloud.dim()
        )));
    }
    let p = cloud.matrix();
    let mut acc = NeumaierComplex::default();
    for row in p.row_iter() {
        let exponent: Complex64 = row.iter().zip(s).map(|(&x, &sk)| sk * x).sum();
        acc.add((-exponent).exp());
    }
    Ok(acc.sum() / cloud.n() as f64)
}

#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Default, Clone, Copy)]
struct NeumaierComplex {
    re: Neumaier,
    im: Neumaier,
}

impl NeumaierComplex {
    fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    fn sum(&self) -> Complex64 {
        Complex64::new(self.re.sum(), self.im.sum())
    }
}

const LANES: usize = 8;
const BLOCK: usize = 32 * LANES;

/// Points laid out column by column, padded to a whole number of lanes,
/// with the per-point real-part factor `exp(-gamma * sum_k z_k) / n`.
struct PreparedCloud {
    columns: Vec<Vec<f64>>,
    weights: Vec<f64>,
    max_abs_coord_sum: f64,
}

impl PreparedCloud {
    fn new(points: &DMatrix<f64>, gamma: f64) -> Self {
        let (n, d) = points.shape();
        let padded = n.div_ceil(LANES) * LANES;
        let mut columns = vec![vec![0.0; padded]; d];
        for (k, col) in columns.iter_mut().enumerate() {
            for i in 0..n {
                col[i] = points[(i, k)];
            }
        }
        let mut weights = vec![0.0; padded];
        let inv_n = 1.0 / n as f64;
        let mut max_abs_coord_sum = 0.0f64;
        for i in 0..n {
            let mut sum = 0.0;
            let mut abs_sum = 0.0;
            for col in &columns {
                sum += col[i];
                abs_sum += col[i].abs();
            }
            weights[i] = (-gamma * sum).exp() * inv_n;
            max_abs_coord_sum = max_abs_coord_sum.max(abs_sum);
        }
        Self {
            columns,
            weights,
            max_abs_coord_sum,
        }
    }

    /// Empirical transform at frequencies `range` of `freqs`.
    fn transform(&self, freqs: &FrequencySample, range: Range<usize>, out: &mut Vec<Complex64>) {
        out.clear();
        let fast = freqs.max_abs() * self.max_abs_coord_sum <= fastmath::MAX_ARG;
        let padded = self.weights.len();
        for j in range {
            let t = freqs.row(j);
            let mut total = NeumaierComplex::default();
            for block in (0..padded).step_by(BLOCK) {
                let end = (block + BLOCK).min(padded);
                let mut re = [0.0f64; LANES];
                let mut im = [0.0f64; LANES];
                for base in (block..end).step_by(LANES) {
                    let mut phase = [0.0f64; LANES];
                    for (col, &tk) in self.columns.iter().zip(t) {
                        let c = &col[base..base + LANES];
                        for l in 0..LANES {
                            phase[l] += tk * c[l];
                        }
                    }
                    let w = &self.weights[base..base + LANES];
                    if fast {
                        for l in 0..LANES {
                            let (s, c) = fastmath::sin_cos(phase[l]);
                            re[l] += w[l] * c;
                            im[l] -= w[l] * s;
                        }
                    } else {
                        for l in 0..LANES {
                            let (s, c) = phase[l].sin_cos();
                            re[l] += w[l] * c;
                            im[l] -= w[l] * s;
                        }
                    }
                }
                total.add(Complex64::new(pairwise(&re), pairwise(&im)));
            }
            out.push(total.sum());
        }
    }
}

#[inline]
fn pairwise(v: &[f64; LANES]) -> f64 {
    let a = [v[0] + v[4], v[1] + v[5], v[2] + v[6], v[3] + v[7]];
    (a[0] + a[2]) + (a[1] + a[3])
}

/// The sample loss as a function of the transform, with the target cloud's
/// transform and the frequency sample fixed.
pub struct LaplaceObjective {
    x: DMatrix<f64>,
    freqs: FrequencySample,
    target: Vec<Complex64>,
    scale: f64,
}

impl LaplaceObjective {
    pub fn new(x: &PointCloud, y: &PointCloud, freqs: &FrequencySample, cfg: &LossConfig) -> Result<Self> {
        cfg.validate()?;
        if x.dim() != y.dim() || x.dim() != freqs.dim() {
            return Err(Error::Dimension(format!(
                "clouds of dimension {} and {} with {}-dimensional frequencies",
                x.dim(),
                y.dim(),
                freqs.dim()
            )));
        }
        let mut target = Vec::with_capacity(freqs.len());
        PreparedCloud::new(y.matrix(), freqs.gamma()).transform(freqs, 0..freqs.len(), &mut target);
        let scale = if cfg.include_normalizer {
            normalizer(freqs.r(), freqs.gamma())?.powi(x.dim() as i32)
        } else {
            1.0
        };
        Ok(Self {
            x: x.matrix().clone(),
            freqs: freqs.clone(),
            target,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn frequencies(&self) -> &FrequencySample {
        &self.freqs
    }

    /// Per-frequency contributions `scale * |L_XO(s_j) - L_Y(s_j)|` for the
    /// first `m` frequencies.
    pub fn terms_prefix(&self, o: &DMatrix<f64>, m: usize) -> Vec<f64> {
        let m = m.min(self.freqs.len());
        let z = &self.x * o;
        let prepared = PreparedCloud::new(&z, self.freqs.gamma());
        let mut values = Vec::with_capacity(m);
        prepared.transform(&self.freqs, 0..m, &mut values);
        values
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b).norm() * self.scale)
            .collect()
    }

    /// Loss restricted to the first `m` frequencies of the sample.
    pub fn loss_prefix(&self, o: &DMatrix<f64>, m: usize) -> f64 {
        let terms = self.terms_prefix(o, m);
        let mut acc = Neumaier::default();
        for v in &terms {
            acc.add(*v);
        }
        acc.sum() / terms.len() as f64
    }

    pub fn loss(&self, o: &DMatrix<f64>) -> f64 {
        self.loss_prefix(o, self.freqs.len())
    }
}

fn check_transform(o: &DMatrix<f64>, d: usize) -> Result<()> {
    if o.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "{}x{} transform for {d}-dimensional points",
            o.nrows(),
            o.ncols()
        )));
    }
    Ok(())
}

/// `(1/m_s) sum_j |L_XO(s_j) - L_Y(s_j)|`, times `normalizer^d` when
/// `cfg.include_normalizer` is set.
pub fn sample_loss(
    x: &PointCloud,
    y: &PointCloud,
    o: &DMatrix<f64>,
    freqs: &FrequencySample,
    cfg: &LossConfig,
) -> Result<f64> {
    check_transform(o, x.dim())?;
    Ok(LaplaceObjective::new(x, y, freqs, cfg)?.loss(o))
}

/// The individual Monte Carlo terms averaged by [`sample_loss`].
pub fn sample_loss_terms(
    x: &PointCloud,
    y: &PointCloud,
    o: &DMatrix<f64>,
    freqs: &FrequencySample,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    check_transform(o, x.dim())?;
    Ok(LaplaceObjective::new(x, y, freqs, cfg)?.terms_prefix(o, freqs.len()))
}

/// Tensor-product trapezoid approximation of
/// `∫_{[-R,R]^d} |L_XO(s) - L_Y(s)| / prod_k sqrt(gamma^2 + t_k^2) dt`
/// with `s = gamma + i t`. Only `d <= 2` is supported.
pub fn quadrature_loss(
    x: &PointCloud,
    y: &PointCloud,
    o: &DMatrix<f64>,
    r: f64,
    gamma: f64,
    grid_points_per_dim: usize,
) -> Result<f64> {
    let d = x.dim();
    if d > 2 {
        return Err(Error::Dimension(format!("quadrature supports d <= 2, got {d}")));
    }
    if y.dim() != d {
        return Err(Error::Dimension("clouds of different dimension".into()));
    }
    check_transform(o, d)?;
    if grid_points_per_dim < 2 {
        return Err(Error::InvalidArgument("need at least two grid points".into()));
    }
    if !(gamma > 0.0) || !(r > 0.0) {
        return Err(Error::InvalidArgument("gamma and R must be positive".into()));
    }
    let xo = x.transform(o)?;
    let g = grid_points_per_dim;
    let h = 2.0 * r / (g - 1) as f64;
    let nodes: Vec<(f64, f64)> = (0..g)
        .map(|i| {
            let t = -r + i as f64 * h;
            let w = if i == 0 || i == g - 1 { h / 2.0 } else { h };
            (t, w / (gamma * gamma + t * t).sqrt())
        })
        .collect();
    let integrand = |ts: &[f64]| -> Result<f64> {
        let s: Vec<Complex64> = ts.iter().map(|&t| Complex64::new(gamma, t)).collect();
        Ok((empirical_laplace(&xo, &s)? - empirical_laplace(y, &s)?).norm())
    };
    let mut acc = Neumaier::default();
    if d == 1 {
        for &(t, w) in &nodes {
            acc.add(w * integrand(&[t])?);
        }
    } else {
        for &(t1, w1) in &nodes {
            for &(t2, w2) in &nodes {
                acc.add(w1 * w2 * integrand(&[t1, t2])?);
            }
        }
    }
    Ok(acc.sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn cloud(rows: &[&[f64]]) -> PointCloud {
        PointCloud::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn normalizer_values() {
        assert_eq!(normalizer(0.0, 2.0).unwrap(), 0.0);
        // Simpson oracle for ∫ dt / sqrt(1 + t^2)
        let q1 = simpson(|t| 1.0 / (1.0 + t * t).sqrt(), -1.0, 1.0, 2000);
        let q15 = simpson(|t| 1.0 / (1.0 + t * t).sqrt(), -15.0, 15.0, 20000);
        assert!((q1 - 1.762747).abs() < 1e-6);
        assert!((q15 - 6.804613).abs() < 1e-6);
        assert!((normalizer(1.0, 1.0).unwrap() - q1).abs() < 1e-9);
        assert!((normalizer(15.0, 1.0).unwrap() - q15).abs() < 1e-9);
        // closed form with the square root
        let (r, g) = (15.0f64, 0.7f64);
        let log_form = (1.0 + 2.0 * r * (r + (r * r + g * g).sqrt()) / (g * g)).ln();
        assert!((normalizer(r, g).unwrap() - log_form).abs() < 1e-12);
        assert!(normalizer(1.0, 0.0).is_err());
        assert!(normalizer(1.0, -1.0).is_err());
    }

    #[test]
    fn quantile_endpoints() {
        assert_eq!(frequency_quantile(0.5, 15.0, 1.0), 0.0);
        assert_eq!(frequency_quantile(1.0, 15.0, 1.0), 15.0);
        assert_eq!(frequency_quantile(0.0, 15.0, 1.0), -15.0);
        for u in [0.1, 0.37, 0.9] {
            assert!((frequency_cdf(frequency_quantile(u, 4.0, 0.5), 4.0, 0.5) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_transforms() {
        let origin = cloud(&[&[0.0, 0.0]]);
        let s = [Complex64::new(1.0, 3.0), Complex64::new(1.0, -7.0)];
        assert_eq!(empirical_laplace(&origin, &s).unwrap(), Complex64::new(1.0, 0.0));
        let one = cloud(&[&[1.0]]);
        let v = empirical_laplace(&one, &[Complex64::new(1.0, 0.0)]).unwrap();
        assert!((v.re - (-1.0f64).exp()).abs() < 1e-15 && v.im == 0.0);
        let two = cloud(&[&[0.0], &[2.0f64.ln()]]);
        let v = empirical_laplace(&two, &[Complex64::new(1.0, 0.0)]).unwrap();
        assert!((v.re - 0.75).abs() < 1e-15);
        assert!(empirical_laplace(&two, &s).is_err());
    }

    #[test]
    fn batched_kernel_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts = DMatrix::from_fn(37, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let p = PointCloud::new(pts).unwrap();
        let cfg = LossConfig { m_s: 50, ..LossConfig::default() };
        let f = sample_frequencies(&cfg, 3, &mut rng).unwrap();
        let prepared = PreparedCloud::new(p.matrix(), cfg.gamma);
        let mut out = Vec::new();
        prepared.transform(&f, 0..f.len(), &mut out);
        for (j, v) in out.iter().enumerate() {
            let direct = empirical_laplace(&p, &f.frequency(j)).unwrap();
            assert!((v - direct).norm() < 1e-13, "{j}: {v} vs {direct}");
        }
    }

    #[test]
    fn identical_and_reflected_clouds_have_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = LossConfig::default();
        let x = PointCloud::new(DMatrix::from_fn(20, 2, |_, _| rng.random::<f64>())).unwrap();
        let shuffled = x.select_rows(&[19, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 0, 1, 2]).unwrap();
        let f = sample_frequencies(&cfg, 2, &mut rng).unwrap();
        let loss = sample_loss(&x, &shuffled, &DMatrix::identity(2, 2), &f, &cfg).unwrap();
        assert!(loss < 1e-15, "{loss}");

        let f1 = sample_frequencies(&cfg, 1, &mut rng).unwrap();
        let a = cloud(&[&[1.0]]);
        let b = cloud(&[&[-1.0]]);
        let flip = DMatrix::from_element(1, 1, -1.0);
        assert_eq!(sample_loss(&a, &b, &flip, &f1, &cfg).unwrap(), 0.0);
        assert!(sample_loss(&a, &b, &DMatrix::identity(1, 1), &f1, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = LossConfig::default();
        let a = cloud(&[&[1.0, 0.0]]);
        let b = cloud(&[&[1.0]]);
        let f = sample_frequencies(&cfg, 2, &mut rng).unwrap();
        assert!(sample_loss(&a, &b, &DMatrix::identity(2, 2), &f, &cfg).is_err());
        assert!(sample_loss(&a, &a, &DMatrix::identity(3, 3), &f, &cfg).is_err());
        let x3 = cloud(&[&[1.0, 0.0, 0.0]]);
        assert!(quadrature_loss(&x3, &x3, &DMatrix::identity(3, 3), 1.0, 1.0, 10).is_err());
        assert!(PointCloud::new(DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn quadrature_is_zero_for_identical_clouds() {
        let x = cloud(&[&[0.3, 0.1], &[-0.2, 0.5]]);
        let q = quadrature_loss(&x, &x, &DMatrix::identity(2, 2), 5.0, 1.0, 41).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn rotated_cloud_loss_vanishes_at_the_rotation_and_agrees_with_quadrature_elsewhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = PointCloud::new(DMatrix::from_fn(100, 2, |_, k| {
            let u: f64 = rng.random();
            if k == 0 { u } else { u * u }
        }))
        .unwrap();
        let th = 30f64.to_radians();
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let y = x.transform(&rot).unwrap();
        let cfg = LossConfig { m_s: 20_000, include_normalizer: true, ..LossConfig::default() };
        let f = sample_frequencies(&cfg, 2, &mut rng).unwrap();
        assert!(sample_loss(&x, &y, &rot, &f, &cfg).unwrap() < 1e-12);

        let terms = sample_loss_terms(&x, &y, &DMatrix::identity(2, 2), &f, &cfg).unwrap();
        let m = terms.len() as f64;
        let mean = terms.iter().sum::<f64>() / m;
        let sd = (terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        let quad = quadrature_loss(&x, &y, &DMatrix::identity(2, 2), cfg.r, cfg.gamma, 401).unwrap();
        assert!((mean - quad).abs() <= 3.0 * sd / m.sqrt(), "mc {mean} quad {quad} se {}", sd / m.sqrt());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud {
            PointCloud::new(DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 2.0 - 1.0)).unwrap()
        }

        fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
            let g = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
            g.qr().q()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn loss_is_nonnegative(seed in any::<u64>(), d in 1usize..4, n in 1usize..30) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let cfg = LossConfig { m_s: 64, ..LossConfig::default() };
                let x = random_cloud(&mut rng, n, d);
                let y = random_cloud(&mut rng, n + 3, d);
                let o = random_orthogonal(&mut rng, d);
                let f = sample_frequencies(&cfg, d, &mut rng).unwrap();
                prop_assert!(sample_loss(&x, &y, &o, &f, &cfg).unwrap() >= 0.0);
            }

            #[test]
            fn row_order_does_not_matter(seed in any::<u64>(), d in 1usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let cfg = LossConfig { m_s: 64, ..LossConfig::default() };
                let x = random_cloud(&mut rng, 41, d);
                let y = random_cloud(&mut rng, 29, d);
                let o = random_orthogonal(&mut rng, d);
                let f = sample_frequencies(&cfg, d, &mut rng).unwrap();
                let base = sample_loss(&x, &y, &o, &f, &cfg).unwrap();
                let mut px: Vec<usize> = (0..41).collect();
                let mut py: Vec<usize> = (0..29).collect();
                rand::seq::SliceRandom::shuffle(px.as_mut_slice(), &mut rng);
                rand::seq::SliceRandom::shuffle(py.as_mut_slice(), &mut rng);
                let shuffled = sample_loss(&x.select_rows(&px).unwrap(), &y.select_rows(&py).unwrap(), &o, &f, &cfg).unwrap();
                prop_assert!((base - shuffled).abs() <= 1e-12, "{} vs {}", base, shuffled);
                // same rows in the same order: bitwise identical
                let again = sample_loss(&x.select_rows(&(0..41).collect::<Vec<_>>()).unwrap(), &y, &o, &f, &cfg).unwrap();
                prop_assert_eq!(base.to_bits(), again.to_bits());
            }

            #[test]
            fn transform_composes(seed in any::<u64>(), d in 1usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let cfg = LossConfig { m_s: 64, ..LossConfig::default() };
                let x = random_cloud(&mut rng, 33, d);
                let y = random_cloud(&mut rng, 33, d);
                let o = random_orthogonal(&mut rng, d);
                let f = sample_frequencies(&cfg, d, &mut rng).unwrap();
                let direct = sample_loss(&x, &y, &o, &f, &cfg).unwrap();
                let composed = sample_loss(&x.transform(&o).unwrap(), &y, &DMatrix::identity(d, d), &f, &cfg).unwrap();
                prop_assert!((direct - composed).abs() <= 1e-12);
            }

            #[test]
            fn transform_is_bounded(seed in any::<u64>(), d in 1usize..5, gamma in 0.1f64..3.0, t in -15.0f64..15.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random_cloud(&mut rng, 17, d);
                let s: Vec<Complex64> = (0..d).map(|k| Complex64::new(gamma, t * (k as f64 + 1.0) / d as f64)).collect();
                let v = empirical_laplace(&x, &s).unwrap();
                prop_assert!(v.norm() <= (gamma * (d as f64).sqrt() * x.bound()).exp() * (1.0 + 1e-12));
            }

            #[test]
            fn frequencies_stay_in_range(seed in any::<u64>(), r in 0.5f64..30.0, gamma in 0.1f64..5.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let cfg = LossConfig { gamma, r, m_s: 200, include_normalizer: false };
                let f = sample_frequencies(&cfg, 3, &mut rng).unwrap();
                prop_assert!(f.to_matrix().iter().all(|t| t.abs() <= r));
            }
        }
    }
}
