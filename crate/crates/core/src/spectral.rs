//! Adjacency spectral embedding.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointCloud;

const SYMMETRY_TOL: f64 = 1e-10;
const ZERO_EIGENVALUE_TOL: f64 = 1e-12;

pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    let scale = m.amax().max(1.0);
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix, ordered by decreasing
/// `|lambda|` (ties: positive first).
///
/// Eigenvectors are unit columns; each is signed so that its entry sum (or,
/// when that vanishes, its sum of cubes) is non-negative, which makes the
/// output independent of any relabelling of the rows.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    frobenius: f64,
}

pub fn spectrum(m: &DMatrix<f64>) -> Result<Spectrum> {
    check_symmetric(m)?;
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        lb.abs().total_cmp(&la.abs()).then(lb.total_cmp(&la))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let mut orient: f64 = v.sum();
        if orient.abs() < 1e-10 {
            orient = v.iter().map(|x| x * x * x).sum();
        }
        let flip = if orient < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(c, &(v * flip));
    }
    Ok(Spectrum {
        values,
        vectors,
        frobenius: m.norm(),
    })
}

impl Spectrum {
    fn is_zero(&self, lambda: f64) -> bool {
        lambda.abs() <= ZERO_EIGENVALUE_TOL * self.frobenius
    }

    /// Indices of the `d_pos` largest positive and `d_neg` most negative
    /// non-zero eigenvalues, or `None` if there are not enough of them.
    fn select(&self, d_pos: usize, d_neg: usize) -> Option<(Vec<usize>, Vec<usize>)> {
        let nonzero = (0..self.values.len()).filter(|&k| !self.is_zero(self.values[k]));
        let (pos, neg): (Vec<usize>, Vec<usize>) = nonzero.partition(|&k| self.values[k] > 0.0);
        (pos.len() >= d_pos && neg.len() >= d_neg).then(|| (pos[..d_pos].to_vec(), neg[..d_neg].to_vec()))
    }

    /// Total `|lambda|` captured by the signature `(d_pos, d_neg)`.
    pub fn captured(&self, d_pos: usize, d_neg: usize) -> Option<f64> {
        self.select(d_pos, d_neg)
            .map(|(p, q)| p.iter().chain(&q).map(|&k| self.values[k].abs()).sum())
    }

    /// Embeds into the `d` eigen-directions of largest `|lambda|` (fewer if
    /// some of them are numerically zero).
    pub fn embed(&self, d: usize) -> Result<Embedding> {
        if d == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be at least 1".into()));
        }
        let n = self.values.len();
        if d > n {
            return Err(Error::InvalidArgument(format!("{d} dimensions for a {n}x{n} matrix")));
        }
        let kept: Vec<usize> = (0..d).filter(|&k| !self.is_zero(self.values[k])).collect();
        if kept.is_empty() {
            return Err(Error::DegenerateSpectrum);
        }
        if kept.len() < d {
            warn!(
                "{} of the top {} eigenvalues are numerically zero; embedding in {} dimensions",
                d - kept.len(),
                d,
                kept.len()
            );
        }
        let d_pos = kept.iter().filter(|&&k| self.values[k] > 0.0).count();
        self.embed_signed(d_pos, kept.len() - d_pos)
    }

    /// Embeds into the `d_pos` largest positive and the `d_neg` most negative
    /// eigen-directions.
    pub fn embed_signed(&self, d_pos: usize, d_neg: usize) -> Result<Embedding> {
        if d_pos + d_neg == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be at least 1".into()));
        }
        let (pos, neg) = self.select(d_pos, d_neg).ok_or_else(|| {
            Error::InvalidArgument(format!("spectrum has too few non-zero eigenvalues for signature ({d_pos}, {d_neg})"))
        })?;
        let columns: Vec<usize> = pos.iter().chain(&neg).copied().collect();
        let n = self.vectors.nrows();
        let mut positions = DMatrix::zeros(n, columns.len());
        for (c, &k) in columns.iter().enumerate() {
            positions.set_column(c, &(self.vectors.column(k) * self.values[k].abs().sqrt()));
        }
        Ok(Embedding {
            positions,
            eigenvalues: columns.iter().map(|&k| self.values[k]).collect(),
            d_pos,
            d_neg,
        })
    }
}

/// The `k` eigenpairs of largest `|lambda|`, ordered by decreasing `|lambda|`,
/// with eigenvectors oriented as in [`Spectrum`].
pub fn sym_eigs_topk(m: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if k == 0 || k > n {
        check_symmetric(m)?;
        return Err(Error::InvalidArgument(format!("k = {k} eigenpairs of a {n}x{n} matrix")));
    }
    let s = spectrum(m)?;
    Ok((s.values[..k].to_vec(), s.vectors.columns(0, k).into_owned()))
}

/// Signature `(d_pos, d_neg)` with `d_pos + d_neg = d` capturing the most
/// total `|lambda|` over both spectra. When both spectra individually prefer
/// the same signature, this is that signature.
pub fn joint_signature(s1: &Spectrum, s2: &Spectrum, d: usize) -> Result<(usize, usize)> {
    (0..=d)
        .filter_map(|p| Some(((p, d - p), s1.captured(p, d - p)? + s2.captured(p, d - p)?)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0 .0.cmp(&a.0 .0)))
        .map(|(sig, _)| sig)
        .ok_or(Error::DegenerateSpectrum)
}

/// Latent-position estimate `X` with `A ~ X J X^T`.
#[derive(Clone, Debug)]
pub struct Embedding {
    /// `n x d`; column `k` is `sqrt(|lambda_k|) v_k`.
    pub positions: DMatrix<f64>,
    /// Retained eigenvalues in column order (positives first, each sign
    /// block by decreasing magnitude).
    pub eigenvalues: Vec<f64>,
    pub d_pos: usize,
    pub d_neg: usize,
}

/// JSON sidecar written next to a serialized embedding matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub signs: Vec<i8>,
    pub d_pos: usize,
    pub d_neg: usize,
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.d_pos + self.d_neg
    }

    /// Diagonal of `J`: `+1` for the first `d_pos` columns, then `-1`.
    pub fn signs(&self) -> Vec<f64> {
        let mut s = vec![1.0; self.d_pos];
        s.resize(self.dim(), -1.0);
        s
    }

    pub fn cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.positions.clone())
    }

    /// Largest row norm, the uniform bound on the latent positions.
    pub fn row_bound(&self) -> f64 {
        self.positions.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    /// `X J X^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut xj = self.positions.clone();
        for (k, s) in self.signs().into_iter().enumerate() {
            xj.column_mut(k).scale_mut(s);
        }
        &xj * self.positions.transpose()
    }

    pub fn meta(&self) -> EmbeddingMeta {
        EmbeddingMeta {
            signs: self.signs().iter().map(|&s| s as i8).collect(),
            d_pos: self.d_pos,
            d_neg: self.d_neg,
            eigenvalues: self.eigenvalues.clone(),
        }
    }
}

/// Embeds a symmetric matrix into `d` dimensions (fewer if some of the top
/// `d` eigenvalues are numerically zero).
pub fn embed(a: &DMatrix<f64>, d: usize) -> Result<Embedding> {
    if d == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be at least 1".into()));
    }
    spectrum(a)?.embed(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{apply_permutation, build_prob_matrix, sample_latents, GraphonSpec, Permutation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn identity_top_two() {
        let (vals, vecs) = sym_eigs_topk(&DMatrix::identity(3, 3), 2).unwrap();
        assert_eq!(vals, vec![1.0, 1.0]);
        let gram = vecs.transpose() * &vecs;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_ordered_by_magnitude() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -5.0, 1.0]));
        let (vals, _) = sym_eigs_topk(&m, 2).unwrap();
        assert_eq!(vals, vec![-5.0, 3.0]);
    }

    #[test]
    fn full_decomposition_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_symmetric(6, &mut rng);
        let (vals, vecs) = sym_eigs_topk(&m, 6).unwrap();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals.clone()));
        let rebuilt = &vecs * lambda * vecs.transpose();
        assert!((rebuilt - &m).amax() < 1e-8);
        for (k, l) in vals.iter().enumerate() {
            let v = vecs.column(k);
            assert!((&m * v - v * *l).norm() <= 1e-8 * m.norm());
        }
    }

    #[test]
    fn signed_selection_and_joint_signature() {
        let diag = |v: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v));
        let s1 = spectrum(&diag(&[5.0, -4.0, 3.0, -1.0])).unwrap();
        let s2 = spectrum(&diag(&[5.0, 4.1, -4.0, 3.0])).unwrap();
        assert_eq!((s1.embed(2).unwrap().d_pos, s1.embed(2).unwrap().d_neg), (1, 1));
        assert_eq!((s2.embed(2).unwrap().d_pos, s2.embed(2).unwrap().d_neg), (2, 0));
        // (2, 0) captures 8 + 9.1, (1, 1) captures 9 + 9, (0, 2) is unavailable
        assert_eq!(s1.captured(2, 0), Some(8.0));
        assert_eq!(s2.captured(0, 2), None);
        assert_eq!(joint_signature(&s1, &s2, 2).unwrap(), (1, 1));
        let e = s2.embed_signed(1, 1).unwrap();
        assert_eq!(e.eigenvalues, vec![5.0, -4.0]);
        assert!(s2.embed_signed(0, 2).is_err());
        // agreeing spectra keep their common signature
        assert_eq!(joint_signature(&s1, &s1, 3).unwrap(), (2, 1));
    }

    #[test]
    fn rejects_bad_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(matches!(sym_eigs_topk(&m, 1), Err(Error::NotSymmetric { .. })));
        assert!(sym_eigs_topk(&DMatrix::identity(2, 2), 3).is_err());
        assert!(sym_eigs_topk(&DMatrix::identity(2, 2), 0).is_err());
        assert!(matches!(embed(&DMatrix::zeros(3, 3), 2), Err(Error::DegenerateSpectrum)));
    }

    #[test]
    fn half_ones_embedding() {
        let a = DMatrix::from_element(2, 2, 0.5);
        let e = embed(&a, 1).unwrap();
        assert_eq!((e.d_pos, e.d_neg), (1, 0));
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        for i in 0..2 {
            assert!((e.positions[(i, 0)].abs() - 0.5f64.sqrt()).abs() < 1e-12);
        }
        let neg = embed(&(-a), 1).unwrap();
        assert_eq!(neg.signs(), vec![-1.0]);
    }

    #[test]
    fn zero_eigenvalues_are_dropped() {
        let a = DMatrix::from_element(4, 4, 0.5);
        let e = embed(&a, 3).unwrap();
        assert_eq!(e.dim(), 1);
    }

    #[test]
    fn exact_rank_graphon1_is_reconstructed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = sample_latents(400, &mut rng);
        let w = build_prob_matrix(&GraphonSpec::graphon1(), &u).unwrap().w;
        let e = embed(&w, 4).unwrap();
        assert_eq!((e.d_pos, e.d_neg), (4, 0));
        assert!((e.reconstruct() - &w).norm() <= 1e-8);
        let gram = e.positions.transpose() * &e.positions;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(gram[(i, j)].abs() < 1e-8);
                }
            }
        }
        assert!(e.row_bound() <= 1.0 + 1e-9);
    }

    #[test]
    fn indefinite_signature_is_positives_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = sample_latents(150, &mut rng);
        let w = build_prob_matrix(&GraphonSpec::graphon2(), &u).unwrap().w;
        let e = embed(&w, 3).unwrap();
        assert_eq!(e.d_pos + e.d_neg, 3);
        assert!(e.d_neg >= 1);
        assert!(e.eigenvalues[..e.d_pos].iter().all(|&l| l > 0.0));
        assert!(e.eigenvalues[e.d_pos..].iter().all(|&l| l < 0.0));
        assert!((e.reconstruct() - &w).norm() <= 1e-8 * w.norm());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn truncation_error_is_optimal(seed in any::<u64>(), n in 3usize..20, d in 1usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_symmetric(n, &mut rng);
                let e = embed(&a, d).unwrap();
                let err = (e.reconstruct() - &a).norm();
                // Eckart–Young via singular values: independent of the eigensolver
                let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
                sv.sort_by(|x, y| y.total_cmp(x));
                let best: f64 = sv[e.dim()..].iter().map(|s| s * s).sum::<f64>().sqrt();
                prop_assert!((err - best).abs() <= 1e-8 * (1.0 + a.norm()), "{} vs {}", err, best);
            }

            #[test]
            fn permutation_equivariance(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = sample_latents(60, &mut rng);
                let w = build_prob_matrix(&GraphonSpec::graphon1(), &u).unwrap().w;
                let p = Permutation::random(60, &mut rng);
                let e1 = embed(&w, 4).unwrap();
                let e2 = embed(&apply_permutation(&w, &p).unwrap(), 4).unwrap();
                prop_assert_eq!(e1.signs(), e2.signs());
                // node i of the original sits at row p[i] of the relabelled graph
                let aligned = e2.positions.select_rows(p.as_slice());
                let cross = e1.positions.transpose() * &aligned;
                let own = e1.positions.transpose() * &e1.positions;
                let mut s1: Vec<f64> = cross.singular_values().iter().copied().collect();
                let mut s2: Vec<f64> = own.singular_values().iter().copied().collect();
                s1.sort_by(f64::total_cmp);
                s2.sort_by(f64::total_cmp);
                for (a, b) in s1.iter().zip(&s2) {
                    prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b));
                }
            }
        }
    }
}
