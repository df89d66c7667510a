//! Minimum-cost linear assignment.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::Permutation;
use crate::points::PointCloud;

/// Exact minimum-cost assignment of rows to columns of a square cost matrix
/// by shortest augmenting paths, `O(n^3)`. Among equally short paths the
/// lowest column index wins, so an all-zero matrix gives the identity.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Permutation> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::Dimension(format!(
            "assignment needs a square cost matrix, got {}x{}",
            n,
            cost.ncols()
        )));
    }
    if let Some(v) = cost.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("cost entry {v}")));
    }
    if n == 0 {
        return Permutation::new(Vec::new());
    }

    // 1-based potentials; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        min_to.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    Permutation::new(perm)
}

pub fn assignment_cost(cost: &DMatrix<f64>, perm: &Permutation) -> f64 {
    perm.as_slice().iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}

/// `C[i, j] = |x_i - y_j|^2`, built in parallel over rows.
pub fn squared_distance_cost(x: &PointCloud, y: &PointCloud) -> Result<DMatrix<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension(format!("clouds of dimension {} and {}", x.dim(), y.dim())));
    }
    let (xm, ym) = (x.matrix(), y.matrix());
    let rows: Vec<Vec<f64>> = (0..x.n())
        .into_par_iter()
        .map(|i| {
            (0..y.n())
                .map(|j| (0..x.dim()).map(|k| (xm[(i, k)] - ym[(j, k)]).powi(2)).sum())
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(x.n(), y.n(), |i, j| rows[i][j]))
}

/// Correspondence between the rows of two clouds. For equal sizes this is a
/// permutation; otherwise every row of the larger cloud appears exactly once
/// and rows of the smaller one may repeat.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointMatching {
    pub n_x: usize,
    pub n_y: usize,
    /// `(x row, y row)` pairs, sorted by x row then y row.
    pub pairs: Vec<(usize, usize)>,
}

impl PointMatching {
    pub fn from_permutation(perm: &Permutation) -> Self {
        Self {
            n_x: perm.len(),
            n_y: perm.len(),
            pairs: perm.as_slice().iter().copied().enumerate().collect(),
        }
    }

    pub fn as_permutation(&self) -> Option<Permutation> {
        if self.n_x != self.n_y || self.pairs.len() != self.n_x {
            return None;
        }
        let mut perm = vec![usize::MAX; self.n_x];
        for &(i, j) in &self.pairs {
            perm[i] = j;
        }
        Permutation::new(perm).ok()
    }

    /// Total squared distance between matched rows.
    pub fn cost(&self, xo: &PointCloud, y: &PointCloud) -> f64 {
        let (a, b) = (xo.matrix(), y.matrix());
        self.pairs
            .iter()
            .map(|&(i, j)| (a.row(i) - b.row(j)).norm_squared())
            .sum()
    }
}

/// Matches the rows of `xo` to the rows of `y` by minimum total squared
/// distance. With unequal sizes the smaller cloud is bootstrapped up to the
/// larger size: all of its rows are kept and the shortfall is drawn with
/// replacement, so the map is total and every row of both clouds is used.
pub fn assign_points<R: Rng + ?Sized>(xo: &PointCloud, y: &PointCloud, rng: &mut R) -> Result<PointMatching> {
    if xo.n() == 0 || y.n() == 0 {
        return Err(Error::EmptyCloud);
    }
    if xo.dim() != y.dim() {
        return Err(Error::Dimension(format!("clouds of dimension {} and {}", xo.dim(), y.dim())));
    }
    if xo.n() == y.n() {
        let perm = hungarian(&squared_distance_cost(xo, y)?)?;
        return Ok(PointMatching::from_permutation(&perm));
    }

    let x_smaller = xo.n() < y.n();
    let (small, big) = if x_smaller { (xo, y) } else { (y, xo) };
    let mut rows: Vec<usize> = (0..small.n()).collect();
    rows.extend((small.n()..big.n()).map(|_| rng.random_range(0..small.n())));
    let boot = small.select_rows(&rows)?;
    // rows of the bootstrapped cloud matched to rows of the big one
    let perm = if x_smaller {
        hungarian(&squared_distance_cost(&boot, big)?)?
    } else {
        hungarian(&squared_distance_cost(big, &boot)?)?
    };
    let mut pairs: Vec<(usize, usize)> = perm
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &j)| if x_smaller { (rows[i], j) } else { (i, rows[j]) })
        .collect();
    pairs.sort_unstable();
    Ok(PointMatching {
        n_x: xo.n(),
        n_y: y.n(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_force(cost: &DMatrix<f64>) -> f64 {
        all_permutations(cost.nrows())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn zero_matrix_gives_identity() {
        for n in [1, 2, 5, 9] {
            let p = hungarian(&DMatrix::zeros(n, n)).unwrap();
            assert_eq!(p, Permutation::identity(n));
        }
    }

    #[test]
    fn diagonal_dominance() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = hungarian(&c).unwrap();
        assert_eq!(p.as_slice(), &[0, 1]);
        assert_eq!(assignment_cost(&c, &p), 2.0);
    }

    #[test]
    fn anti_diagonal() {
        let c = DMatrix::from_row_slice(3, 3, &[5.0, 5.0, 0.0, 5.0, 0.0, 5.0, 0.0, 5.0, 5.0]);
        assert_eq!(hungarian(&c).unwrap().as_slice(), &[2, 1, 0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&DMatrix::zeros(2, 3)).is_err());
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = f64::NAN;
        assert!(hungarian(&c).is_err());
        c[(0, 1)] = f64::INFINITY;
        assert!(hungarian(&c).is_err());
        assert!(hungarian(&DMatrix::zeros(0, 0)).unwrap().is_empty());
    }

    #[test]
    fn matches_brute_force_up_to_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for n in 1..=8 {
            let reps = if n == 8 { 5 } else { 30 };
            for _ in 0..reps {
                let c = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 10.0);
                let p = hungarian(&c).unwrap();
                assert!((assignment_cost(&c, &p) - brute_force(&c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn integer_costs_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let c = DMatrix::from_fn(6, 6, |_, _| rng.random_range(0..3) as f64);
            let p = hungarian(&c).unwrap();
            assert_eq!(assignment_cost(&c, &p), brute_force(&c));
        }
    }

    #[test]
    fn beats_identity_and_random_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 40;
        let c = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
        let best = assignment_cost(&c, &hungarian(&c).unwrap());
        assert!(best <= assignment_cost(&c, &Permutation::identity(n)));
        for _ in 0..100 {
            assert!(best <= assignment_cost(&c, &Permutation::random(n, &mut rng)) + 1e-12);
        }
    }

    #[test]
    fn exact_copy_is_matched_with_zero_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x = PointCloud::new(DMatrix::from_fn(30, 3, |_, _| rng.random::<f64>())).unwrap();
        let truth = Permutation::random(30, &mut rng);
        let inv = truth.inverse();
        let y = x.select_rows(inv.as_slice()).unwrap();
        let m = assign_points(&x, &y, &mut rng).unwrap();
        assert_eq!(m.as_permutation().unwrap(), truth);
        assert_eq!(m.cost(&x, &y), 0.0);
        let same = assign_points(&x, &x, &mut rng).unwrap();
        assert_eq!(same.as_permutation().unwrap(), Permutation::identity(30));
    }

    #[test]
    fn one_dimensional_hand_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let x = PointCloud::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let y = PointCloud::from_rows(&[vec![10.1], vec![0.2]]).unwrap();
        let m = assign_points(&x, &y, &mut rng).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn unequal_sizes_cover_the_larger_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let x = PointCloud::new(DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>())).unwrap();
        let y = PointCloud::new(DMatrix::from_fn(5, 2, |_, _| rng.random::<f64>())).unwrap();
        let m = assign_points(&x, &y, &mut rng).unwrap();
        assert_eq!(m.pairs.len(), 5);
        let mut ys: Vec<usize> = m.pairs.iter().map(|p| p.1).collect();
        ys.sort_unstable();
        assert_eq!(ys, vec![0, 1, 2, 3, 4]);
        for i in 0..3 {
            assert!(m.pairs.iter().any(|p| p.0 == i));
        }
        assert!(m.as_permutation().is_none());

        let back = assign_points(&y, &x, &mut rng).unwrap();
        let mut xs: Vec<usize> = back.pairs.iter().map(|p| p.0).collect();
        xs.sort_unstable();
        assert_eq!(xs, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let x = PointCloud::from_rows(&[vec![0.0]]).unwrap();
        assert!(PointCloud::from_rows(&[]).is_err());
        let y2 = PointCloud::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        assert!(assign_points(&x, &y2, &mut rng).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn row_and_column_shifts_keep_the_optimum(
                seed in any::<u64>(), n in 2usize..8, row in 0usize..8, col in 0usize..8, shift in -5.0f64..5.0
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let c = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 4.0);
                let mut shifted = c.clone();
                for j in 0..n {
                    shifted[(row % n, j)] += shift;
                }
                for i in 0..n {
                    shifted[(i, col % n)] += shift;
                }
                let p = hungarian(&c).unwrap();
                let q = hungarian(&shifted).unwrap();
                // the shift adds 2 * shift to every assignment
                prop_assert!((assignment_cost(&shifted, &q) - assignment_cost(&c, &p) - 2.0 * shift).abs() < 1e-9);
                prop_assert!((assignment_cost(&c, &q) - assignment_cost(&c, &p)).abs() < 1e-9);
            }

            #[test]
            fn optimal_against_brute_force(seed in any::<u64>(), n in 1usize..7) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let c = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
                let p = hungarian(&c).unwrap();
                prop_assert!((assignment_cost(&c, &p) - brute_force(&c)).abs() < 1e-12);
            }
        }
    }
}
