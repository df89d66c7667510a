use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n x d` matrix of points, one per row, with the largest row norm recorded
/// at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    bound: f64,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::EmptyCloud);
        }
        if points.ncols() == 0 {
            return Err(Error::Dimension("points have zero coordinates".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinate".into()));
        }
        let bound = points
            .row_iter()
            .map(|r| r.norm())
            .fold(0.0f64, f64::max);
        Ok(Self { points, bound })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged point rows".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |i, k| rows[i][k]))
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.points
    }

    /// Largest Euclidean row norm.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `P O` for a `d x d` matrix `O`.
    pub fn transform(&self, o: &DMatrix<f64>) -> Result<Self> {
        if o.nrows() != self.dim() || o.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "{}x{} transform for {}-dimensional points",
                o.nrows(),
                o.ncols(),
                self.dim()
            )));
        }
        Self::new(&self.points * o)
    }

    /// Rows in the given order; indices may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::Dimension(format!("row {bad} of a {}-point cloud", self.n())));
        }
        Self::new(self.points.select_rows(rows))
    }
}
