//! Unseeded low-rank graph matching.
//!
//! Two graphs drawn from the same low-rank graphon are embedded spectrally,
//! which turns graph matching into registering two point clouds that differ
//! by an unknown orthogonal transform and an unknown row order. The
//! transform is estimated by minimising an importance-sampled discrepancy
//! between the clouds' empirical Laplace transforms, which does not depend
//! on the row order at all. A single linear assignment then recovers the
//! node correspondence.

pub mod assignment;
pub mod error;
pub mod experiment;
mod fastmath;
pub mod graphon;
pub mod io;
pub mod laplace;
pub mod ortho;
pub mod pipeline;
pub mod points;
mod simplex;
pub mod spectral;

pub use error::{Error, Result};
pub use graphon::{Adjacency, GraphonSpec, NoiseMode, Permutation, ProbMatrix};
pub use laplace::{FrequencySample, LossConfig};
pub use ortho::{BlockConstraint, OrthogonalTransform, SearchConfig};
pub use pipeline::MatchResult;
pub use points::PointCloud;
pub use spectral::Embedding;
