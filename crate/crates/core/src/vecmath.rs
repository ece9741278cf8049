//! Dense vector primitives and cosine-similarity kernels.
//!
//! Everything here accumulates in `f64`. Zero-norm vectors are rejected
//! rather than scored, since a silent zero would distort neighbor selection.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// A single finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVector(Vec<f64>);

impl FaceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(FaceVector(values))
    }

    /// Builds a vector without validation. Callers guarantee the invariants.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        FaceVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl AsRef<[f64]> for FaceVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FaceVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FaceVector::new(values)
    }
}

/// Builds a dataset from raw rows, reporting the first offending row.
pub fn dataset_from_rows(rows: Vec<Vec<f64>>) -> Result<Vec<FaceVector>> {
    rows.into_iter()
        .enumerate()
        .map(|(index, row)| {
            FaceVector::new(row).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite { index },
                other => other,
            })
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Cosine similarity `a·b / (|a| |b|)`.
pub fn cosine_score(a: &FaceVector, b: &FaceVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let na = a.norm();
    if na < ZERO_NORM {
        return Err(Error::ZeroVector { index: 0 });
    }
    let nb = b.norm();
    if nb < ZERO_NORM {
        return Err(Error::ZeroVector { index: 1 });
    }
    Ok(cosine_from_parts(dot(a.as_slice(), b.as_slice()), na, nb))
}

pub fn l2_normalize(a: &FaceVector) -> Result<FaceVector> {
    let n = a.norm();
    if n < ZERO_NORM {
        return Err(Error::ZeroVector { index: 0 });
    }
    Ok(FaceVector(a.0.iter().map(|v| v / n).collect()))
}

/// Dense symmetric `n x n` matrix of cosine scores, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    scores: Vec<f64>,
}

impl SimilarityMatrix {
    /// Validates a user-supplied matrix: square, symmetric and within [-1, 1].
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::TooFewVectors(0));
        }
        let mut scores = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            scores.extend_from_slice(row);
        }
        for i in 0..n {
            for j in 0..n {
                let s = scores[i * n + j];
                if !s.is_finite() || !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&s) {
                    return Err(Error::ShapeMismatch(format!(
                        "similarity ({i}, {j}) = {s} outside [-1, 1]"
                    )));
                }
                if (s - scores[j * n + i]).abs() > 1e-9 {
                    return Err(Error::ShapeMismatch(format!(
                        "similarity matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { n, scores })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n..(i + 1) * self.n]
    }
}

fn check_dataset(dataset: &[FaceVector]) -> Result<Vec<f64>> {
    let dim = dataset.first().map(FaceVector::dim).unwrap_or(0);
    dataset
        .iter()
        .enumerate()
        .map(|(index, v)| {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
            let n = v.norm();
            if n < ZERO_NORM {
                return Err(Error::ZeroVector { index });
            }
            Ok(n)
        })
        .collect()
}

/// All-pairs cosine matrix. Rows are computed in parallel; each entry is
/// evaluated exactly as [`cosine_score`] would, so the result does not
/// depend on the number of worker threads.
pub fn pairwise_cosine(dataset: &[FaceVector]) -> Result<SimilarityMatrix> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::TooFewVectors(0));
    }
    let norms = check_dataset(dataset)?;

    // upper triangle, diagonal included
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = dataset[i].as_slice();
            (i..n)
                .map(|j| cosine_from_parts(dot(a, dataset[j].as_slice()), norms[i], norms[j]))
                .collect()
        })
        .collect();

    let mut scores = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &s) in row.iter().enumerate() {
            let j = i + off;
            scores[i * n + j] = s;
            scores[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix { n, scores })
}
