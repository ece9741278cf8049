//! Label-free neighbor selection and expansion into training pairs.
//!
//! Neither selection mode accepts identity labels; candidates are ranked
//! purely by cosine score with the diagonal masked out. Within a row,
//! neighbors are ordered by descending score with ties broken by ascending
//! index, which keeps the output identical across runs and platforms.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::SimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionMode {
    TopK(usize),
    Threshold(f64),
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMode::TopK(k) => write!(f, "topk k={k}"),
            SelectionMode::Threshold(t) => write!(f, "threshold t={t}"),
        }
    }
}

/// What to do with a row that selected no neighbors (threshold mode only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Emit a conventional `(i, i)` pair.
    SelfReconstruction,
    /// Emit the single best-scoring neighbor regardless of the threshold.
    #[default]
    Top1,
}

impl std::str::FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "self" => Ok(Fallback::SelfReconstruction),
            "top1" => Ok(Fallback::Top1),
            other => Err(format!("unknown fallback `{other}` (expected self|top1)")),
        }
    }
}

/// How many neighbors per row end up in the training set under top-k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountConvention {
    /// Keep all `k` selected neighbors: `n * k` pairs.
    #[default]
    NTimesK,
    /// Select `k`, then drop the last-ranked one: `n * (k - 1)` pairs.
    NTimesKMinus1,
}

/// Per-vector neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMap {
    neighbors: Vec<Vec<usize>>,
    mode: SelectionMode,
}

impl NeighborMap {
    /// Builds a map from explicit lists, checking indices and self-loops.
    pub fn new(neighbors: Vec<Vec<usize>>, mode: SelectionMode) -> Result<Self> {
        let n = neighbors.len();
        for (i, row) in neighbors.iter().enumerate() {
            for &j in row {
                if j == i {
                    return Err(Error::InvalidNeighborMap(format!("row {i} lists itself")));
                }
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, len: n });
                }
            }
            let mut seen = row.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != row.len() {
                return Err(Error::InvalidNeighborMap(format!("row {i} repeats a neighbor")));
            }
        }
        Ok(NeighborMap { neighbors, mode })
    }

    pub fn mode(&self) -> SelectionMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// Applies a pair-count convention to a top-k map.
    pub fn with_convention(self, convention: CountConvention) -> Result<Self> {
        match (convention, self.mode) {
            (CountConvention::NTimesK, _) => Ok(self),
            (CountConvention::NTimesKMinus1, SelectionMode::TopK(k)) => {
                if k < 2 {
                    return Err(Error::InvalidK(k));
                }
                let neighbors = self
                    .neighbors
                    .into_iter()
                    .map(|mut row| {
                        row.pop();
                        row
                    })
                    .collect();
                Ok(NeighborMap {
                    neighbors,
                    mode: SelectionMode::TopK(k - 1),
                })
            }
            (CountConvention::NTimesKMinus1, SelectionMode::Threshold(_)) => Err(
                Error::InvalidNeighborMap("the k-1 convention only applies to top-k maps".into()),
            ),
        }
    }
}

/// One `(input, target)` training example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrainingPair {
    pub input: usize,
    pub target: usize,
    /// Set when the pair is a self-reconstruction pair, i.e. `input == target`.
    pub is_self: bool,
}

impl TrainingPair {
    pub fn new(input: usize, target: usize) -> Result<Self> {
        if input == target {
            return Err(Error::InvalidNeighborMap(format!(
                "neighbor pair ({input}, {target}) is a self pair"
            )));
        }
        Ok(TrainingPair {
            input,
            target,
            is_self: false,
        })
    }

    pub fn self_pair(index: usize) -> Self {
        TrainingPair {
            input: index,
            target: index,
            is_self: true,
        }
    }
}

/// Self-reconstruction pairs `(i, i)` for `i in 0..n`.
pub fn self_pairs(n: usize) -> Vec<TrainingPair> {
    (0..n).map(TrainingPair::self_pair).collect()
}

// descending score, ascending index
fn rank(row: &[f64], a: usize, b: usize) -> Ordering {
    row[b].total_cmp(&row[a]).then(a.cmp(&b))
}

fn ranked_candidates(sim: &SimilarityMatrix, i: usize) -> Vec<usize> {
    let row = sim.row(i);
    let mut idx: Vec<usize> = (0..sim.n()).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| rank(row, a, b));
    idx
}

pub fn select_topk(sim: &SimilarityMatrix, k: usize) -> Result<NeighborMap> {
    if k < 1 {
        return Err(Error::InvalidK(k));
    }
    let n = sim.n();
    if n < 2 {
        return Err(Error::TooFewVectors(n));
    }
    let take = k.min(n - 1);
    let neighbors = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = sim.row(i);
            let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            if take < idx.len() {
                idx.select_nth_unstable_by(take - 1, |&a, &b| rank(row, a, b));
                idx.truncate(take);
            }
            idx.sort_by(|&a, &b| rank(row, a, b));
            idx
        })
        .collect();
    Ok(NeighborMap {
        neighbors,
        mode: SelectionMode::TopK(k),
    })
}

pub fn select_threshold(sim: &SimilarityMatrix, t: f64) -> Result<NeighborMap> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::InvalidThreshold(t));
    }
    let neighbors = (0..sim.n())
        .into_par_iter()
        .map(|i| {
            let row = sim.row(i);
            let mut idx: Vec<usize> = (0..sim.n()).filter(|&j| j != i && row[j] >= t).collect();
            idx.sort_by(|&a, &b| rank(row, a, b));
            idx
        })
        .collect();
    Ok(NeighborMap {
        neighbors,
        mode: SelectionMode::Threshold(t),
    })
}

/// Expands a neighbor map into `(input, target)` pairs in row order.
///
/// Empty rows are resolved by `fallback`; the top-1 fallback needs `sim`.
pub fn build_training_pairs(
    map: &NeighborMap,
    fallback: Fallback,
    sim: Option<&SimilarityMatrix>,
) -> Result<Vec<TrainingPair>> {
    let n = map.len();
    if let Some(sim) = sim {
        if sim.n() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: sim.n(),
            });
        }
    }
    let mut pairs = Vec::with_capacity(map.rows().iter().map(Vec::len).sum());
    for (i, row) in map.rows().iter().enumerate() {
        if !row.is_empty() {
            for &j in row {
                pairs.push(TrainingPair::new(i, j)?);
            }
            continue;
        }
        match fallback {
            Fallback::SelfReconstruction => pairs.push(TrainingPair::self_pair(i)),
            Fallback::Top1 => {
                let sim = sim.ok_or(Error::MissingSimilarity { row: i })?;
                match ranked_candidates(sim, i).first() {
                    Some(&j) => pairs.push(TrainingPair::new(i, j)?),
                    None => return Err(Error::TooFewVectors(n)),
                }
            }
        }
    }
    Ok(pairs)
}
