//! Deterministic synthetic identity clusters.
//!
//! Each identity is a random unit direction; each sample is the centroid
//! plus isotropic Gaussian "session" noise, renormalized to unit length.
//! Gaussians come from Box-Muller over a ChaCha8 stream, so a config always
//! produces the same bits on every platform.

use std::collections::HashSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Label, Trial, TrialList};
use crate::vecmath::{l2_normalize, FaceVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    pub session_noise: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_identities < 2 {
            return Err(Error::InvalidSynthConfig("n_identities must be >= 2".into()));
        }
        if self.samples_per_identity < 2 {
            return Err(Error::InvalidSynthConfig("samples_per_identity must be >= 2".into()));
        }
        if self.dim < 2 {
            return Err(Error::InvalidSynthConfig("dim must be >= 2".into()));
        }
        if !(self.session_noise >= 0.0 && self.session_noise.is_finite()) {
            return Err(Error::InvalidSynthConfig("session_noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Vectors with identity labels. Labels exist for building trials only.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub vectors: Vec<FaceVector>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(vectors: Vec<FaceVector>, labels: Vec<usize>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: vectors.len(),
                right: labels.len(),
            });
        }
        let mut counts = std::collections::HashMap::new();
        for &l in &labels {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        if let Some((id, _)) = counts.iter().find(|(_, &c)| c < 2) {
            return Err(Error::InvalidSynthConfig(format!("identity {id} has fewer than 2 samples")));
        }
        Ok(LabeledDataset { vectors, labels })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Standard normal sampler using the Box-Muller transform.
pub struct BoxMuller<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> BoxMuller<R> {
    pub fn new(rng: R) -> Self {
        BoxMuller { rng, spare: None }
    }

    // uniform in (0, 1]
    fn open_uniform(&mut self) -> f64 {
        1.0 - (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.open_uniform();
        let u2 = self.open_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

fn unit_gaussian(g: &mut BoxMuller<ChaCha8Rng>, dim: usize) -> FaceVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| g.sample()).collect();
        if let Ok(u) = l2_normalize(&FaceVector::from_vec_unchecked(v)) {
            return u;
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut centroid_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    centroid_rng.set_stream(0);
    let mut g = BoxMuller::new(centroid_rng);
    let centroids: Vec<FaceVector> = (0..cfg.n_identities).map(|_| unit_gaussian(&mut g, cfg.dim)).collect();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let mut noise = BoxMuller::new(noise_rng);

    let mut vectors = Vec::with_capacity(cfg.n_identities * cfg.samples_per_identity);
    let mut labels = Vec::with_capacity(vectors.capacity());
    for (id, c) in centroids.iter().enumerate() {
        for _ in 0..cfg.samples_per_identity {
            let sample = loop {
                let v: Vec<f64> = c
                    .as_slice()
                    .iter()
                    .map(|x| x + cfg.session_noise * noise.sample())
                    .collect();
                if let Ok(u) = l2_normalize(&FaceVector::from_vec_unchecked(v)) {
                    break u;
                }
            };
            vectors.push(sample);
            labels.push(id);
        }
    }
    LabeledDataset::new(vectors, labels)
}

fn count_pairs(labels: &[usize]) -> (usize, usize) {
    let n = labels.len();
    let total = n * n.saturating_sub(1) / 2;
    let mut per_id = std::collections::HashMap::new();
    for &l in labels {
        *per_id.entry(l).or_insert(0usize) += 1;
    }
    let matched = per_id.values().map(|c| c * (c - 1) / 2).sum::<usize>();
    (matched, total - matched)
}

/// Samples unordered pairs `(a, b)`, `a < b`, without replacement.
///
/// Matched trials come first, then mismatched.
pub fn make_trials(
    ds: &LabeledDataset,
    n_matched: usize,
    n_mismatched: usize,
    seed: u64,
) -> Result<TrialList> {
    let (avail_m, avail_mm) = count_pairs(&ds.labels);
    if n_matched > avail_m {
        return Err(Error::InsufficientPairs {
            kind: "matched",
            requested: n_matched,
            available: avail_m,
        });
    }
    if n_mismatched > avail_mm {
        return Err(Error::InsufficientPairs {
            kind: "mismatched",
            requested: n_mismatched,
            available: avail_mm,
        });
    }

    let n = ds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // streams 0 and 1 belong to `generate`
    rng.set_stream(2);
    let mut trials = Vec::with_capacity(n_matched + n_mismatched);
    for (want, label) in [(n_matched, Label::Matched), (n_mismatched, Label::Mismatched)] {
        let available = if label == Label::Matched { avail_m } else { avail_mm };
        let mut chosen = Vec::with_capacity(want);
        if want * 4 >= available {
            // dense request: enumerate and partially shuffle
            let mut all: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|&(a, b)| (ds.labels[a] == ds.labels[b]) == (label == Label::Matched))
                .collect();
            for i in 0..want {
                let j = rng.random_range(i..all.len());
                all.swap(i, j);
            }
            all.truncate(want);
            chosen = all;
        } else {
            // sparse request: rejection sampling
            let mut seen = HashSet::with_capacity(want);
            while chosen.len() < want {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a == b {
                    continue;
                }
                let (a, b) = (a.min(b), a.max(b));
                if (ds.labels[a] == ds.labels[b]) != (label == Label::Matched) {
                    continue;
                }
                if seen.insert((a, b)) {
                    chosen.push((a, b));
                }
            }
        }
        trials.extend(chosen.into_iter().map(|(a, b)| Trial { a, b, label }));
    }
    Ok(TrialList::new(trials))
}
