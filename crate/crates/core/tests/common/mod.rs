//! Brute-force reference implementations and seeded fixtures.
//!
//! Nothing here calls the library's numeric code; the oracles only read
//! raw parameter arrays and plain slices.

#![allow(dead_code)]

use nsae::net::{Activation, AutoencoderParams};
use nsae::vecmath::SimilarityMatrix;
use nsae::FaceVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Vectors with coordinates uniform in [-1, 1].
pub fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_vectors(n: usize, d: usize, seed: u64) -> Vec<FaceVector> {
    random_rows(n, d, seed)
        .into_iter()
        .map(|v| FaceVector::new(v).unwrap())
        .collect()
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn oracle_pairwise(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = oracle_cosine(&rows[i], &rows[j]);
        }
    }
    out
}

pub fn sim_rows(sim: &SimilarityMatrix) -> Vec<Vec<f64>> {
    (0..sim.n()).map(|i| sim.row(i).to_vec()).collect()
}

/// Candidates of row `i`, fully sorted by score desc then index asc.
fn ranked(sim: &[Vec<f64>], i: usize) -> Vec<usize> {
    let mut js: Vec<usize> = (0..sim.len()).filter(|&j| j != i).collect();
    // insertion sort: no library ordering helpers involved
    for a in 1..js.len() {
        let mut b = a;
        while b > 0 {
            let (x, y) = (js[b - 1], js[b]);
            let before = sim[i][y] > sim[i][x] || (sim[i][y] == sim[i][x] && y < x);
            if !before {
                break;
            }
            js.swap(b - 1, b);
            b -= 1;
        }
    }
    js
}

pub fn oracle_topk(sim: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..sim.len())
        .map(|i| ranked(sim, i).into_iter().take(k).collect())
        .collect()
}

pub fn oracle_threshold(sim: &[Vec<f64>], t: f64) -> Vec<Vec<usize>> {
    (0..sim.len())
        .map(|i| ranked(sim, i).into_iter().filter(|&j| sim[i][j] >= t).collect())
        .collect()
}

/// Scalar-loop forward pass over the raw parameter arrays; returns every
/// layer's activations, input excluded.
pub fn oracle_activations(p: &AutoencoderParams, x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::new();
    let mut cur = x.to_vec();
    for layer in p.layers() {
        let mut next = vec![0.0; layer.fan_out];
        for o in 0..layer.fan_out {
            let mut z = layer.biases[o];
            for i in 0..layer.fan_in {
                z += layer.weights[o * layer.fan_in + i] * cur[i];
            }
            next[o] = match layer.activation {
                Activation::Relu => {
                    if z > 0.0 {
                        z
                    } else {
                        0.0
                    }
                }
                Activation::Linear => z,
            };
        }
        acts.push(next.clone());
        cur = next;
    }
    acts
}

/// `(bottleneck, reconstruction)`; the bottleneck is the narrowest layer.
pub fn oracle_forward(p: &AutoencoderParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let acts = oracle_activations(p, x);
    let sizes = p.layer_sizes();
    let mut narrow = 1;
    for l in 1..sizes.len() {
        if sizes[l] < sizes[narrow] {
            narrow = l;
        }
    }
    (acts[narrow - 1].clone(), acts.last().unwrap().clone())
}

pub fn oracle_mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s / a.len() as f64
}

/// EER by enumerating every threshold: each distinct score plus one above
/// the maximum. FAR counts mismatched scores `>= t`, FRR matched `< t`.
/// The EER is where the (FAR, FRR) polyline meets FAR = FRR.
pub fn oracle_eer(scores: &[f64], matched: &[bool]) -> f64 {
    let nm = matched.iter().filter(|&&m| m).count() as f64;
    let nmm = matched.iter().filter(|&&m| !m).count() as f64;
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    ts.push(f64::INFINITY);
    let points: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let mut fa = 0.0;
            let mut fr = 0.0;
            for (s, &m) in scores.iter().zip(matched) {
                if m && *s < t {
                    fr += 1.0;
                }
                if !m && *s >= t {
                    fa += 1.0;
                }
            }
            (fa / nmm, fr / nm)
        })
        .collect();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let da = a.0 - a.1;
        let db = b.0 - b.1;
        if da == 0.0 {
            return a.0;
        }
        if da > 0.0 && db <= 0.0 {
            // solve a + s (b - a) on the diagonal
            let s = da / (da - db);
            return a.0 + s * (b.0 - a.0);
        }
    }
    points.last().unwrap().0
}

/// Seeded score sets with both classes present.
pub fn random_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut r = rng(seed);
    let mut labels: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
    labels[0] = true;
    labels[n - 1] = false;
    let scores = labels
        .iter()
        .map(|&m| r.random_range(-1.0..1.0) + if m { 0.4 } else { 0.0 })
        .collect();
    (scores, labels)
}
