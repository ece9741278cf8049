//! Verification trials: cosine scoring, ROC/EER, and score-level fusion.
//!
//! Threshold convention: a trial is accepted when `score >= t`. So
//! `FAR(t)` is the fraction of mismatched trials with `score >= t` and
//! `FRR(t)` the fraction of matched trials with `score < t`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{cosine_score, FaceVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Matched,
    Mismatched,
}

impl Label {
    pub fn flipped(self) -> Self {
        match self {
            Label::Matched => Label::Mismatched,
            Label::Mismatched => Label::Matched,
        }
    }

    pub fn as_digit(self) -> u8 {
        match self {
            Label::Matched => 1,
            Label::Mismatched => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Trial {
    pub a: usize,
    pub b: usize,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Self {
        TrialList { trials }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Checks every index against a set of `n` vectors.
    pub fn validate(&self, n: usize) -> Result<()> {
        for t in &self.trials {
            for index in [t.a, t.b] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, len: n });
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.trials.iter().map(|t| t.label)
    }

    pub fn with_flipped_labels(&self) -> TrialList {
        TrialList::new(
            self.trials
                .iter()
                .map(|t| Trial {
                    label: t.label.flipped(),
                    ..*t
                })
                .collect(),
        )
    }
}

/// Scores aligned with a [`TrialList`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub source: String,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ScoreSet {
            scores,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub fn score_trials(embeddings: &[FaceVector], trials: &TrialList) -> Result<ScoreSet> {
    trials.validate(embeddings.len())?;
    let scores = trials
        .trials
        .iter()
        .enumerate()
        .map(|(t, trial)| {
            cosine_score(&embeddings[trial.a], &embeddings[trial.b]).map_err(|e| match e {
                Error::ZeroVector { index } => Error::ZeroVectorInTrial {
                    trial: t,
                    index: if index == 0 { trial.a } else { trial.b },
                },
                other => other,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    ScoreSet::new(scores, "cosine")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub far: f64,
    pub frr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eer: f64,
    pub eer_threshold: f64,
    pub accuracy: f64,
    pub n_matched: usize,
    pub n_mismatched: usize,
    pub roc: Vec<RocPoint>,
}

impl EvalReport {
    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        format!(
            "EER {:.4}\nthreshold {:.6}\naccuracy {:.4}\nmatched {}\nmismatched {}\n",
            self.eer, self.eer_threshold, self.accuracy, self.n_matched, self.n_mismatched
        )
    }

    /// Machine-readable key-value document (JSON).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One past the largest score: the threshold that rejects everything.
fn reject_all_threshold(max: f64) -> f64 {
    max.next_up()
}

/// Sweeps every distinct score as a threshold (plus one above the
/// maximum) and reports the interpolated FAR/FRR crossing.
pub fn compute_eer(s: &ScoreSet, trials: &TrialList) -> Result<EvalReport> {
    if s.len() != trials.len() {
        return Err(Error::LengthMismatch {
            left: s.len(),
            right: trials.len(),
        });
    }
    let mut tagged: Vec<(f64, Label)> = s.scores.iter().copied().zip(trials.labels()).collect();
    let n_matched = tagged.iter().filter(|(_, l)| *l == Label::Matched).count();
    let n_mismatched = tagged.len() - n_matched;
    if n_matched == 0 || n_mismatched == 0 {
        return Err(Error::SingleClass);
    }
    tagged.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (m, nm) = (n_matched as f64, n_mismatched as f64);
    let mut roc = Vec::new();
    // counts of trials strictly below the current threshold
    let mut matched_below = 0usize;
    let mut mismatched_below = 0usize;
    let mut i = 0;
    while i < tagged.len() {
        let t = tagged[i].0;
        roc.push(RocPoint {
            far: (n_mismatched - mismatched_below) as f64 / nm,
            frr: matched_below as f64 / m,
            threshold: t,
        });
        while i < tagged.len() && tagged[i].0 == t {
            match tagged[i].1 {
                Label::Matched => matched_below += 1,
                Label::Mismatched => mismatched_below += 1,
            }
            i += 1;
        }
    }
    let max = tagged.last().expect("non-empty").0;
    roc.push(RocPoint {
        far: 0.0,
        frr: 1.0,
        threshold: reject_all_threshold(max),
    });

    let (eer, eer_threshold) = roc_crossing(&roc);
    let accuracy = roc
        .iter()
        .map(|p| ((1.0 - p.frr) * m + (1.0 - p.far) * nm) / (m + nm))
        .fold(0.0, f64::max);

    Ok(EvalReport {
        eer,
        eer_threshold,
        accuracy,
        n_matched,
        n_mismatched,
        roc,
    })
}

/// EER from an ROC ordered by ascending threshold (FAR starts at 1, FRR at
/// 0, ending at FAR 0 / FRR 1). Interpolates linearly between the two
/// points straddling FAR = FRR.
pub fn roc_crossing(roc: &[RocPoint]) -> (f64, f64) {
    for w in roc.windows(2) {
        let (p, q) = (w[0], w[1]);
        let dp = p.far - p.frr;
        let dq = q.far - q.frr;
        if dp == 0.0 {
            return (p.far, p.threshold);
        }
        if dp > 0.0 && dq <= 0.0 {
            if dq == 0.0 {
                return (q.far, q.threshold);
            }
            let alpha = dp / (dp - dq);
            let eer = p.far + alpha * (q.far - p.far);
            return (eer, p.threshold + alpha * (q.threshold - p.threshold));
        }
    }
    let last = roc.last().expect("non-empty roc");
    (last.far, last.threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    MinMax,
    ZScore,
    None,
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "minmax" => Ok(Normalization::MinMax),
            "zscore" => Ok(Normalization::ZScore),
            "none" => Ok(Normalization::None),
            other => Err(format!("unknown normalization `{other}` (expected minmax|zscore|none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub w1: f64,
    pub w2: f64,
    pub normalization: Normalization,
}

impl FusionConfig {
    pub fn new(w1: f64, w2: f64, normalization: Normalization) -> Result<Self> {
        let cfg = FusionConfig { w1, w2, normalization };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.w1 >= 0.0 && self.w2 >= 0.0 && (self.w1 + self.w2 - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidWeights(self.w1, self.w2))
        }
    }
}

/// Weights used for fusing the baseline with the neighbor-trained scores.
pub const FUSION_BASELINE_NSAE_THRESHOLD: (f64, f64) = (0.55, 0.45);
pub const FUSION_BASELINE_NSAE_TOPK: (f64, f64) = (0.49, 0.51);
pub const FUSION_PLDA_NSAE: (f64, f64) = (0.04, 0.96);

fn normalize(scores: &[f64], how: Normalization) -> Result<Vec<f64>> {
    match how {
        Normalization::None => Ok(scores.to_vec()),
        Normalization::MinMax => {
            let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = max - min;
            if !(range > 0.0) {
                return Err(Error::DegenerateNormalization);
            }
            Ok(scores.iter().map(|s| (s - min) / range).collect())
        }
        Normalization::ZScore => {
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) {
                return Err(Error::DegenerateNormalization);
            }
            Ok(scores.iter().map(|s| (s - mean) / std).collect())
        }
    }
}

/// `w1 * norm(s1) + w2 * norm(s2)`, trial by trial.
pub fn fuse_scores(s1: &ScoreSet, s2: &ScoreSet, cfg: &FusionConfig) -> Result<ScoreSet> {
    cfg.validate()?;
    if s1.len() != s2.len() {
        return Err(Error::LengthMismatch {
            left: s1.len(),
            right: s2.len(),
        });
    }
    if s1.is_empty() {
        return ScoreSet::new(Vec::new(), format!("fused({}, {})", s1.source, s2.source));
    }
    let n1 = normalize(&s1.scores, cfg.normalization)?;
    let n2 = normalize(&s2.scores, cfg.normalization)?;
    let fused = n1.iter().zip(&n2).map(|(a, b)| cfg.w1 * a + cfg.w2 * b).collect();
    ScoreSet::new(fused, format!("fused({}, {})", s1.source, s2.source))
}

/// Renders sweep results as a table, one row per entry in input order.
pub fn sweep_report(param_name: &str, results: &[(String, EvalReport)]) -> String {
    let width = results
        .iter()
        .map(|(label, _)| label.len())
        .chain([param_name.len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    writeln!(out, "{:<width$}  {:>8}  {:>9}", param_name, "EER(%)", "accuracy").unwrap();
    for (label, report) in results {
        writeln!(
            out,
            "{:<width$}  {:>8.2}  {:>9.4}",
            label,
            report.eer * 100.0,
            report.accuracy
        )
        .unwrap();
    }
    out
}
