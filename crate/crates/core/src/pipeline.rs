//! End-to-end experiment wiring: data, neighbors, training, embedding,
//! scoring and evaluation with one seed.

use serde::{Deserialize, Serialize};

use crate::embed::{extract_all, EmbeddingTap};
use crate::error::Result;
use crate::eval::{compute_eer, score_trials, EvalReport, ScoreSet, TrialList};
use crate::neighbors::{
    build_training_pairs, select_threshold, select_topk, CountConvention, Fallback, SelectionMode,
    TrainingPair,
};
use crate::net::{AutoencoderParams, LrSchedule, DESK_ARCH};
use crate::synth::{generate, make_trials, LabeledDataset, SynthConfig};
use crate::trainer::{train_baseline, train_nsae, TrainConfig, TrainMode, TrainReport};
use crate::vecmath::{pairwise_cosine, FaceVector};

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub arch: Vec<usize>,
    pub train: TrainConfig,
    pub selection: SelectionMode,
    pub fallback: Fallback,
    pub count_convention: CountConvention,
    pub tap: EmbeddingTap,
    pub normalize_embeddings: bool,
    pub n_matched: usize,
    pub n_mismatched: usize,
}

/// Identity clusters in the desk preset.
pub const DESK_IDENTITIES: usize = 20;
pub const DESK_SAMPLES_PER_IDENTITY: usize = 20;
pub const DESK_DIM: usize = 64;
pub const DESK_NOISE: f64 = 0.2;
pub const DESK_EPOCHS: usize = 100;
pub const DESK_K: usize = 5;
pub const DESK_TRIALS: usize = 300;
/// Smaller than the library default. With 400 vectors the self-reconstruction
/// baseline would get only 4 updates per epoch at batch 100.
pub const DESK_BATCH: usize = 20;

/// Learning-rate range of the desk preset. Inputs are unit vectors and the
/// loss is averaged over 64 coordinates, so gradients are small.
pub const DESK_SCHEDULE: LrSchedule = LrSchedule::LogDecay { start: 30.0, end: 3.0 };

impl ExperimentConfig {
    /// The `desk` preset: small enough for CI, hard enough to separate
    /// neighbor training from self-reconstruction.
    pub fn desk(seed: u64) -> Self {
        ExperimentConfig {
            synth: SynthConfig {
                n_identities: DESK_IDENTITIES,
                samples_per_identity: DESK_SAMPLES_PER_IDENTITY,
                dim: DESK_DIM,
                session_noise: DESK_NOISE,
                seed,
            },
            arch: DESK_ARCH.to_vec(),
            train: TrainConfig {
                epochs: DESK_EPOCHS,
                batch_size: DESK_BATCH,
                schedule: DESK_SCHEDULE,
                seed,
                patience: 20,
                mode: TrainMode::NeighborReconstruction,
            },
            selection: SelectionMode::TopK(DESK_K),
            fallback: Fallback::Top1,
            count_convention: CountConvention::NTimesK,
            tap: EmbeddingTap::Bottleneck,
            normalize_embeddings: true,
            n_matched: DESK_TRIALS,
            n_mismatched: DESK_TRIALS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.train.seed = seed;
        self
    }
}

/// Outcome of training and evaluating one model.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub params: AutoencoderParams,
    pub train: TrainReport,
    pub scores: ScoreSet,
    pub eval: EvalReport,
}

/// Data and trials shared by every model in an experiment.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub data: LabeledDataset,
    pub trials: TrialList,
}

impl Workbench {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let data = generate(&cfg.synth)?;
        let trials = make_trials(&data, cfg.n_matched, cfg.n_mismatched, cfg.synth.seed)?;
        Ok(Workbench { data, trials })
    }

    /// Cosine EER of the untransformed vectors.
    pub fn raw_eval(&self) -> Result<(ScoreSet, EvalReport)> {
        let scores = score_trials(&self.data.vectors, &self.trials)?;
        let eval = compute_eer(&scores, &self.trials)?;
        Ok((scores, eval))
    }
}

/// Label-free neighbor pairs for `dataset` under `cfg`'s selection rule.
pub fn neighbor_pairs(dataset: &[FaceVector], cfg: &ExperimentConfig) -> Result<Vec<TrainingPair>> {
    let sim = pairwise_cosine(dataset)?;
    let map = match cfg.selection {
        SelectionMode::TopK(k) => select_topk(&sim, k)?.with_convention(cfg.count_convention)?,
        SelectionMode::Threshold(t) => select_threshold(&sim, t)?,
    };
    build_training_pairs(&map, cfg.fallback, Some(&sim))
}

fn evaluate(
    params: AutoencoderParams,
    train: TrainReport,
    bench: &Workbench,
    cfg: &ExperimentConfig,
    source: &str,
) -> Result<ModelRun> {
    let emb = extract_all(&params, &bench.data.vectors, cfg.tap, cfg.normalize_embeddings)?;
    let mut scores = score_trials(&emb, &bench.trials)?;
    scores.source = source.to_string();
    let eval = compute_eer(&scores, &bench.trials)?;
    Ok(ModelRun {
        params,
        train,
        scores,
        eval,
    })
}

pub fn run_nsae(bench: &Workbench, cfg: &ExperimentConfig) -> Result<ModelRun> {
    let pairs = neighbor_pairs(&bench.data.vectors, cfg)?;
    let (params, train) = train_nsae(&bench.data.vectors, &pairs, &cfg.arch, &cfg.train)?;
    evaluate(params, train, bench, cfg, &format!("nsae {}", cfg.selection))
}

pub fn run_baseline(bench: &Workbench, cfg: &ExperimentConfig) -> Result<ModelRun> {
    let (params, train) = train_baseline(&bench.data.vectors, &cfg.arch, &cfg.train)?;
    evaluate(params, train, bench, cfg, "baseline")
}
