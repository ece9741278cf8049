//! Mini-batch SGD training over `(input, target)` pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::{self_pairs, TrainingPair};
use crate::net::{backward_accumulate, init_autoencoder, lr_at, AutoencoderParams, Gradients, LrSchedule};
use crate::vecmath::FaceVector;

/// Minimum decrease of the best epoch loss that resets the patience counter.
pub const EARLY_STOP_TOLERANCE: f64 = 1e-7;

/// Pairs per gradient work unit. Chunk sums are reduced in chunk order, so
/// the batch gradient is the same however many threads run.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    NeighborReconstruction,
    SelfReconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub patience: usize,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 100,
            schedule: LrSchedule::default(),
            seed: 0,
            patience: 20,
            mode: TrainMode::NeighborReconstruction,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_per_epoch: Vec<f64>,
    pub lr_per_epoch: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub final_lr: f64,
}

impl TrainReport {
    /// `epoch<TAB>loss<TAB>lr` lines, one per completed epoch.
    pub fn to_log(&self) -> String {
        self.loss_per_epoch
            .iter()
            .zip(&self.lr_per_epoch)
            .enumerate()
            .map(|(e, (loss, lr))| format!("{e}\t{loss}\t{lr}\n"))
            .collect()
    }
}

/// Passed to the per-epoch callback after each epoch's updates.
pub struct EpochEvent<'a> {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub params: &'a AutoencoderParams,
}

/// Trains with neighbor targets (or self targets, per `cfg.mode`).
pub fn train_nsae(
    dataset: &[FaceVector],
    pairs: &[TrainingPair],
    arch: &[usize],
    cfg: &TrainConfig,
) -> Result<(AutoencoderParams, TrainReport)> {
    train_with_callback(dataset, pairs, arch, cfg, |_| Ok(()))
}

/// The conventional autoencoder: every vector reconstructs itself.
pub fn train_baseline(
    dataset: &[FaceVector],
    arch: &[usize],
    cfg: &TrainConfig,
) -> Result<(AutoencoderParams, TrainReport)> {
    let cfg = TrainConfig {
        mode: TrainMode::SelfReconstruction,
        ..cfg.clone()
    };
    train_nsae(dataset, &self_pairs(dataset.len()), arch, &cfg)
}

/// Shuffle stream for one epoch; independent of every other epoch so a
/// resumed run sees the same order.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn validate_pairs(dataset: &[FaceVector], pairs: &[TrainingPair], input_dim: usize) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let n = dataset.len();
    for p in pairs {
        for index in [p.input, p.target] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, len: n });
            }
        }
    }
    for v in dataset {
        if v.dim() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: v.dim(),
            });
        }
    }
    Ok(())
}

/// Summed loss and mean gradient over one batch.
pub fn batch_gradient(
    params: &AutoencoderParams,
    dataset: &[FaceVector],
    batch: &[TrainingPair],
) -> Result<(f64, Gradients)> {
    let partials: Vec<(f64, Gradients)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros_like(params);
            let mut loss = 0.0;
            for p in chunk {
                loss += backward_accumulate(
                    params,
                    dataset[p.input].as_slice(),
                    dataset[p.target].as_slice(),
                    &mut g,
                )?;
            }
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;

    let mut iter = partials.into_iter();
    let (mut loss, mut grad) = iter.next().ok_or(Error::EmptyPairs)?;
    for (l, g) in iter {
        loss += l;
        grad.add_assign(&g);
    }
    grad.scale(1.0 / batch.len() as f64);
    Ok((loss, grad))
}

/// Full training loop with a callback invoked after every epoch.
pub fn train_with_callback<F>(
    dataset: &[FaceVector],
    pairs: &[TrainingPair],
    arch: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(AutoencoderParams, TrainReport)>
where
    F: FnMut(&EpochEvent<'_>) -> Result<()>,
{
    cfg.validate()?;
    let mut params = init_autoencoder(arch, cfg.seed)?;
    let owned;
    let pairs = match cfg.mode {
        TrainMode::NeighborReconstruction => pairs,
        TrainMode::SelfReconstruction => {
            owned = self_pairs(dataset.len());
            &owned[..]
        }
    };
    validate_pairs(dataset, pairs, params.input_dim())?;
    let out_dim = *arch.last().expect("validated by init");
    if out_dim != params.input_dim() {
        return Err(Error::AsymmetricArchitecture(arch.to_vec()));
    }

    let mut order: Vec<TrainingPair> = pairs.to_vec();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut lrs = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut final_lr = 0.0;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(&cfg.schedule, epoch, cfg.epochs)?;
        order.copy_from_slice(pairs);
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));

        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grad) = batch_gradient(&params, dataset, batch).map_err(|e| match e {
                Error::NonFiniteActivation { .. } => Error::NonFiniteLoss { epoch, batch: b },
                other => other,
            })?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += loss;
            params.apply_sgd(&grad, lr)?;
        }
        let epoch_loss = total / pairs.len() as f64;
        losses.push(epoch_loss);
        lrs.push(lr);
        final_lr = lr;
        on_epoch(&EpochEvent {
            epoch,
            loss: epoch_loss,
            lr,
            params: &params,
        })?;

        if epoch_loss < best - EARLY_STOP_TOLERANCE {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let epochs_run = losses.len();
    Ok((
        params,
        TrainReport {
            loss_per_epoch: losses,
            lr_per_epoch: lrs,
            epochs_run,
            stopped_early: epochs_run < cfg.epochs,
            final_lr,
        },
    ))
}
