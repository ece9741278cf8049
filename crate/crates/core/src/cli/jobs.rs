//! Fully resolved subcommand jobs.
//!
//! A job holds every value a subcommand needs, with all defaults filled
//! in. The same job serialized into a run manifest is what `replay` runs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::write_atomic;
use super::CliError;
use crate::embed::{extract_all, EmbeddingTap};
use crate::error::{Error, Result};
use crate::eval::{compute_eer, fuse_scores, score_trials, sweep_report, EvalReport, FusionConfig, TrialList};
use crate::io;
use crate::neighbors::{
    build_training_pairs, select_threshold, select_topk, CountConvention, Fallback, NeighborMap, SelectionMode,
    TrainingPair,
};
use crate::net::validate_sizes;
use crate::synth::{generate, make_trials, SynthConfig};
use crate::trainer::{train_with_callback, TrainConfig, TrainMode};
use crate::vecmath::{pairwise_cosine, FaceVector, SimilarityMatrix};

/// `<path>.<ext>` next to `path`.
pub fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Checkpoint written after `epoch` epochs.
pub fn epoch_checkpoint_path(output: &Path, epoch: usize) -> PathBuf {
    sidecar(output, &format!("epoch{epoch:04}"))
}

/// What a job read and wrote, and what it wants printed.
#[derive(Debug, Default)]
pub struct Executed {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub stdout: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "config", rename_all = "snake_case")]
pub enum Job {
    Synth(SynthJob),
    Neighbors(NeighborsJob),
    Train(TrainJob),
    Embed(EmbedJob),
    Score(ScoreJob),
    Eval(EvalJob),
    Fuse(FuseJob),
    Sweep(SweepJob),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Synth(_) => "synth",
            Job::Neighbors(_) => "neighbors",
            Job::Train(_) => "train",
            Job::Embed(_) => "embed",
            Job::Score(_) => "score",
            Job::Eval(_) => "eval",
            Job::Fuse(_) => "fuse",
            Job::Sweep(_) => "sweep",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Synth(j) => Some(j.synth.seed),
            Job::Train(j) => Some(j.train.seed),
            Job::Sweep(j) => Some(j.train.seed),
            _ => None,
        }
    }

    /// Where the manifest goes; `None` when the job writes no file.
    pub fn primary_output(&self) -> Option<&Path> {
        match self {
            Job::Synth(j) => Some(&j.output),
            Job::Neighbors(j) => Some(&j.output),
            Job::Train(j) => Some(&j.output),
            Job::Embed(j) => Some(&j.output),
            Job::Score(j) => Some(&j.output),
            Job::Eval(j) => j.output.as_deref(),
            Job::Fuse(j) => Some(&j.output),
            Job::Sweep(j) => Some(&j.output),
        }
    }

    pub fn config_json(&self) -> serde_json::Value {
        let v = serde_json::to_value(self).expect("jobs serialize");
        v["config"].clone()
    }

    pub fn from_manifest(subcommand: &str, config: &serde_json::Value) -> std::result::Result<Job, CliError> {
        let tagged = serde_json::json!({ "subcommand": subcommand, "config": config });
        serde_json::from_value(tagged).map_err(|e| CliError::Usage(format!("manifest config: {e}")))
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> std::result::Result<(), CliError> {
        let usage = |e: Error| CliError::Usage(e.to_string());
        match self {
            Job::Synth(j) => {
                j.synth.validate().map_err(usage)?;
                let per = j.synth.samples_per_identity;
                let ids = j.synth.n_identities;
                let matched = ids * per * (per - 1) / 2;
                let n = ids * per;
                let mismatched = n * (n - 1) / 2 - matched;
                if j.n_matched > matched || j.n_mismatched > mismatched {
                    return Err(CliError::Usage(format!(
                        "--matched/--mismatched: at most {matched}/{mismatched} distinct pairs exist"
                    )));
                }
            }
            Job::Neighbors(j) => {
                validate_selection(j.selection).map_err(usage)?;
                if j.convention == CountConvention::NTimesKMinus1 && !matches!(j.selection, SelectionMode::TopK(k) if k >= 2)
                {
                    return Err(CliError::Usage("--drop-last needs --k >= 2".into()));
                }
            }
            Job::Train(j) => {
                validate_sizes(&j.arch).map_err(usage)?;
                j.train.validate().map_err(usage)?;
                if j.checkpoint_every == 0 {
                    return Err(CliError::Usage("--checkpoint-every must be >= 1".into()));
                }
                match (j.train.mode, &j.neighbors) {
                    (TrainMode::NeighborReconstruction, None) => {
                        return Err(CliError::Usage("train needs --neighbors or --baseline".into()))
                    }
                    (TrainMode::SelfReconstruction, Some(_)) => {
                        return Err(CliError::Usage("--baseline and --neighbors are mutually exclusive".into()))
                    }
                    _ => {}
                }
            }
            Job::Fuse(j) => {
                j.fusion.validate().map_err(usage)?;
                if j.inputs.len() != 2 {
                    return Err(CliError::Usage("fuse needs exactly two --input files".into()));
                }
            }
            Job::Sweep(j) => {
                validate_sizes(&j.arch).map_err(usage)?;
                j.train.validate().map_err(usage)?;
                if j.values.is_empty() {
                    return Err(CliError::Usage("sweep needs --k-list or --threshold-list".into()));
                }
                for mode in j.values.modes() {
                    validate_selection(mode).map_err(usage)?;
                    if j.convention == CountConvention::NTimesKMinus1 && !matches!(mode, SelectionMode::TopK(k) if k >= 2) {
                        return Err(CliError::Usage("--drop-last needs every k >= 2".into()));
                    }
                }
            }
            Job::Embed(_) | Job::Score(_) | Job::Eval(_) => {}
        }
        Ok(())
    }

    pub fn execute(&self) -> std::result::Result<Executed, CliError> {
        let seed = self.seed();
        match self {
            Job::Synth(j) => j.execute(),
            Job::Neighbors(j) => j.execute(),
            Job::Train(j) => j.execute(),
            Job::Embed(j) => j.execute(),
            Job::Score(j) => j.execute(),
            Job::Eval(j) => j.execute(),
            Job::Fuse(j) => j.execute(),
            Job::Sweep(j) => j.execute(),
        }
        .map_err(|(stage, e)| CliError::from_lib(stage, seed, e))
    }
}

type StageResult<T> = std::result::Result<T, (&'static str, Error)>;

trait Stage<T> {
    fn at(self, stage: &'static str) -> StageResult<T>;
}

impl<T> Stage<T> for Result<T> {
    fn at(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|e| (stage, e))
    }
}

fn validate_selection(mode: SelectionMode) -> Result<()> {
    match mode {
        SelectionMode::TopK(0) => Err(Error::InvalidK(0)),
        SelectionMode::Threshold(t) if !(-1.0..=1.0).contains(&t) => Err(Error::InvalidThreshold(t)),
        _ => Ok(()),
    }
}

fn select(sim: &SimilarityMatrix, mode: SelectionMode, convention: CountConvention) -> Result<NeighborMap> {
    match mode {
        SelectionMode::TopK(k) => select_topk(sim, k)?.with_convention(convention),
        SelectionMode::Threshold(t) => select_threshold(sim, t),
    }
}

/// Expands a map into pairs, computing similarities only when a Top1
/// fallback actually needs them.
fn pairs_for(map: &NeighborMap, fallback: Fallback, data: &[FaceVector]) -> Result<Vec<TrainingPair>> {
    if map.len() != data.len() {
        return Err(Error::InvalidNeighborMap(format!(
            "map has {} rows but the dataset has {} vectors",
            map.len(),
            data.len()
        )));
    }
    let needs_sim = fallback == Fallback::Top1 && map.rows().iter().any(|r| r.is_empty());
    let sim = if needs_sim { Some(pairwise_cosine(data)?) } else { None };
    build_training_pairs(map, fallback, sim.as_ref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthJob {
    pub output: PathBuf,
    pub synth: SynthConfig,
    pub n_matched: usize,
    pub n_mismatched: usize,
}

impl SynthJob {
    pub fn labels_path(&self) -> PathBuf {
        sidecar(&self.output, "labels")
    }

    pub fn trials_path(&self) -> PathBuf {
        sidecar(&self.output, "trials")
    }

    fn execute(&self) -> StageResult<Executed> {
        let ds = generate(&self.synth).at("synth")?;
        let trials = make_trials(&ds, self.n_matched, self.n_mismatched, self.synth.seed).at("trials")?;
        io::save_vectors(&self.output, &ds.vectors).at("write")?;
        io::save_labels(&self.labels_path(), &ds.labels).at("write")?;
        io::save_trials(&self.trials_path(), &trials).at("write")?;
        Ok(Executed {
            inputs: vec![],
            outputs: vec![self.output.clone(), self.labels_path(), self.trials_path()],
            stdout: format!(
                "{} vectors ({} identities, dim {}), {} trials\n",
                ds.len(),
                self.synth.n_identities,
                self.synth.dim,
                trials.len()
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborsJob {
    pub input: PathBuf,
    pub output: PathBuf,
    pub selection: SelectionMode,
    pub convention: CountConvention,
}

impl NeighborsJob {
    fn execute(&self) -> StageResult<Executed> {
        let data = io::load_vectors(&self.input).at("read")?;
        let sim = pairwise_cosine(&data).at("similarity")?;
        let map = select(&sim, self.selection, self.convention).at("neighbors")?;
        io::save_neighbor_map(&self.output, &map).at("write")?;
        let total: usize = map.rows().iter().map(Vec::len).sum();
        let empty = map.rows().iter().filter(|r| r.is_empty()).count();
        Ok(Executed {
            inputs: vec![self.input.clone()],
            outputs: vec![self.output.clone()],
            stdout: format!("{} rows, {total} neighbors, {empty} empty rows\n", map.len()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub input: PathBuf,
    pub neighbors: Option<PathBuf>,
    pub output: PathBuf,
    pub log: PathBuf,
    pub arch: Vec<usize>,
    pub train: TrainConfig,
    pub fallback: Fallback,
    pub checkpoint_every: usize,
}

impl TrainJob {
    fn config_hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(&(&self.arch, &self.train, self.fallback)).expect("config serializes");
        Sha256::digest(&bytes).into()
    }

    fn execute(&self) -> StageResult<Executed> {
        let data = io::load_vectors(&self.input).at("read")?;
        let mut inputs = vec![self.input.clone()];
        let pairs = match &self.neighbors {
            Some(path) => {
                inputs.push(path.clone());
                let map = io::load_neighbor_map(path).at("read")?;
                pairs_for(&map, self.fallback, &data).at("pairs")?
            }
            None => vec![],
        };
        let hash = self.config_hash();
        let mut outputs = Vec::new();
        let every = self.checkpoint_every;
        let (params, report) = train_with_callback(&data, &pairs, &self.arch, &self.train, |ev| {
            let done = ev.epoch + 1;
            if done % every == 0 {
                let path = epoch_checkpoint_path(&self.output, done);
                let ckpt = io::Checkpoint {
                    params: ev.params.clone(),
                    meta: io::CheckpointMeta {
                        epoch: done as u64,
                        seed: self.train.seed,
                        config_hash: hash,
                    },
                };
                io::save_checkpoint(&path, &ckpt)?;
                outputs.push(path);
            }
            Ok(())
        })
        .at("train")?;
        let ckpt = io::Checkpoint {
            params,
            meta: io::CheckpointMeta {
                epoch: report.epochs_run as u64,
                seed: self.train.seed,
                config_hash: hash,
            },
        };
        io::save_checkpoint(&self.output, &ckpt).at("write")?;
        std::fs::write(&self.log, report.to_log())
            .map_err(|e| Error::Io {
                path: self.log.clone(),
                source: e,
            })
            .at("write")?;
        outputs.insert(0, self.output.clone());
        outputs.insert(1, self.log.clone());
        let last = report.loss_per_epoch.last().copied().unwrap_or(f64::NAN);
        Ok(Executed {
            inputs,
            outputs,
            stdout: format!(
                "{} epochs{}, final loss {last:.6}, final lr {:.4e}\n",
                report.epochs_run,
                if report.stopped_early { " (early stop)" } else { "" },
                report.final_lr
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedJob {
    pub input: PathBuf,
    pub model: PathBuf,
    pub output: PathBuf,
    pub tap: EmbeddingTap,
    pub normalize: bool,
}

impl EmbedJob {
    fn execute(&self) -> StageResult<Executed> {
        let ckpt = io::load_checkpoint(&self.model).at("read")?;
        let data = io::load_vectors(&self.input).at("read")?;
        let emb = extract_all(&ckpt.params, &data, self.tap, self.normalize).at("embed")?;
        io::save_vectors(&self.output, &emb).at("write")?;
        Ok(Executed {
            inputs: vec![self.input.clone(), self.model.clone()],
            outputs: vec![self.output.clone()],
            stdout: format!("{} embeddings of dim {}\n", emb.len(), emb.first().map_or(0, FaceVector::dim)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreJob {
    pub input: PathBuf,
    pub trials: PathBuf,
    pub output: PathBuf,
    pub source: String,
}

impl ScoreJob {
    fn execute(&self) -> StageResult<Executed> {
        let emb = io::load_vectors(&self.input).at("read")?;
        let trials = io::load_trials_for(&self.trials, emb.len()).at("read")?;
        let mut scores = score_trials(&emb, &trials).at("score")?;
        scores.source = self.source.clone();
        io::save_scores(&self.output, &trials, &scores).at("write")?;
        Ok(Executed {
            inputs: vec![self.input.clone(), self.trials.clone()],
            outputs: vec![self.output.clone()],
            stdout: format!("{} trials scored\n", trials.len()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalJob {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
}

impl EvalJob {
    fn execute(&self) -> StageResult<Executed> {
        let (trials, scores) = io::load_scores(&self.input).at("read")?;
        let report = compute_eer(&scores, &trials).at("eval")?;
        let mut outputs = vec![];
        if let Some(out) = &self.output {
            write_atomic(out, report.to_json().as_bytes()).at("write")?;
            outputs.push(out.clone());
        }
        Ok(Executed {
            inputs: vec![self.input.clone()],
            outputs,
            stdout: report.to_text(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseJob {
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub fusion: FusionConfig,
}

impl FuseJob {
    fn execute(&self) -> StageResult<Executed> {
        let (t1, s1) = io::load_scores(&self.inputs[0]).at("read")?;
        let (t2, s2) = io::load_scores(&self.inputs[1]).at("read")?;
        if t1 != t2 {
            return Err((
                "fuse",
                Error::ShapeMismatch("score files list different trials".into()),
            ));
        }
        let fused = fuse_scores(&s1, &s2, &self.fusion).at("fuse")?;
        io::save_scores(&self.output, &t1, &fused).at("write")?;
        Ok(Executed {
            inputs: self.inputs.clone(),
            outputs: vec![self.output.clone()],
            stdout: format!(
                "{} trials fused with weights ({}, {})\n",
                t1.len(),
                self.fusion.w1,
                self.fusion.w2
            ),
        })
    }
}

/// Values a sweep iterates over; kept sorted so list order does not
/// matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepValues {
    K(Vec<usize>),
    Threshold(Vec<f64>),
}

impl SweepValues {
    pub fn sorted(self) -> Self {
        match self {
            SweepValues::K(mut v) => {
                v.sort_unstable();
                v.dedup();
                SweepValues::K(v)
            }
            SweepValues::Threshold(mut v) => {
                v.sort_by(f64::total_cmp);
                v.dedup();
                SweepValues::Threshold(v)
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            SweepValues::K(v) => v.is_empty(),
            SweepValues::Threshold(v) => v.is_empty(),
        }
    }

    pub fn modes(&self) -> Vec<SelectionMode> {
        match self {
            SweepValues::K(v) => v.iter().map(|&k| SelectionMode::TopK(k)).collect(),
            SweepValues::Threshold(v) => v.iter().map(|&t| SelectionMode::Threshold(t)).collect(),
        }
    }

    fn param_name(&self) -> &'static str {
        match self {
            SweepValues::K(_) => "k",
            SweepValues::Threshold(_) => "threshold",
        }
    }
}

/// One sweep row with the exact report behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub selection: SelectionMode,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepJob {
    pub input: PathBuf,
    pub trials: PathBuf,
    pub output: PathBuf,
    pub values: SweepValues,
    pub convention: CountConvention,
    pub arch: Vec<usize>,
    pub train: TrainConfig,
    pub fallback: Fallback,
    pub tap: EmbeddingTap,
    pub normalize: bool,
}

impl SweepJob {
    pub fn rows_path(&self) -> PathBuf {
        sidecar(&self.output, "json")
    }

    fn run_one(
        &self,
        data: &[FaceVector],
        sim: &SimilarityMatrix,
        trials: &TrialList,
        mode: SelectionMode,
    ) -> StageResult<EvalReport> {
        let map = select(sim, mode, self.convention).at("neighbors")?;
        // same round trip as the standalone subcommands
        let map = io::parse_neighbor_map(&io::format_neighbor_map(&map)).at("neighbors")?;
        let pairs = pairs_for(&map, self.fallback, data).at("pairs")?;
        let (params, _) = train_with_callback(data, &pairs, &self.arch, &self.train, |_| Ok(())).at("train")?;
        let emb = extract_all(&params, data, self.tap, self.normalize).at("embed")?;
        let scores = score_trials(&emb, trials).at("score")?;
        compute_eer(&scores, trials).at("eval")
    }

    fn execute(&self) -> StageResult<Executed> {
        let data = io::load_vectors(&self.input).at("read")?;
        let trials = io::load_trials_for(&self.trials, data.len()).at("read")?;
        let sim = pairwise_cosine(&data).at("similarity")?;
        let rows: Vec<SweepRow> = self
            .values
            .modes()
            .into_par_iter()
            .map(|mode| {
                self.run_one(&data, &sim, &trials, mode).map(|report| SweepRow {
                    selection: mode,
                    report,
                })
            })
            .collect::<StageResult<_>>()?;
        let labelled: Vec<(String, EvalReport)> = rows
            .iter()
            .map(|r| {
                let label = match r.selection {
                    SelectionMode::TopK(k) => k.to_string(),
                    SelectionMode::Threshold(t) => t.to_string(),
                };
                (label, r.report.clone())
            })
            .collect();
        let table = sweep_report(self.values.param_name(), &labelled);
        write_atomic(&self.output, table.as_bytes()).at("write")?;
        let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
        write_atomic(&self.rows_path(), json.as_bytes()).at("write")?;
        Ok(Executed {
            inputs: vec![self.input.clone(), self.trials.clone()],
            outputs: vec![self.output.clone(), self.rows_path()],
            stdout: table,
        })
    }
}
