//! The `nsae` command line.
//!
//! Each subcommand resolves its flags into a [`jobs::Job`], validates it,
//! runs it and writes a [`manifest::RunManifest`] next to its main output.
//! `nsae replay <manifest>` runs the recorded job again.

pub mod config;
pub mod jobs;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::embed::EmbeddingTap;
use crate::error::Error;
use crate::eval::{FusionConfig, Normalization, FUSION_BASELINE_NSAE_TOPK};
use crate::neighbors::Fallback;
use crate::synth::SynthConfig;
use crate::trainer::{TrainConfig, TrainMode};
use config::{
    base_config, parse_list, pick, resolve_convention, resolve_schedule, resolve_selection, ConfigFile, Preset,
    ScheduleFlags, ScheduleKind, DEFAULT_CHECKPOINT_EVERY, DEFAULT_SEED,
};
use jobs::{
    sidecar, EmbedJob, EvalJob, FuseJob, Job, NeighborsJob, ScoreJob, SweepJob, SweepValues, SynthJob, TrainJob,
};
use manifest::{manifest_path, FileDigest, RunManifest};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{stage}: {source}")]
    Data { stage: &'static str, source: Error },
    #[error("numeric failure in {stage} (seed {}): {source}", seed.map_or("none".to_string(), |s| s.to_string()))]
    Numeric {
        stage: &'static str,
        seed: Option<u64>,
        source: Error,
    },
}

impl CliError {
    pub fn from_lib(stage: &'static str, seed: Option<u64>, source: Error) -> Self {
        if source.is_numeric() {
            CliError::Numeric { stage, seed, source }
        } else {
            CliError::Data { stage, source }
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data { .. } => EXIT_DATA,
            CliError::Numeric { .. } => EXIT_NUMERIC,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nsae", version, about = "Neighbor-reconstruction autoencoders for vector verification")]
pub struct Cli {
    /// TOML file with default values for any flag
    #[arg(long, global = true, env = "NSAE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true, env = "NSAE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic identity clusters, labels and trials
    Synth(SynthArgs),
    /// Select cosine neighbors for every vector
    Neighbors(NeighborsArgs),
    /// Train an autoencoder on neighbor (or self) targets
    Train(TrainArgs),
    /// Extract embeddings with a trained model
    Embed(EmbedArgs),
    /// Cosine-score a trial list
    Score(ScoreArgs),
    /// Compute EER and accuracy of a score file
    Eval(EvalArgs),
    /// Fuse two aligned score files
    Fuse(FuseArgs),
    /// Run neighbors, train, embed, score and eval for several k or thresholds
    Sweep(SweepArgs),
    /// Re-run the job recorded in a manifest
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, env = "NSAE_OUTPUT")]
    pub output: PathBuf,
    #[arg(long, env = "NSAE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "NSAE_PRESET")]
    pub preset: Option<Preset>,
    #[arg(long, env = "NSAE_IDENTITIES")]
    pub identities: Option<usize>,
    #[arg(long, env = "NSAE_SAMPLES")]
    pub samples: Option<usize>,
    #[arg(long, env = "NSAE_DIM")]
    pub dim: Option<usize>,
    #[arg(long, env = "NSAE_NOISE")]
    pub noise: Option<f64>,
    #[arg(long, env = "NSAE_MATCHED")]
    pub matched: Option<usize>,
    #[arg(long, env = "NSAE_MISMATCHED")]
    pub mismatched: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectionArgs {
    #[arg(long, env = "NSAE_K", conflicts_with = "threshold")]
    pub k: Option<usize>,
    #[arg(long, env = "NSAE_THRESHOLD", allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Keep k-1 of the k selected neighbors
    #[arg(long, env = "NSAE_DROP_LAST")]
    pub drop_last: bool,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[arg(long, env = "NSAE_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "NSAE_OUTPUT")]
    pub output: PathBuf,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long, env = "NSAE_PRESET")]
    pub preset: Option<Preset>,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, env = "NSAE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "NSAE_PRESET")]
    pub preset: Option<Preset>,
    /// Layer sizes, e.g. 64,32,16,32,64
    #[arg(long, env = "NSAE_ARCH", value_delimiter = ',')]
    pub arch: Option<Vec<usize>>,
    #[arg(long, env = "NSAE_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, env = "NSAE_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "NSAE_SCHEDULE")]
    pub schedule: Option<ScheduleKind>,
    /// First-epoch rate of the log schedule
    #[arg(long, env = "NSAE_LR_START")]
    pub lr_start: Option<f64>,
    /// Last-epoch rate of the log schedule
    #[arg(long, env = "NSAE_LR_END")]
    pub lr_end: Option<f64>,
    /// Initial rate of the constant schedule
    #[arg(long, env = "NSAE_LR0")]
    pub lr0: Option<f64>,
    /// Decay of the constant schedule: lr0 / (1 + decay * epoch)
    #[arg(long, env = "NSAE_LR_DECAY")]
    pub lr_decay: Option<f64>,
    /// Epochs without improvement before stopping
    #[arg(long, env = "NSAE_PATIENCE")]
    pub patience: Option<usize>,
    /// Target for rows with no neighbor above the threshold
    #[arg(long, env = "NSAE_FALLBACK", value_parser = parse_fallback)]
    pub fallback: Option<Fallback>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "NSAE_INPUT")]
    pub input: PathBuf,
    /// Neighbor map from `nsae neighbors`
    #[arg(long, env = "NSAE_NEIGHBORS", conflicts_with = "baseline")]
    pub neighbors: Option<PathBuf>,
    /// Train the conventional self-reconstruction autoencoder
    #[arg(long)]
    pub baseline: bool,
    /// Final checkpoint
    #[arg(long, env = "NSAE_OUTPUT")]
    pub output: PathBuf,
    /// Epoch log (default: <output>.log)
    #[arg(long, env = "NSAE_LOG")]
    pub log: Option<PathBuf>,
    /// Also checkpoint every this many epochs
    #[arg(long, env = "NSAE_CHECKPOINT_EVERY")]
    pub checkpoint_every: Option<usize>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    #[arg(long, env = "NSAE_TAP", value_parser = parse_tap)]
    pub tap: Option<EmbeddingTap>,
    /// Keep raw activations instead of unit-length embeddings
    #[arg(long, env = "NSAE_NO_NORMALIZE")]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, env = "NSAE_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "NSAE_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "NSAE_OUTPUT")]
    pub output: PathBuf,
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Embeddings (or raw vectors)
    #[arg(long, env = "NSAE_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "NSAE_TRIALS")]
    pub trials: PathBuf,
    #[arg(long, env = "NSAE_OUTPUT")]
    pub output: PathBuf,
    /// Tag stored in the score file
    #[arg(long, default_value = "cosine")]
    pub source: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, env = "NSAE_INPUT")]
    pub input: PathBuf,
    /// Also write the full report as JSON
    #[arg(long, env = "NSAE_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Two score files over the same trials
    #[arg(long, num_args = 1, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, env = "NSAE_OUTPUT")]
    pub output: PathBuf,
    #[arg(long, env = "NSAE_WEIGHTS", value_parser = parse_weights)]
    pub weights: Option<(f64, f64)>,
    #[arg(long, env = "NSAE_NORMALIZATION", value_parser = parse_normalization)]
    pub normalization: Option<Normalization>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, env = "NSAE_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "NSAE_TRIALS")]
    pub trials: PathBuf,
    /// Table; exact reports go to <output>.json
    #[arg(long, env = "NSAE_OUTPUT")]
    pub output: PathBuf,
    #[arg(long, value_delimiter = ',', conflicts_with = "threshold_list")]
    pub k_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub threshold_list: Option<Vec<f64>>,
    #[arg(long, env = "NSAE_DROP_LAST")]
    pub drop_last: bool,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Fail unless every output matches the recorded checksum
    #[arg(long)]
    pub check: bool,
}

fn parse_tap(s: &str) -> Result<EmbeddingTap, String> {
    s.parse()
}

fn parse_fallback(s: &str) -> Result<Fallback, String> {
    s.parse()
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    s.parse()
}

fn parse_weights(s: &str) -> Result<(f64, f64), String> {
    match parse_list::<f64>(s)?.as_slice() {
        [w1, w2] => Ok((*w1, *w2)),
        other => Err(format!("expected two comma-separated weights, got {}", other.len())),
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ConfigFile, CliError> {
    path.map_or(Ok(ConfigFile::default()), |p| ConfigFile::load(p))
}

fn resolve_training(
    a: &TrainingArgs,
    file: &ConfigFile,
    mode: TrainMode,
) -> Result<(Vec<usize>, TrainConfig, Fallback), CliError> {
    let seed = pick(a.seed, file.seed, DEFAULT_SEED);
    let base = base_config(a.preset.or(file.preset), seed);
    let schedule = resolve_schedule(
        ScheduleFlags {
            kind: a.schedule.or(file.schedule),
            lr_start: a.lr_start.or(file.lr_start),
            lr_end: a.lr_end.or(file.lr_end),
            lr0: a.lr0.or(file.lr0),
            lr_decay: a.lr_decay.or(file.lr_decay),
        },
        base.train.schedule,
    );
    let train = TrainConfig {
        epochs: pick(a.epochs, file.epochs, base.train.epochs),
        batch_size: pick(a.batch_size, file.batch_size, base.train.batch_size),
        schedule,
        seed,
        patience: pick(a.patience, file.patience, base.train.patience),
        mode,
    };
    let arch = pick(a.arch.clone(), file.arch.clone(), base.arch);
    let fallback = pick(a.fallback, file.fallback()?, base.fallback);
    Ok((arch, train, fallback))
}

fn resolve_embedding(a: &EmbeddingArgs, file: &ConfigFile) -> Result<(EmbeddingTap, bool), CliError> {
    let tap = pick(a.tap, file.tap()?, EmbeddingTap::default());
    let normalize = if a.no_normalize { false } else { file.normalize.unwrap_or(true) };
    Ok((tap, normalize))
}

/// Turns parsed flags into a fully resolved job.
pub fn resolve(command: &Command, file: &ConfigFile) -> Result<Job, CliError> {
    Ok(match command {
        Command::Synth(a) => {
            let seed = pick(a.seed, file.seed, DEFAULT_SEED);
            let base = base_config(a.preset.or(file.preset), seed);
            Job::Synth(SynthJob {
                output: a.output.clone(),
                synth: SynthConfig {
                    n_identities: pick(a.identities, file.identities, base.synth.n_identities),
                    samples_per_identity: pick(a.samples, file.samples, base.synth.samples_per_identity),
                    dim: pick(a.dim, file.dim, base.synth.dim),
                    session_noise: pick(a.noise, file.noise, base.synth.session_noise),
                    seed,
                },
                n_matched: pick(a.matched, file.matched, base.n_matched),
                n_mismatched: pick(a.mismatched, file.mismatched, base.n_mismatched),
            })
        }
        Command::Neighbors(a) => {
            let base = base_config(a.preset.or(file.preset), DEFAULT_SEED);
            Job::Neighbors(NeighborsJob {
                input: a.input.clone(),
                output: a.output.clone(),
                selection: resolve_selection(a.selection.k, a.selection.threshold, file, base.selection)?,
                convention: resolve_convention(a.selection.drop_last, file),
            })
        }
        Command::Train(a) => {
            let mode = if a.baseline {
                TrainMode::SelfReconstruction
            } else {
                TrainMode::NeighborReconstruction
            };
            let (arch, train, fallback) = resolve_training(&a.training, file, mode)?;
            Job::Train(TrainJob {
                input: a.input.clone(),
                neighbors: a.neighbors.clone(),
                log: a.log.clone().unwrap_or_else(|| sidecar(&a.output, "log")),
                output: a.output.clone(),
                arch,
                train,
                fallback,
                checkpoint_every: pick(a.checkpoint_every, file.checkpoint_every, DEFAULT_CHECKPOINT_EVERY),
            })
        }
        Command::Embed(a) => {
            let (tap, normalize) = resolve_embedding(&a.embedding, file)?;
            Job::Embed(EmbedJob {
                input: a.input.clone(),
                model: a.model.clone(),
                output: a.output.clone(),
                tap,
                normalize,
            })
        }
        Command::Score(a) => Job::Score(ScoreJob {
            input: a.input.clone(),
            trials: a.trials.clone(),
            output: a.output.clone(),
            source: a.source.clone(),
        }),
        Command::Eval(a) => Job::Eval(EvalJob {
            input: a.input.clone(),
            output: a.output.clone(),
        }),
        Command::Fuse(a) => {
            let (w1, w2) = pick(a.weights, file.weights()?, FUSION_BASELINE_NSAE_TOPK);
            let normalization = pick(a.normalization, file.normalization()?, Normalization::default());
            Job::Fuse(FuseJob {
                inputs: a.input.clone(),
                output: a.output.clone(),
                fusion: FusionConfig { w1, w2, normalization },
            })
        }
        Command::Sweep(a) => {
            let values = match (&a.k_list, &a.threshold_list) {
                (Some(k), None) => SweepValues::K(k.clone()),
                (None, Some(t)) => SweepValues::Threshold(t.clone()),
                _ => return Err(CliError::Usage("sweep needs exactly one of --k-list, --threshold-list".into())),
            };
            let (arch, train, fallback) = resolve_training(&a.training, file, TrainMode::NeighborReconstruction)?;
            let (tap, normalize) = resolve_embedding(&a.embedding, file)?;
            Job::Sweep(SweepJob {
                input: a.input.clone(),
                trials: a.trials.clone(),
                output: a.output.clone(),
                values: values.sorted(),
                convention: resolve_convention(a.drop_last, file),
                arch,
                train,
                fallback,
                tap,
                normalize,
            })
        }
        Command::Replay(_) => return Err(CliError::Usage("replay is not a job".into())),
    })
}

/// Validates and runs a job, then records its manifest.
pub fn run_job(job: &Job) -> Result<(String, Option<RunManifest>), CliError> {
    job.validate()?;
    let started = Instant::now();
    let done = job.execute()?;
    let elapsed = started.elapsed().as_secs_f64();
    let Some(primary) = job.primary_output() else {
        return Ok((done.stdout, None));
    };
    let digests = |paths: &[PathBuf]| -> Result<Vec<FileDigest>, CliError> {
        paths
            .iter()
            .map(|p| FileDigest::of(p).map_err(|e| CliError::from_lib("manifest", job.seed(), e)))
            .collect()
    };
    let manifest = RunManifest {
        subcommand: job.name().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: job.seed(),
        config: job.config_json(),
        inputs: digests(&done.inputs)?,
        outputs: digests(&done.outputs)?,
        threads: rayon::current_num_threads(),
        wall_clock_seconds: elapsed,
    };
    manifest
        .save(&manifest_path(primary))
        .map_err(|e| CliError::from_lib("manifest", job.seed(), e))?;
    Ok((done.stdout, Some(manifest)))
}

fn replay(a: &ReplayArgs) -> Result<String, CliError> {
    let recorded = RunManifest::load(&a.manifest).map_err(|e| CliError::Data {
        stage: "replay",
        source: e,
    })?;
    let job = Job::from_manifest(&recorded.subcommand, &recorded.config)?;
    let (stdout, fresh) = run_job(&job)?;
    if a.check {
        let fresh = fresh.map(|m| m.outputs).unwrap_or_default();
        let differ: Vec<String> = recorded
            .outputs
            .iter()
            .filter(|d| !fresh.contains(d))
            .map(|d| d.path.display().to_string())
            .collect();
        if !differ.is_empty() {
            return Err(CliError::Data {
                stage: "replay",
                source: Error::ShapeMismatch(format!("outputs differ from the manifest: {}", differ.join(", "))),
            });
        }
        return Ok(format!("{stdout}replay ok: {} outputs match\n", recorded.outputs.len()));
    }
    Ok(stdout)
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    if let Command::Replay(a) = &cli.command {
        return replay(a);
    }
    let file = load_config(cli.config.as_ref())?;
    let job = resolve(&cli.command, &file)?;
    run_job(&job).map(|(stdout, _)| stdout)
}

/// Runs the command line and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: --threads: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(stdout) => {
            print!("{stdout}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
