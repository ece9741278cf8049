//! Config files, presets and value resolution.
//!
//! A value comes from the first of: command-line flag (or its `NSAE_*`
//! environment variable), config file, preset, built-in default.

use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::embed::EmbeddingTap;
use crate::eval::Normalization;
use crate::neighbors::{CountConvention, Fallback, SelectionMode};
use crate::net::LrSchedule;
use crate::pipeline::ExperimentConfig;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Log,
    Constant,
}

/// Keys accepted in a `--config` TOML file. Names match the long flags
/// with dashes replaced by underscores.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub identities: Option<usize>,
    pub samples: Option<usize>,
    pub dim: Option<usize>,
    pub noise: Option<f64>,
    pub matched: Option<usize>,
    pub mismatched: Option<usize>,
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub drop_last: Option<bool>,
    pub arch: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub schedule: Option<ScheduleKind>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub lr0: Option<f64>,
    pub lr_decay: Option<f64>,
    pub patience: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub fallback: Option<String>,
    pub tap: Option<String>,
    pub normalize: Option<bool>,
    pub weights: Option<Vec<f64>>,
    pub normalization: Option<String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
    }

    pub fn tap(&self) -> Result<Option<EmbeddingTap>, CliError> {
        parse_choice("tap", self.tap.as_deref())
    }

    pub fn fallback(&self) -> Result<Option<Fallback>, CliError> {
        parse_choice("fallback", self.fallback.as_deref())
    }

    pub fn normalization(&self) -> Result<Option<Normalization>, CliError> {
        parse_choice("normalization", self.normalization.as_deref())
    }

    pub fn weights(&self) -> Result<Option<(f64, f64)>, CliError> {
        match self.weights.as_deref() {
            None => Ok(None),
            Some([w1, w2]) => Ok(Some((*w1, *w2))),
            Some(other) => Err(CliError::Usage(format!(
                "config key `weights` needs exactly two values, got {}",
                other.len()
            ))),
        }
    }
}

fn parse_choice<T: FromStr<Err = String>>(key: &str, v: Option<&str>) -> Result<Option<T>, CliError> {
    v.map(|s| s.parse().map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))))
        .transpose()
}

/// First present value wins.
pub fn pick<T>(flag: Option<T>, file: Option<T>, base: T) -> T {
    flag.or(file).unwrap_or(base)
}

/// Defaults for a run, before flags and config file are applied.
///
/// Without a preset, the data shape matches the desk preset but training
/// uses the library defaults (400 epochs, 1e-2 to 1e-8).
pub fn base_config(preset: Option<Preset>, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(seed);
    if preset.is_none() {
        let defaults = crate::trainer::TrainConfig::default();
        cfg.train.epochs = defaults.epochs;
        cfg.train.schedule = defaults.schedule;
    }
    cfg
}

/// Learning-rate flags as given (flag or config file already merged).
#[derive(Debug, Clone, Copy, Default)]
pub struct ScheduleFlags {
    pub kind: Option<ScheduleKind>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub lr0: Option<f64>,
    pub lr_decay: Option<f64>,
}

pub fn resolve_schedule(f: ScheduleFlags, base: LrSchedule) -> LrSchedule {
    let kind = f.kind.unwrap_or(match base {
        LrSchedule::LogDecay { .. } => ScheduleKind::Log,
        LrSchedule::ConstantWithDecay { .. } => ScheduleKind::Constant,
    });
    match kind {
        ScheduleKind::Log => {
            let (start, end) = match base {
                LrSchedule::LogDecay { start, end } => (start, end),
                // same six-decade span as the library default
                LrSchedule::ConstantWithDecay { lr0, .. } => (lr0, lr0 * 1e-6),
            };
            LrSchedule::LogDecay {
                start: f.lr_start.unwrap_or(start),
                end: f.lr_end.unwrap_or(end),
            }
        }
        ScheduleKind::Constant => {
            let (lr0, decay) = match base {
                LrSchedule::ConstantWithDecay { lr0, decay } => (lr0, decay),
                LrSchedule::LogDecay { start, .. } => (start, 0.0),
            };
            LrSchedule::ConstantWithDecay {
                lr0: f.lr0.unwrap_or(lr0),
                decay: f.lr_decay.unwrap_or(decay),
            }
        }
    }
}

/// Top-k or threshold selection. Flags override the config file as a
/// unit, so `--threshold` on the command line beats `k = 5` in a file.
pub fn resolve_selection(
    flag_k: Option<usize>,
    flag_t: Option<f64>,
    file: &ConfigFile,
    base: SelectionMode,
) -> Result<SelectionMode, CliError> {
    let one = |k: Option<usize>, t: Option<f64>, origin: &str| match (k, t) {
        (Some(_), Some(_)) => Err(CliError::Usage(format!("{origin}: --k and --threshold are mutually exclusive"))),
        (Some(k), None) => Ok(Some(SelectionMode::TopK(k))),
        (None, Some(t)) => Ok(Some(SelectionMode::Threshold(t))),
        (None, None) => Ok(None),
    };
    Ok(one(flag_k, flag_t, "flags")?
        .or(one(file.k, file.threshold, "config file")?)
        .unwrap_or(base))
}

pub fn resolve_convention(flag_drop_last: bool, file: &ConfigFile) -> CountConvention {
    if flag_drop_last || file.drop_last == Some(true) {
        CountConvention::NTimesKMinus1
    } else {
        CountConvention::NTimesK
    }
}

/// Parses `a,b,c` lists for flags.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}
