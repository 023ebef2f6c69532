//! Flat `key=value` experiment configuration with `synth.*`, `train.*`,
//! `eval.*` and `sweep.*` prefixes. `#` starts a comment; blank lines are
//! skipped; unknown or malformed keys are errors that name the key.

use crate::error::CliError;
use milpool::eval::EvalConfig;
use milpool::pooling::PoolingKind;
use milpool::synth::{BenchmarkSpec, SynthConfig};
use milpool::train::TrainConfig;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    pub poolings: Vec<PoolingKind>,
    pub seeds: usize,
    pub jobs: usize,
    pub test_clips: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            poolings: PoolingKind::ALL.to_vec(),
            seeds: 5,
            jobs: 1,
            test_clips: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: BenchmarkSpec,
    pub num_clips: usize,
    pub data_seed: u64,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepSettings,
    /// Emit an extra checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: BenchmarkSpec::default(),
            num_clips: 1000,
            data_seed: 0,
            train: TrainConfig::benchmark(PoolingKind::Power, 0),
            eval: EvalConfig::default(),
            sweep: SweepSettings::default(),
            checkpoint_every: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn synth_config(&self) -> SynthConfig {
        self.data.build(self.num_clips, self.data_seed)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let contents = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut config = ExperimentConfig::default();
        for (index, raw_line) in contents.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{}:{}: expected key=value, got `{line}`",
                    path.display(),
                    index + 1
                ))
            })?;
            config.apply(key.trim(), value.trim()).map_err(|what| {
                CliError::Config(format!("{}:{}: {what}", path.display(), index + 1))
            })?;
        }
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("key `{key}`: cannot parse value `{value}`"))
        }
        fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
            match value {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(format!("key `{key}`: expected true/false, got `{value}`")),
            }
        }
        match key {
            "synth.clip_len_s" => self.data.clip_len_s = parse(key, value)?,
            "synth.frame_hop_s" => self.data.frame_hop_s = parse(key, value)?,
            "synth.num_clips" => self.num_clips = parse(key, value)?,
            "synth.num_classes" => self.data.num_classes = parse(key, value)?,
            "synth.feature_dim" => self.data.feature_dim = parse(key, value)?,
            "synth.min_duration_s" => self.data.min_duration_s = parse(key, value)?,
            "synth.max_duration_s" => self.data.max_duration_s = parse(key, value)?,
            "synth.jitter_frac" => self.data.jitter_frac = parse(key, value)?,
            "synth.occurrence_prob" => self.data.occurrence_prob = parse(key, value)?,
            "synth.noise_std" => self.data.noise_std = parse(key, value)?,
            "synth.seed" => self.data_seed = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, value)?,
            "train.power_learning_rate" => self.train.power_learning_rate = parse(key, value)?,
            "train.lambda" => self.train.lambda = parse(key, value)?,
            "train.pooling" => {
                self.train.pooling = value
                    .parse::<PoolingKind>()
                    .map_err(|e| format!("key `{key}`: {e}"))?
            }
            "train.augment" => self.train.augment = parse_bool(key, value)?,
            "train.hidden_dim" => self.train.hidden_dim = parse(key, value)?,
            "train.seed" => self.train.seed = parse(key, value)?,
            "train.checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "eval.onset_collar_s" => self.eval.onset_collar_s = parse(key, value)?,
            "eval.offset_collar_s" => self.eval.offset_collar_s = parse(key, value)?,
            "eval.offset_pct" => self.eval.offset_pct = parse(key, value)?,
            "eval.segment_len_s" => self.eval.segment_len_s = parse(key, value)?,
            "eval.binarize_threshold" => self.eval.binarize_threshold = parse(key, value)?,
            "eval.median_beta" => self.eval.median_beta = parse(key, value)?,
            "sweep.poolings" => {
                self.sweep.poolings = value
                    .split(',')
                    .map(|p| p.parse::<PoolingKind>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("key `{key}`: {e}"))?
            }
            "sweep.seeds" => self.sweep.seeds = parse(key, value)?,
            "sweep.jobs" => self.sweep.jobs = parse(key, value)?,
            "sweep.test_clips" => self.sweep.test_clips = parse(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}
