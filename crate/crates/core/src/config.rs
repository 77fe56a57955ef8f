//! Run configuration: one TOML file covering every stage, with command-line
//! overrides applied on top. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::PhaseFilter;
use crate::fixation::IdtParams;
use crate::nn::{ModelConfig, TrainConfig};
use crate::session::{
    ParseOptions, ValidationThresholds, DEFAULT_MIN_CONFIDENCE, DEFAULT_SAMPLING_RATE,
};
use crate::stats::{Granularity, DEFAULT_ALPHA};
use crate::synth::{BehaviorProfile, SynthSpec};
use crate::windowing::DEFAULT_WINDOW_SIZES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for splits and model initialization (`base_seed` of a batch).
    pub seed: u64,
    /// Window sizes used by the `features` command.
    pub window_sizes: Vec<f64>,
    /// Window size used by `stats`, `train`, `eval` and `trace`.
    pub window_size: f64,
    pub n_models: usize,
    /// Forces the initial-phase filter on or off; unset applies it to
    /// windows no longer than `initial_phase_max_window_s`.
    pub initial_phase_only: Option<bool>,
    pub initial_phase_max_window_s: f64,
    /// Also write PNG line plots of ROC curves and traces.
    pub plots: bool,
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub idt: IdtParams,
    pub stats: StatsConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub profiles: ProfilesConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            window_sizes: DEFAULT_WINDOW_SIZES.to_vec(),
            window_size: 5.0,
            n_models: 12,
            initial_phase_only: None,
            initial_phase_max_window_s: 10.0,
            plots: false,
            paths: PathsConfig::default(),
            ingest: IngestConfig::default(),
            idt: IdtParams::default(),
            stats: StatsConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: SynthSpec::default(),
            profiles: ProfilesConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Session store (`manifests/` + `gaze/`) read by most commands.
    pub store: Option<PathBuf>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            store: None,
            out: PathBuf::from("out"),
            checkpoint: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub min_confidence: f64,
    pub sampling_rate: f64,
    pub validation: ValidationThresholds,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            sampling_rate: DEFAULT_SAMPLING_RATE,
            validation: ValidationThresholds::default(),
        }
    }
}

impl IngestConfig {
    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            min_confidence: self.min_confidence,
            nominal_rate: self.sampling_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub alpha: f64,
    pub granularity: Granularity,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            granularity: Granularity::Window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfilesConfig {
    pub expert: BehaviorProfile,
    pub non_expert: BehaviorProfile,
}

impl Default for ProfilesConfig {
    fn default() -> Self {
        Self {
            expert: BehaviorProfile::expert(),
            non_expert: BehaviorProfile::non_expert(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::RunConfig(one_line(&e.to_string())))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::RunConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_sizes.is_empty() || self.window_sizes.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::RunConfig(
                "window_sizes must be non-empty and positive".into(),
            ));
        }
        if !(self.window_size > 0.0) {
            return Err(Error::RunConfig(format!(
                "window_size must be positive, got {}",
                self.window_size
            )));
        }
        if self.n_models == 0 {
            return Err(Error::RunConfig("n_models must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ingest.min_confidence) {
            return Err(Error::RunConfig(
                "ingest.min_confidence must lie in [0, 1]".into(),
            ));
        }
        if !(self.ingest.sampling_rate > 0.0) {
            return Err(Error::RunConfig(
                "ingest.sampling_rate must be positive".into(),
            ));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return Err(Error::RunConfig("stats.alpha must lie in (0, 1)".into()));
        }
        self.idt.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.profiles.expert.validate()?;
        self.profiles.non_expert.validate()?;
        Ok(())
    }

    pub fn phase_filter(&self, window_size: f64) -> PhaseFilter {
        let initial = self
            .initial_phase_only
            .unwrap_or(window_size <= self.initial_phase_max_window_s);
        if initial {
            PhaseFilter::InitialOnly
        } else {
            PhaseFilter::All
        }
    }

    /// Model configuration with the sequence length implied by `window_size`.
    pub fn model_for(&self, window_size: f64) -> Result<ModelConfig> {
        let len = crate::features::sequence_length(self.ingest.sampling_rate, window_size);
        let cfg = self.model.clone().with_seq_len(len);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn store(&self) -> Result<&Path> {
        self.paths.store.as_deref().ok_or_else(|| {
            Error::RunConfig("no session store given (paths.store or --store)".into())
        })
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
