//! Layered configuration: built-in defaults, then a TOML file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use g2t::encoders::SkipKind;
use g2t::ingestion::{Task, MAX_TARGET_LEN};
use g2t::model::ModelConfig;
use g2t::training::TrainConfig;
use serde::{Deserialize, Serialize};

/// Everything a command can be configured with. Each table mirrors a group
/// of command-line flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Global seed; when set it replaces `model.seed` and `train.seed`.
    pub seed: Option<u64>,
    pub preprocess: PreprocessSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub run: RunSettings,
    pub generate: GenerateSettings,
    pub ablate: AblateSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSettings {
    pub task: Task,
    /// Store a depth-first linearisation with every example.
    pub linearise: bool,
    /// Emit edge-label tokens in linearisations.
    pub edge_labels: bool,
    pub max_target_len: usize,
    /// Lowercase node labels and targets; placeholders are left alone.
    pub lowercase: bool,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        PreprocessSettings {
            task: Task::Webnlg,
            linearise: false,
            edge_labels: true,
            max_target_len: MAX_TARGET_LEN,
            lowercase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Independent training runs; more than one reports mean and deviation.
    pub runs: usize,
    /// Whitespace-separated embedding file used to initialise both
    /// embedding tables.
    pub pretrained: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            runs: 1,
            pretrained: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSettings {
    /// Beam width; 1 decodes greedily.
    pub beam: usize,
    /// Longest output; defaults to `train.max_decode_len`.
    pub max_len: Option<usize>,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        GenerateSettings { beam: 1, max_len: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSettings {
    pub min_layers: usize,
    pub max_layers: usize,
    pub skips: Vec<SkipKind>,
    pub runs: usize,
}

impl Default for AblateSettings {
    fn default() -> Self {
        AblateSettings {
            min_layers: 1,
            max_layers: 7,
            skips: SkipKind::ALL.to_vec(),
            runs: 3,
        }
    }
}

impl Settings {
    /// Defaults overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut settings = match path {
            None => Settings::default(),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
        };
        if let Some(seed) = settings.seed {
            settings.set_seed(seed);
        }
        // TOML has no null, so a zero patience stands for "never stop early".
        if settings.train.patience == Some(0) {
            settings.train.patience = None;
        }
        Ok(settings)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.model.seed = seed;
        self.train.seed = seed;
    }

    /// Seed for preprocessing randomness.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Sets `*slot` when the flag was given.
pub fn overlay<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
