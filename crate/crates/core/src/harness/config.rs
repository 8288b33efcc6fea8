use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::classifiers::{AttackConfig, AttackKind};
use crate::defenses::DefenseSpec;
use crate::error::{Error, Result};
use crate::sitegraph::CanonConfig;
use crate::synth::{ModeConfig, SiteParams};
use crate::util::sha256_hex;

/// Seeds for every randomized stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub site: u64,
    pub plan: u64,
    pub train_user: u64,
    pub eval_user: u64,
    pub eval_walk: u64,
    pub subsample: u64,
    pub model: u64,
    pub curve: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            site: 1,
            plan: 2,
            train_user: 3,
            eval_user: 4,
            eval_walk: 5,
            subsample: 6,
            model: 7,
            curve: 8,
        }
    }
}

/// A collection mode: one of the four standard modes by number, or a full
/// mode table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeChoice {
    Preset(u8),
    Custom(ModeConfig),
}

/// Synthetic data: a generated site browsed under two collection modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthData {
    pub site: SiteParams,
    pub train_mode: ModeChoice,
    pub eval_mode: ModeChoice,
    /// Size jitter for preset modes.
    pub noise: f64,
    /// Segment split probability for preset modes.
    pub split_rate: f64,
    /// Per-exchange header variation for preset modes.
    pub header_jitter: u32,
    /// Subresource skip probability for preset modes.
    pub skip_rate: f64,
    pub cache_capacity: usize,
    pub train_session_len: usize,
    pub dup_threshold: f64,
    pub eval_sessions: usize,
    pub eval_session_len: usize,
    pub canon: CanonConfig,
}

impl Default for SynthData {
    fn default() -> Self {
        SynthData {
            site: SiteParams::default(),
            train_mode: ModeChoice::Preset(2),
            eval_mode: ModeChoice::Preset(4),
            noise: 0.05,
            split_rate: 0.0,
            header_jitter: 0,
            skip_rate: 0.0,
            cache_capacity: 256,
            train_session_len: 75,
            dup_threshold: 0.6,
            eval_sessions: 20,
            eval_session_len: 75,
            canon: CanonConfig::default(),
        }
    }
}

impl SynthData {
    pub fn mode(&self, choice: &ModeChoice) -> Result<ModeConfig> {
        let m = match choice {
            ModeChoice::Preset(n) => {
                let mut m = ModeConfig::mode(*n)?.with_noise(self.noise);
                m.cache_capacity = self.cache_capacity;
                m.split_rate = self.split_rate;
                m.header_jitter = self.header_jitter;
                m.skip_rate = self.skip_rate;
                m
            }
            ModeChoice::Custom(m) => m.clone(),
        };
        m.validate()?;
        Ok(m)
    }
}

/// Pre-labelled trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileData {
    pub train: PathBuf,
    pub eval: PathBuf,
    /// Site graph for sequence decoding; without one only per-sample
    /// accuracy is reported.
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub attack: AttackKind,
    pub defense: DefenseSpec,
    pub fragment_depth: u32,
    /// Training samples kept per label.
    pub train_samples_per_label: usize,
    pub synth: Option<SynthData>,
    pub files: Option<FileData>,
    pub model: AttackConfig,
    pub seeds: Seeds,
    /// Longest window of the session-length curve; defaults to the longest
    /// evaluation session.
    pub max_session_length: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            attack: AttackKind::Bog,
            defense: DefenseSpec::None,
            fragment_depth: 1,
            train_samples_per_label: 16,
            synth: Some(SynthData::default()),
            files: None,
            model: AttackConfig::default(),
            seeds: Seeds::default(),
            max_session_length: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.synth, &self.files) {
            (Some(s), None) => {
                s.mode(&s.train_mode)?;
                s.mode(&s.eval_mode)?;
                if s.train_session_len == 0 || s.eval_session_len == 0 {
                    return Err(Error::Config("session lengths must be positive".into()));
                }
            }
            (None, Some(_)) => {}
            _ => return Err(Error::Config("exactly one of [synth] and [files] must be given".into())),
        }
        if self.train_samples_per_label == 0 {
            return Err(Error::Config("train_samples_per_label must be positive".into()));
        }
        if self.max_session_length == Some(0) {
            return Err(Error::Config("max_session_length must be positive".into()));
        }
        if self.fragment_depth == 0 {
            return Err(Error::Config("fragment_depth must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let files_only = value.contains_key("files") && !value.contains_key("synth");
        let mut cfg: ExperimentConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if files_only {
            cfg.synth = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Attack parameters with the model seed applied.
    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            seed: self.seeds.model,
            ..self.model.clone()
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
