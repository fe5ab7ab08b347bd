//! The `train.yaml` schema: one file configuring encoder, heads, losses,
//! schedules, search, augmentation and submission placeholders. Every
//! section is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Subtask;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::Placeholders;
use crate::featurizer::{Featurizer, LexiconSet};
use crate::inference::TtaConfig;
use crate::net::{HeadConfig, LossConfig, ModelConfig, ModelKind};
use crate::trainer::{CvSettings, TrainSchedule};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the seeds of `schedule`, `cv` and `tta` when set.
    pub seed: Option<u64>,
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
    pub pooler_bias: bool,
    pub multitask_loss: LossConfig,
    pub single_task_loss: LossConfig,
    pub schedule: TrainSchedule,
    pub cv: CvSettings,
    pub tta: TtaConfig,
    pub placeholders: Placeholders,
    /// Directory with replacement lexicon files.
    pub lexicons: Option<PathBuf>,
    pub reference_year: Option<i32>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            encoder: EncoderConfig::default(),
            head: HeadConfig::default(),
            pooler_bias: false,
            multitask_loss: LossConfig::default(),
            single_task_loss: LossConfig::single_task(),
            schedule: TrainSchedule::default(),
            cv: CvSettings::default(),
            tta: TtaConfig::default(),
            placeholders: Placeholders::default(),
            lexicons: None,
            reference_year: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_yaml(text: &str) -> Result<Self> {
        let mut config: Self = serde_yaml::from_str(text)?;
        if let Some(seed) = config.seed {
            config = config.with_seed(seed);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_yaml(&text)?;
        // Relative lexicon paths are taken from the config file location.
        if let (Some(dir), Some(parent)) = (&config.lexicons, path.parent()) {
            if dir.is_relative() {
                config.lexicons = Some(parent.join(dir));
            }
        }
        Ok(config)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self.schedule.seed = seed;
        self.cv.seed = seed;
        self.tta.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.multitask_loss.validate()?;
        self.single_task_loss.validate()?;
        self.schedule.validate()?;
        self.cv.space.validate()?;
        self.tta.validate()
    }

    /// Model configuration for `kind`; single-task kinds need a subtask.
    pub fn model_config(&self, kind: ModelKind, subtask: Option<Subtask>) -> Result<ModelConfig> {
        let mut config = match (kind, subtask) {
            (ModelKind::Combined, _) => ModelConfig {
                loss: self.multitask_loss.clone(),
                ..ModelConfig::combined()
            },
            (ModelKind::Base, Some(t)) => ModelConfig::base(t),
            (ModelKind::Feature, Some(t)) => ModelConfig::feature(t),
            (_, None) => {
                return Err(Error::InvalidArgument(
                    "base and feature models need a subtask".into(),
                ))
            }
        };
        if kind != ModelKind::Combined {
            config.loss = self.single_task_loss.clone();
        }
        config.encoder = self.encoder.clone();
        config.head = self.head.clone();
        config.pooler_bias = self.pooler_bias;
        config.validate()?;
        Ok(config)
    }

    pub fn featurizer(&self) -> Result<Featurizer> {
        let mut lexicons = match &self.lexicons {
            Some(dir) => LexiconSet::load_dir(dir)?,
            None => LexiconSet::builtin(),
        };
        if let Some(year) = self.reference_year {
            lexicons = lexicons.with_reference_year(year);
        }
        Ok(Featurizer::new(lexicons))
    }
}
