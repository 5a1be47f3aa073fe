use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsuite::Metric;
use crate::seqmodel::Architecture;
use crate::synthdata::CorpusConfig;
use crate::trainer::{DqoConfig, OptimizerKind, TrainMode};

pub const PLAN_VERSION: u32 = 1;

/// Supervised training of the starting model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub batch_tokens: usize,
    pub warmup_steps: u64,
    pub clip_norm: f64,
    #[serde(default = "OptimizerKind::adam")]
    pub optimizer: OptimizerKind,
    pub max_epochs: usize,
    /// Stop after this many dev evaluations without improvement.
    pub patience: usize,
}

impl BaselineConfig {
    pub fn desk() -> Self {
        BaselineConfig {
            learning_rate: 3e-3,
            batch_tokens: 512,
            warmup_steps: 50,
            clip_norm: 10.0,
            optimizer: OptimizerKind::adam(),
            max_epochs: 30,
            patience: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("baseline.learning_rate must be positive"));
        }
        if self.batch_tokens == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::config(
                "baseline batch_tokens, max_epochs and patience must be positive",
            ));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("baseline.clip_norm must be positive"));
        }
        Ok(())
    }
}

/// A complete experiment, loaded from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub version: u32,
    pub seeds: Vec<u64>,
    #[serde(default = "default_mode")]
    pub mode: TrainMode,
    /// Segment-level metric behind the quality observations.
    pub quality_metric: Metric,
    pub metrics: Vec<Metric>,
    /// Metrics that get paired randomization tests, per group.
    #[serde(default)]
    pub significance: Vec<Metric>,
    #[serde(default = "default_trials")]
    pub randomization_trials: u64,
    /// Held-out language whose transliteration usage is tracked.
    #[serde(default)]
    pub feature_probe: Option<String>,
    #[serde(default = "default_probe_size")]
    pub feature_probe_size: usize,
    /// Training segments sampled for the perplexity observation.
    #[serde(default = "default_probe_size")]
    pub perplexity_sample: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub model: Architecture,
    pub baseline: BaselineConfig,
    /// `dqo.langs` is the aligned set.
    pub dqo: DqoConfig,
}

fn default_mode() -> TrainMode {
    TrainMode::Dpo
}

fn default_trials() -> u64 {
    10_000
}

fn default_probe_size() -> usize {
    500
}

impl ExperimentPlan {
    /// Eight languages in four families; three aligned languages from three
    /// families; family `d` held out with `d1` as the feature probe.
    pub fn desk() -> Self {
        let aligned = vec!["a0".to_string(), "b0".to_string(), "c0".to_string()];
        let mut corpus = CorpusConfig::desk();
        corpus.sizes.dev = 100;
        ExperimentPlan {
            version: PLAN_VERSION,
            seeds: vec![1, 2, 3],
            mode: TrainMode::Dpo,
            quality_metric: Metric::Qe,
            metrics: vec![Metric::Qe, Metric::Bleu, Metric::FeatureRate],
            significance: vec![Metric::Qe],
            randomization_trials: 2000,
            feature_probe: Some("d1".into()),
            feature_probe_size: 500,
            perplexity_sample: 500,
            output_dir: None,
            corpus,
            model: Architecture {
                d_model: 32,
                heads: 2,
                d_ff: 64,
                encoder_layers: 2,
                decoder_layers: 1,
                max_len: 24,
            },
            baseline: BaselineConfig::desk(),
            dqo: DqoConfig::desk(aligned),
        }
    }

    /// Smallest plan that exercises every stage; finishes in seconds.
    pub fn smoke() -> Self {
        let mut p = Self::desk();
        p.seeds = vec![1];
        p.corpus.sizes.train = 40;
        p.corpus.sizes.dev = 8;
        p.corpus.sizes.test = 8;
        p.model.d_model = 8;
        p.model.d_ff = 16;
        p.model.encoder_layers = 1;
        p.baseline.max_epochs = 1;
        p.dqo.rounds = 1;
        p.dqo.epochs = 1;
        p.dqo.sources_per_round = 4;
        p.dqo.samples = 4;
        p.feature_probe_size = 20;
        p.perplexity_sample = 20;
        p.randomization_trials = 100;
        p
    }

    pub fn aligned(&self) -> &[String] {
        &self.dqo.langs
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PLAN_VERSION {
            return Err(Error::config(format!(
                "plan version {} is not supported (expected {PLAN_VERSION})",
                self.version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must list at least one seed"));
        }
        self.corpus.validate()?;
        self.model.validate()?;
        self.baseline.validate()?;
        self.dqo.validate()?;
        let ids: Vec<&str> = self
            .corpus
            .languages
            .iter()
            .map(|l| l.id.as_str())
            .collect();
        for l in self.aligned() {
            if !ids.contains(&l.as_str()) {
                return Err(Error::config(format!(
                    "aligned language {l} is not generated"
                )));
            }
        }
        if self.metrics.is_empty() || !self.metrics.contains(&self.quality_metric) {
            return Err(Error::config("metrics must include quality_metric"));
        }
        if let Some(m) = self.significance.iter().find(|m| !self.metrics.contains(m)) {
            return Err(Error::config(format!(
                "significance metric {m} is not in metrics"
            )));
        }
        if let Some(p) = &self.feature_probe {
            let def = self
                .corpus
                .languages
                .iter()
                .find(|l| &l.id == p)
                .ok_or_else(|| Error::config(format!("feature probe {p} is not generated")))?;
            if !def.transliteration {
                return Err(Error::config(format!(
                    "feature probe {p} has no transliteration feature"
                )));
            }
            if self.aligned().contains(p) {
                return Err(Error::config(format!(
                    "feature probe {p} must not be aligned"
                )));
            }
            if self.feature_probe_size == 0 {
                return Err(Error::config("feature_probe_size must be positive"));
            }
        }
        if self.perplexity_sample == 0 {
            return Err(Error::config("perplexity_sample must be positive"));
        }
        // Tag + content + EOS on the source side; additions, suffix and EOS on the target side.
        let longest = self.corpus.shape.max_len + 5;
        if self.model.max_len < longest.max(self.dqo.max_len) {
            return Err(Error::config(format!(
                "model.max_len {} is below the longest sequence ({})",
                self.model.max_len,
                longest.max(self.dqo.max_len)
            )));
        }
        if self.dqo.max_len < self.model.max_len {
            return Err(Error::config(format!(
                "dqo.max_len {} is below model.max_len {}; truncated samples could not be scored",
                self.dqo.max_len, self.model.max_len
            )));
        }
        Ok(())
    }
}
