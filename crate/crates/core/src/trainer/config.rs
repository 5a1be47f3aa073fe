use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::SamplerParams;

/// Which update each round applies to the chosen/rejected pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Preference optimization against the frozen reference.
    #[serde(alias = "dqo")]
    Dpo,
    /// Supervised fine-tuning on the chosen output (reward-ranked fine-tuning).
    #[serde(alias = "raft")]
    Sft,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Dpo => "dpo",
            TrainMode::Sft => "sft",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::config(format!("unknown mode {s:?}; expected dqo or raft")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }
}

/// Every knob of the multi-round loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqoConfig {
    pub rounds: usize,
    pub epochs: usize,
    /// Sources sampled per round.
    pub sources_per_round: usize,
    pub learning_rate: f64,
    pub beta: f64,
    /// Samples per source, in addition to the greedy output.
    pub samples: usize,
    pub top_k: usize,
    pub top_p: f64,
    pub max_len: usize,
    pub tolerance: f64,
    /// Source + chosen + rejected tokens per batch.
    pub batch_tokens: usize,
    pub warmup_steps: u64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Languages used for alignment.
    pub langs: Vec<String>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub with_replacement: bool,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Sgd
}
fn default_threads() -> usize {
    1
}

impl DqoConfig {
    /// Full-size hyperparameters; [`DqoConfig::desk`] shrinks them for a laptop.
    pub fn full_scale() -> Self {
        DqoConfig {
            rounds: 5,
            epochs: 8,
            sources_per_round: 8000,
            learning_rate: 1e-6,
            beta: 0.5,
            samples: 64,
            top_k: 40,
            top_p: 0.8,
            max_len: 64,
            tolerance: 0.005,
            batch_tokens: 8192,
            warmup_steps: 150,
            clip_norm: 10.0,
            seed: 0,
            langs: ["de", "es", "hi", "ru", "zh"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            optimizer: OptimizerKind::Sgd,
            with_replacement: false,
            threads: 1,
        }
    }

    /// Laptop scale: fewer sources and samples, same round structure.
    pub fn desk(langs: Vec<String>) -> Self {
        DqoConfig {
            sources_per_round: 256,
            samples: 16,
            max_len: 24,
            learning_rate: 1e-4,
            batch_tokens: 1024,
            warmup_steps: 20,
            optimizer: OptimizerKind::adam(),
            langs,
            ..Self::full_scale()
        }
    }

    pub fn sampler(&self) -> SamplerParams {
        SamplerParams {
            top_k: self.top_k,
            top_p: self.top_p,
            max_len: self.max_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rounds", self.rounds),
            ("epochs", self.epochs),
            ("sources_per_round", self.sources_per_round),
            ("samples", self.samples),
            ("batch_tokens", self.batch_tokens),
            ("threads", self.threads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::config("beta must be positive"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("tolerance must be non-negative"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("clip_norm must be positive"));
        }
        if self.langs.is_empty() {
            return Err(Error::config("langs must name at least one language"));
        }
        self.sampler()
            .validate()
            .map_err(|e| Error::config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for c in [DqoConfig::full_scale(), DqoConfig::desk(vec!["a0".into()])] {
            c.validate().unwrap();
            let text = toml::to_string(&c).unwrap();
            assert_eq!(toml::from_str::<DqoConfig>(&text).unwrap(), c);
        }
        let p = DqoConfig::full_scale();
        assert_eq!(
            (p.rounds, p.epochs, p.sources_per_round, p.samples),
            (5, 8, 8000, 64)
        );
        assert_eq!(p.langs, vec!["de", "es", "hi", "ru", "zh"]);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = DqoConfig::full_scale();
        c.beta = 0.0;
        assert!(c.validate().is_err());
        let mut c = DqoConfig::full_scale();
        c.tolerance = -1.0;
        assert!(c.validate().is_err());
        let mut c = DqoConfig::full_scale();
        c.top_p = 0.0;
        assert!(c.validate().is_err());
        assert_eq!(
            serde_json::from_str::<TrainMode>("\"raft\"").unwrap(),
            TrainMode::Sft
        );
        assert_eq!(
            serde_json::from_str::<TrainMode>("\"dqo\"").unwrap(),
            TrainMode::Dpo
        );
    }
}
