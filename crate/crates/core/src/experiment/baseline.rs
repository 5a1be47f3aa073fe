use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::plan::{BaselineConfig, ExperimentPlan};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::seqmodel::{
    checkpoint, sequence_log_prob, Architecture, PolicyModel, SeqModel, Transformer,
};
use crate::synthdata::{LanguageRegistry, ParallelCorpus};
use crate::trainer::{train_epochs, Optimizer, StepSettings, TrainMode, TrainPair};

/// One supervised epoch and the dev loss after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineEpoch {
    pub epoch: usize,
    pub steps: u64,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub model: Transformer,
    pub epochs: Vec<BaselineEpoch>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Loaded from an existing checkpoint instead of trained.
    pub reused: bool,
}

#[derive(Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct BaselineRunConfig {
    seed: u64,
    model: Architecture,
    baseline: BaselineConfig,
}

/// Mean per-token negative log-likelihood of the split's targets.
pub fn dev_loss<M: SeqModel + ?Sized>(
    model: &M,
    registry: &LanguageRegistry,
    split: &ParallelCorpus,
) -> Result<f64> {
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for r in &split.records {
        let input = registry.get(&r.lang)?.model_input(&r.source);
        nll -= sequence_log_prob(model, &input, &r.target)?;
        tokens += r.target.len();
    }
    if tokens == 0 {
        return Err(Error::input("dev split is empty"));
    }
    Ok(nll / tokens as f64)
}

pub fn supervised_pairs(
    registry: &LanguageRegistry,
    split: &ParallelCorpus,
) -> Result<Vec<TrainPair>> {
    split
        .records
        .iter()
        .map(|r| {
            Ok(TrainPair {
                input: registry.get(&r.lang)?.model_input(&r.source),
                chosen: r.target.clone(),
                rejected: Vec::new(),
            })
        })
        .collect()
}

/// Supervised training on the (corrupted) train split until the dev loss
/// stops improving for `patience` epochs. Returns the best-dev model.
///
/// With `dir`, the checkpoint and epoch log are written there, and a
/// checkpoint left by an identical earlier call is reused.
pub fn run_baseline(
    plan: &ExperimentPlan,
    registry: &LanguageRegistry,
    train: &ParallelCorpus,
    dev: &ParallelCorpus,
    seed: u64,
    dir: Option<&Path>,
) -> Result<BaselineOutcome> {
    let cfg = &plan.baseline;
    cfg.validate()?;
    let run_cfg = BaselineRunConfig {
        seed,
        model: plan.model.clone(),
        baseline: cfg.clone(),
    };
    let cfg_json = serde_json::to_string_pretty(&run_cfg).expect("config serializes") + "\n";
    if let Some(d) = dir {
        let (c, m, l) = (
            d.join("baseline.json"),
            d.join("baseline.ckpt"),
            d.join("epochs.jsonl"),
        );
        if c.exists() && m.exists() && l.exists() {
            let stored = fs::read_to_string(&c).map_err(|e| Error::io(&c, e))?;
            if stored == cfg_json {
                let epochs: Vec<BaselineEpoch> = fs::read_to_string(&l)
                    .map_err(|e| Error::io(&l, e))?
                    .lines()
                    .map(|x| {
                        serde_json::from_str(x)
                            .map_err(|e| Error::format("epochs.jsonl", e.to_string()))
                    })
                    .collect::<Result<_>>()?;
                let best_epoch = epochs.iter().rfind(|e| e.best).map_or(0, |e| e.epoch);
                return Ok(BaselineOutcome {
                    model: checkpoint::load(&m)?,
                    stopped_early: epochs.len() < cfg.max_epochs,
                    epochs,
                    best_epoch,
                    reused: true,
                });
            }
        }
    }

    let key = StreamKey::root(seed).label("baseline");
    let net = Transformer::init(
        plan.model.clone(),
        registry.vocab(),
        key.label("init").value(),
    )?;
    let pairs = supervised_pairs(registry, train)?;
    let settings = StepSettings {
        learning_rate: cfg.learning_rate,
        beta: 1.0,
        batch_tokens: cfg.batch_tokens,
        warmup_steps: cfg.warmup_steps,
        clip_norm: cfg.clip_norm,
    };
    let mut policy = PolicyModel::new(net);
    let unused_reference = policy.snapshot();
    let mut optimizer = Optimizer::new(cfg.optimizer, policy.params().len());
    let mut best = (f64::INFINITY, policy.net().clone(), 0usize);
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let stats = train_epochs(
            &mut policy,
            &unused_reference,
            &pairs,
            1,
            TrainMode::Sft,
            &settings,
            &mut optimizer,
            0,
            key.label("epoch").index(epoch as u64),
            &mut |_| {},
        )
        .map_err(|e| match e {
            Error::Training { detail, .. } => Error::Training {
                round: 0,
                stage: "baseline",
                detail: format!("epoch {epoch}: {detail}"),
            },
            other => other,
        })?;
        let dl = dev_loss(policy.net(), registry, dev)?;
        let improved = dl < best.0;
        if improved {
            best = (dl, policy.net().clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        let rec = BaselineEpoch {
            epoch,
            steps: optimizer.step,
            train_loss: stats.mean_loss(),
            dev_loss: dl,
            best: improved,
        };
        info!(
            "baseline epoch {epoch}: train {:.4} dev {:.4}{}",
            rec.train_loss,
            dl,
            if improved { " *" } else { "" }
        );
        epochs.push(rec);
        if since_best >= cfg.patience {
            stopped_early = true;
            break;
        }
    }

    let (_, model, best_epoch) = best;
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        let log: String = epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch serializes") + "\n")
            .collect();
        let l = d.join("epochs.jsonl");
        fs::write(&l, log).map_err(|e| Error::io(&l, e))?;
        checkpoint::save(&model, &d.join("baseline.ckpt"))?;
        let c = d.join("baseline.json");
        fs::write(&c, cfg_json).map_err(|e| Error::io(&c, e))?;
    }
    Ok(BaselineOutcome {
        model,
        epochs,
        best_epoch,
        stopped_early,
        reused: false,
    })
}
