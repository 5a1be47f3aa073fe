use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{DqoConfig, TrainMode};
use super::optim::Optimizer;
use super::train::{train_epochs, StepRecord, StepSettings, TrainPair, TrainStats};
use crate::error::{Error, Result};
use crate::prefdata::{
    build_round_dataset, write_pairs, PreferencePair, RoundPairStats, RoundSpec,
};
use crate::qescore::{CachedScorer, QeScorer};
use crate::rng::StreamKey;
use crate::seqmodel::{checkpoint, PolicyModel, ReferenceModel, SeqModel, Token, Transformer};
use crate::synthdata::LanguageRegistry;

/// Computes named metrics for a model after each round (and for the
/// baseline as round 0).
pub trait RoundEvaluator {
    fn evaluate(&self, model: &Transformer, round: usize) -> Result<BTreeMap<String, f64>>;
}

impl<F> RoundEvaluator for F
where
    F: Fn(&Transformer, usize) -> Result<BTreeMap<String, f64>>,
{
    fn evaluate(&self, model: &Transformer, round: usize) -> Result<BTreeMap<String, f64>> {
        self(model, round)
    }
}

/// One line of `rounds.jsonl`. Round 0 describes the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub mode: TrainMode,
    pub pairs: RoundPairStats,
    /// Global optimizer steps after this round.
    pub steps: u64,
    pub first_loss: Option<f64>,
    pub mean_loss: Option<f64>,
    pub final_epoch_loss: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Persist artifacts here and resume from the last completed round.
    pub run_dir: Option<&'a Path>,
    pub evaluator: Option<&'a dyn RoundEvaluator>,
    /// Stop (as if interrupted) once this round is complete.
    pub stop_after_round: Option<usize>,
    pub on_step: Option<&'a mut dyn FnMut(&StepRecord)>,
}

pub struct DqoOutcome {
    pub policy: PolicyModel,
    pub reference: ReferenceModel,
    pub rounds: Vec<RoundRecord>,
    /// Pairs of every round run in this call, keyed by round.
    pub pairs: BTreeMap<usize, Vec<PreferencePair>>,
    pub train_stats: BTreeMap<usize, TrainStats>,
    pub resumed_from: Option<usize>,
}

#[derive(Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    mode: TrainMode,
    config: DqoConfig,
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn round_dir(&self, r: usize) -> PathBuf {
        self.root.join(format!("round-{r}"))
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    fn append(path: &Path, lines: &str) -> Result<()> {
        use std::io::Write;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(lines.as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    fn read_lines(path: &Path) -> Result<Vec<String>> {
        match fs::read_to_string(path) {
            Ok(t) => Ok(t
                .lines()
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).expect("record serializes") + "\n")
        .collect()
}

struct Resume {
    policy: Transformer,
    optimizer: Optimizer,
    rounds: Vec<RoundRecord>,
}

fn prepare_dir(
    dir: &RunDir,
    run_config: &RunConfig,
    baseline: &Transformer,
) -> Result<Option<Resume>> {
    let root = &dir.root;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let cfg_path = root.join("config.json");
    let cfg_json = serde_json::to_string_pretty(run_config).expect("config serializes") + "\n";
    if cfg_path.exists() {
        let stored = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        if stored != cfg_json {
            return Err(Error::config(format!(
                "{} holds a run with a different configuration",
                root.display()
            )));
        }
        let reference = checkpoint::load(&root.join("reference.ckpt"))?;
        if &reference != baseline {
            return Err(Error::config(
                "run directory was started from a different baseline",
            ));
        }
    } else {
        RunDir::write_atomic(&cfg_path, cfg_json.as_bytes())?;
        RunDir::write_atomic(
            &root.join("reference.ckpt"),
            &checkpoint::to_bytes(baseline),
        )?;
    }

    let rounds_path = root.join("rounds.jsonl");
    let mut rounds: Vec<RoundRecord> = Vec::new();
    for line in RunDir::read_lines(&rounds_path)? {
        let rec: RoundRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format("rounds.jsonl", e.to_string()))?;
        if rec.round != rounds.len() {
            break;
        }
        let complete = rec.round == 0 || {
            let d = dir.round_dir(rec.round);
            d.join("policy.ckpt").exists() && d.join("optimizer.bin").exists()
        };
        if !complete {
            break;
        }
        rounds.push(rec);
    }
    let stats_path = root.join("stats.jsonl");
    let last = match rounds.last() {
        None => {
            for p in [&rounds_path, &stats_path] {
                if p.exists() {
                    fs::remove_file(p).map_err(|e| Error::io(p, e))?;
                }
            }
            return Ok(None);
        }
        Some(r) => r.round,
    };
    RunDir::write_atomic(&rounds_path, jsonl(&rounds).as_bytes())?;
    let kept_steps = rounds.last().map_or(0, |r| r.steps);
    let stats: Vec<String> = RunDir::read_lines(&stats_path)?
        .into_iter()
        .filter(|l| serde_json::from_str::<StepRecord>(l).is_ok_and(|s| s.step <= kept_steps))
        .collect();
    let stats_text: String = stats.iter().map(|l| format!("{l}\n")).collect();
    RunDir::write_atomic(&stats_path, stats_text.as_bytes())?;
    if last == 0 {
        return Ok(Some(Resume {
            policy: baseline.clone(),
            optimizer: Optimizer::new(run_config.config.optimizer, baseline.num_params()),
            rounds,
        }));
    }
    let d = dir.round_dir(last);
    Ok(Some(Resume {
        policy: checkpoint::load(&d.join("policy.ckpt"))?,
        optimizer: Optimizer::load(&d.join("optimizer.bin"))?,
        rounds,
    }))
}

/// Multi-round preference optimization.
///
/// The reference is the baseline, snapshotted once. Each round draws fresh
/// sources, samples candidates from the current policy, scores them in one
/// batched call, builds pairs and trains for `config.epochs` epochs.
pub fn run_dqo(
    baseline: &Transformer,
    pool: &[Vec<Token>],
    registry: &LanguageRegistry,
    scorer: &dyn QeScorer,
    config: &DqoConfig,
    mode: TrainMode,
    mut opts: RunOptions<'_>,
) -> Result<DqoOutcome> {
    config.validate()?;
    // A decode cut short of the model's length has no EOS and cannot be scored.
    if config.max_len < baseline.arch().max_len {
        return Err(Error::config(format!(
            "decode max_len {} is below the model's max_len {}",
            config.max_len,
            baseline.arch().max_len
        )));
    }
    for l in &config.langs {
        registry.get(l).map_err(|e| Error::config(e.to_string()))?;
    }
    let reference = PolicyModel::new(baseline.clone()).snapshot();
    let dir = opts.run_dir.map(|p| RunDir {
        root: p.to_path_buf(),
    });
    let run_config = RunConfig {
        mode,
        config: config.clone(),
    };
    let resume = match &dir {
        Some(d) => prepare_dir(d, &run_config, baseline)?,
        None => None,
    };
    let resumed_from = resume
        .as_ref()
        .and_then(|r| r.rounds.last().map(|x| x.round));
    let (mut policy, mut optimizer, mut rounds) = match resume {
        Some(r) => (PolicyModel::new(r.policy), r.optimizer, r.rounds),
        None => (
            PolicyModel::new(baseline.clone()),
            Optimizer::new(config.optimizer, baseline.num_params()),
            Vec::new(),
        ),
    };

    let evaluate = |model: &Transformer, round: usize| -> Result<BTreeMap<String, f64>> {
        match opts.evaluator {
            Some(ev) => ev.evaluate(model, round).map_err(|e| Error::Training {
                round,
                stage: "evaluate",
                detail: e.to_string(),
            }),
            None => Ok(BTreeMap::new()),
        }
    };

    if rounds.is_empty() {
        let rec = RoundRecord {
            round: 0,
            mode,
            pairs: RoundPairStats::default(),
            steps: 0,
            first_loss: None,
            mean_loss: None,
            final_epoch_loss: None,
            metrics: evaluate(baseline, 0)?,
        };
        if let Some(d) = &dir {
            RunDir::append(
                &d.root.join("rounds.jsonl"),
                &jsonl(std::slice::from_ref(&rec)),
            )?;
        }
        rounds.push(rec);
    }

    let settings = StepSettings {
        learning_rate: config.learning_rate,
        beta: config.beta,
        batch_tokens: config.batch_tokens,
        warmup_steps: config.warmup_steps,
        clip_norm: config.clip_norm,
    };
    let cached = CachedScorer::new(scorer);
    let root = StreamKey::root(config.seed);
    let mut all_pairs = BTreeMap::new();
    let mut all_stats = BTreeMap::new();

    let first = rounds.len();
    for round in first..=config.rounds {
        if opts.stop_after_round.is_some_and(|s| round > s) {
            break;
        }
        let key = root.label("round").index(round as u64);
        cached.clear();
        let spec = RoundSpec {
            round,
            langs: &config.langs,
            sources_per_round: config.sources_per_round,
            samples_per_source: config.samples,
            sampler: config.sampler(),
            tolerance: config.tolerance,
            with_replacement: config.with_replacement,
            threads: config.threads,
        };
        let data = build_round_dataset(pool, registry, &policy, &cached, &spec, key).map_err(
            |e| match e {
                Error::Io { .. } => e,
                other => Error::Training {
                    round,
                    stage: "pairs",
                    detail: other.to_string(),
                },
            },
        )?;
        info!(
            "round {round}: {} pairs from {} sources ({} dropped, {} candidates scored)",
            data.stats.pairs,
            data.stats.sources,
            data.stats.dropped_no_loser + data.stats.dropped_identical,
            data.stats.candidates_scored
        );
        if let Some(d) = &dir {
            let rd = d.round_dir(round);
            fs::create_dir_all(&rd).map_err(|e| Error::io(&rd, e))?;
            write_pairs(&rd.join("pairs.jsonl"), &data.pairs)?;
        }

        let train: Vec<TrainPair> = data
            .pairs
            .iter()
            .map(|p| {
                Ok(TrainPair {
                    input: registry.get(&p.lang)?.model_input(&p.source),
                    chosen: p.chosen.clone(),
                    rejected: p.rejected.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let stats = if train.is_empty() {
            info!("round {round}: no pairs, skipping updates");
            TrainStats::default()
        } else {
            let mut log_step = |s: &StepRecord| {
                info!(
                    "round {} epoch {} step {} loss {:.6} lr {:.3e} |g| {:.4}",
                    s.round, s.epoch, s.step, s.loss, s.lr, s.grad_norm
                );
                if let Some(cb) = opts.on_step.as_mut() {
                    cb(s);
                }
            };
            train_epochs(
                &mut policy,
                &reference,
                &train,
                config.epochs,
                mode,
                &settings,
                &mut optimizer,
                round,
                key.label("train"),
                &mut log_step,
            )?
        };

        let rec = RoundRecord {
            round,
            mode,
            pairs: data.stats.clone(),
            steps: optimizer.step,
            first_loss: stats.first_loss(),
            mean_loss: (!stats.epoch_losses.is_empty()).then(|| stats.mean_loss()),
            final_epoch_loss: stats.epoch_losses.last().copied(),
            metrics: evaluate(policy.net(), round)?,
        };
        if let Some(d) = &dir {
            let rd = d.round_dir(round);
            RunDir::append(&d.root.join("stats.jsonl"), &jsonl(&stats.steps))?;
            RunDir::write_atomic(&rd.join("policy.ckpt"), &checkpoint::to_bytes(policy.net()))?;
            RunDir::write_atomic(&rd.join("optimizer.bin"), &optimizer.to_bytes())?;
            RunDir::append(
                &d.root.join("rounds.jsonl"),
                &jsonl(std::slice::from_ref(&rec)),
            )?;
        }
        rounds.push(rec);
        all_pairs.insert(round, data.pairs);
        all_stats.insert(round, stats);
    }

    Ok(DqoOutcome {
        policy,
        reference,
        rounds,
        pairs: all_pairs,
        train_stats: all_stats,
        resumed_from,
    })
}
