use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainMode;
use super::optim::{clip_global_norm, learning_rate, Optimizer};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::seqmodel::{
    grad_of_scalar, sequence_log_probs, PolicyModel, ReferenceModel, SeqModel, Token,
};

/// A pair ready for the model: the source already carries its language tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainPair {
    pub input: Vec<Token>,
    pub chosen: Vec<Token>,
    /// Ignored (and may be empty) in supervised mode.
    pub rejected: Vec<Token>,
}

impl TrainPair {
    pub fn tokens(&self) -> usize {
        self.input.len() + self.chosen.len() + self.rejected.len()
    }
}

/// Optimization settings shared by every training loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSettings {
    pub learning_rate: f64,
    pub beta: f64,
    pub batch_tokens: usize,
    pub warmup_steps: u64,
    pub clip_norm: f64,
}

/// One optimizer step, as written to `stats.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: usize,
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub pairs: usize,
    pub tokens: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: Vec<StepRecord>,
    /// Pair-weighted mean loss of each epoch.
    pub epoch_losses: Vec<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

impl TrainStats {
    pub fn first_loss(&self) -> Option<f64> {
        self.steps.first().map(|s| s.loss)
    }

    pub fn mean_loss(&self) -> f64 {
        if self.epoch_losses.is_empty() {
            return f64::NAN;
        }
        self.epoch_losses.iter().sum::<f64>() / self.epoch_losses.len() as f64
    }
}

/// Splits `order` into consecutive batches whose token counts stay within
/// `budget`. A single item above the budget becomes its own batch.
pub fn pack_batches(
    order: &[usize],
    tokens: impl Fn(usize) -> usize,
    budget: usize,
) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut used = 0;
    for &i in order {
        let t = tokens(i);
        if !cur.is_empty() && used + t > budget {
            out.push(std::mem::take(&mut cur));
            used = 0;
        }
        cur.push(i);
        used += t;
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Mean batch loss and its gradient. `reference` holds `(lp_w_ref, lp_l_ref)`
/// per pair in DPO mode.
pub fn batch_gradient(
    policy: &PolicyModel,
    pairs: &[&TrainPair],
    reference: &[(f64, f64)],
    mode: TrainMode,
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = pairs.len() as f64;
    grad_of_scalar(policy, |scope| {
        let mut terms = Vec::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            let lp_w = scope.log_prob(&p.input, &p.chosen)?;
            let term = match mode {
                TrainMode::Sft => scope.tape().neg(lp_w),
                TrainMode::Dpo => {
                    let lp_l = scope.log_prob(&p.input, &p.rejected)?;
                    let (w_ref, l_ref) = reference[i];
                    let tape = scope.tape();
                    let d = tape.sub(lp_w, lp_l);
                    let c = tape.scalar(w_ref - l_ref);
                    let margin = tape.sub(d, c);
                    let z = tape.scale(margin, -beta);
                    tape.softplus(z)
                }
            };
            terms.push(term);
        }
        let tape = scope.tape();
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = tape.add(total, t);
        }
        Ok(tape.scale(total, 1.0 / n))
    })
}

/// Reference log-probabilities `(chosen, rejected)` for every pair.
pub fn reference_log_probs<M: SeqModel + ?Sized>(
    reference: &M,
    pairs: &[TrainPair],
) -> Result<Vec<(f64, f64)>> {
    pairs
        .iter()
        .map(|p| {
            let lp = sequence_log_probs(reference, &p.input, &[&p.chosen, &p.rejected])?;
            Ok((lp[0], lp[1]))
        })
        .collect()
}

/// Clips, schedules and applies one update; returns `(lr, norm before clipping)`.
pub fn apply_update(
    policy: &mut PolicyModel,
    optimizer: &mut Optimizer,
    grad: &mut [f64],
    s: &StepSettings,
) -> (f64, f64) {
    let norm = clip_global_norm(grad, s.clip_norm);
    let lr = learning_rate(s.learning_rate, optimizer.step + 1, s.warmup_steps);
    optimizer.update(policy.params_mut(), grad, lr);
    (lr, norm)
}

/// `epochs` passes over `pairs`, reshuffled each epoch from `key`.
///
/// The reference model is only read; its log-probabilities are computed once
/// up front. Steps are numbered globally through `optimizer.step`.
#[allow(clippy::too_many_arguments)]
pub fn train_epochs(
    policy: &mut PolicyModel,
    reference: &ReferenceModel,
    pairs: &[TrainPair],
    epochs: usize,
    mode: TrainMode,
    settings: &StepSettings,
    optimizer: &mut Optimizer,
    round: usize,
    key: StreamKey,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<TrainStats> {
    let fail = |detail: String| Error::Training {
        round,
        stage: "train",
        detail,
    };
    if pairs.is_empty() {
        return Err(fail("no pairs to train on".into()));
    }
    let start = Instant::now();
    let refs = match mode {
        TrainMode::Dpo => reference_log_probs(reference, pairs)
            .map_err(|e| fail(format!("reference scoring: {e}")))?,
        TrainMode::Sft => vec![(0.0, 0.0); pairs.len()],
    };
    let mut stats = TrainStats::default();
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut key.label("shuffle").index(epoch as u64).rng());
        let batches = pack_batches(&order, |i| pairs[i].tokens(), settings.batch_tokens);
        let mut epoch_loss = 0.0;
        for batch in batches {
            let members: Vec<&TrainPair> = batch.iter().map(|&i| &pairs[i]).collect();
            let batch_refs: Vec<(f64, f64)> = batch.iter().map(|&i| refs[i]).collect();
            let (loss, mut grad) =
                batch_gradient(policy, &members, &batch_refs, mode, settings.beta).map_err(
                    |e| fail(format!("epoch {epoch}, step {}: {e}", optimizer.step + 1)),
                )?;
            if !loss.is_finite() {
                return Err(fail(format!(
                    "epoch {epoch}, step {}: loss is {loss}",
                    optimizer.step + 1
                )));
            }
            let (lr, grad_norm) = apply_update(policy, optimizer, &mut grad, settings);
            epoch_loss += loss * batch.len() as f64;
            let rec = StepRecord {
                round,
                epoch,
                step: optimizer.step,
                loss,
                lr,
                grad_norm,
                pairs: batch.len(),
                tokens: members.iter().map(|p| p.tokens()).sum(),
            };
            on_step(&rec);
            stats.steps.push(rec);
        }
        stats.epoch_losses.push(epoch_loss / pairs.len() as f64);
    }
    stats.seconds = start.elapsed().as_secs_f64();
    Ok(stats)
}
