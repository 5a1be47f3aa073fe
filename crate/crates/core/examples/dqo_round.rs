//! Preference rounds from a trained baseline: sample candidates, score
//! them with the oracle, build pairs and update the policy against the
//! frozen reference. Runs the same rounds with winner-only supervised
//! updates for comparison.
//!
//! `cargo run --release --example dqo_round`

use dqoforge::evalsuite::LangGroups;
use dqoforge::experiment::{dev_quality, prepare_data, run_baseline, ExperimentPlan};
use dqoforge::qescore::OracleScorer;
use dqoforge::seqmodel::{tokens_to_string, Transformer};
use dqoforge::synthdata::ISOLATE_FAMILY;
use dqoforge::trainer::{run_dqo, RunOptions, TrainMode};

fn main() -> dqoforge::Result<()> {
    let mut plan = ExperimentPlan::smoke();
    plan.baseline.max_epochs = 10;
    plan.dqo.rounds = 3;
    plan.dqo.sources_per_round = 32;
    plan.dqo.learning_rate = 1e-3;
    let data = prepare_data(&plan, 1)?;
    let registry = &data.registry;
    let baseline = run_baseline(
        &plan,
        registry,
        &data.splits.train,
        &data.splits.dev,
        1,
        None,
    )?
    .model;

    let groups = LangGroups::new(&registry.families(), &plan.dqo.langs, Some(ISOLATE_FAMILY))?;
    let metric = plan.quality_metric;
    let evaluator =
        |m: &Transformer, _: usize| dev_quality(m, registry, &data.splits.dev, &groups, metric);
    let pool: Vec<_> = data
        .splits
        .train
        .records
        .iter()
        .map(|r| r.source.clone())
        .collect();
    let scorer = OracleScorer::new(registry.clone());

    for mode in [TrainMode::Dpo, TrainMode::Sft] {
        let out = run_dqo(
            &baseline,
            &pool,
            registry,
            &scorer,
            &plan.dqo,
            mode,
            RunOptions {
                evaluator: Some(&evaluator),
                ..Default::default()
            },
        )?;
        println!("== {}", mode.name());
        for r in &out.rounds {
            let t = r.metrics.get("dev_qe_t").copied().unwrap_or(f64::NAN);
            let loss = r.mean_loss.map_or("-".to_string(), |l| format!("{l:.4}"));
            println!(
                "round {}  pairs {:>3}  mean loss {loss:>7}  dev qe on aligned {t:.4}",
                r.round, r.pairs.pairs
            );
        }
        if let Some(p) = out.pairs.get(&1).and_then(|v| v.first()) {
            println!("a round-1 pair for {}:", p.lang);
            println!(
                "  chosen   {} ({:.3})",
                tokens_to_string(&p.chosen),
                p.score_w.value()
            );
            println!(
                "  rejected {} ({:.3})",
                tokens_to_string(&p.rejected),
                p.score_l.value()
            );
        }
    }
    Ok(())
}
