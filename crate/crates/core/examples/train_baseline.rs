//! Supervised baseline on the corrupted training split, with early
//! stopping on dev loss, then greedy translations of a few test sources.
//!
//! `cargo run --release --example train_baseline`

use dqoforge::evalsuite::training_perplexity;
use dqoforge::experiment::{prepare_data, run_baseline, ExperimentPlan};
use dqoforge::qescore::oracle_qe;
use dqoforge::seqmodel::{greedy_decode, tokens_to_string};

fn main() -> dqoforge::Result<()> {
    let mut plan = ExperimentPlan::smoke();
    plan.baseline.max_epochs = 15;
    let data = prepare_data(&plan, 1)?;
    let (train, dev) = (&data.splits.train, &data.splits.dev);

    let b = run_baseline(&plan, &data.registry, train, dev, 1, None)?;
    for e in &b.epochs {
        println!(
            "epoch {:>2}  train {:.4}  dev {:.4}{}",
            e.epoch,
            e.train_loss,
            e.dev_loss,
            if e.best { "  *" } else { "" }
        );
    }
    println!(
        "best epoch {}, stopped early: {}",
        b.best_epoch, b.stopped_early
    );

    let sample: Vec<_> = data
        .perplexity_sample
        .iter()
        .map(|r| {
            Ok((
                data.registry.get(&r.lang)?.model_input(&r.source),
                r.target.clone(),
            ))
        })
        .collect::<dqoforge::Result<_>>()?;
    println!(
        "training-data perplexity {:.3}",
        training_perplexity(&b.model, &sample)?
    );

    for r in data.splits.test.records.iter().take(3) {
        let spec = data.registry.get(&r.lang)?;
        let hyp = greedy_decode(&b.model, &spec.model_input(&r.source))?;
        println!(
            "[{}] {}  ->  {}",
            r.lang,
            tokens_to_string(&r.source),
            tokens_to_string(&hyp)
        );
        println!("     qe {:.3}", oracle_qe(&r.source, &hyp, spec)?.value());
    }
    Ok(())
}
