//! Scores an untrained model and the ideal-translation stub on the test
//! split and prints per-language values and the five group rows.
//!
//! `cargo run --release --example evaluate`

use dqoforge::evalsuite::{
    evaluate_outputs, group_report_csv, translate_split, IdealTranslator, LangGroups, Metric,
};
use dqoforge::experiment::{prepare_data, ExperimentPlan};
use dqoforge::seqmodel::Transformer;
use dqoforge::synthdata::ISOLATE_FAMILY;

fn main() -> dqoforge::Result<()> {
    let plan = ExperimentPlan::smoke();
    let data = prepare_data(&plan, 2)?;
    let registry = &data.registry;
    let langs = registry.ids();
    let metrics = [Metric::Bleu, Metric::Qe];
    let groups = LangGroups::new(&registry.families(), &plan.dqo.langs, Some(ISOLATE_FAMILY))?;

    let untrained = Transformer::init(plan.model.clone(), registry.vocab(), 2)?;
    let model = evaluate_outputs(
        registry,
        &translate_split(&untrained, registry, &data.splits.test, &langs)?,
        &metrics,
    )?;
    let ideal = evaluate_outputs(
        registry,
        &translate_split(&IdealTranslator, registry, &data.splits.test, &langs)?,
        &metrics,
    )?;

    println!("lang  bleu(model)  qe(model)  bleu(ideal)");
    for l in &langs {
        println!(
            "{l:<5} {:>11.2}  {:>9.4}  {:>11.2}",
            model[&Metric::Bleu][l],
            model[&Metric::Qe][l],
            ideal[&Metric::Bleu][l]
        );
    }
    let columns = vec![
        ("bleu".to_string(), model[&Metric::Bleu].clone()),
        ("qe".to_string(), model[&Metric::Qe].clone()),
        ("ideal_bleu".to_string(), ideal[&Metric::Bleu].clone()),
    ];
    print!("\n{}", group_report_csv(&columns, &groups)?);
    Ok(())
}
