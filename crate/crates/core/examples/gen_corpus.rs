//! Builds the smoke-scale language inventory, generates its corpora and
//! shows what each corruption channel did to the training split.
//!
//! `cargo run --example gen_corpus [seed]`

use dqoforge::experiment::ExperimentPlan;
use dqoforge::qescore::oracle_qe;
use dqoforge::seqmodel::tokens_to_string;
use dqoforge::synthdata::{gen_corpus, ideal_translate, LanguageRegistry};

fn main() -> dqoforge::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(1, |s| s.parse().expect("seed is an integer"));
    let config = ExperimentPlan::smoke().corpus;
    let registry = LanguageRegistry::build(&config, seed)?;
    let splits = gen_corpus(&registry, &config, seed)?;

    println!("vocabulary: {} tokens", registry.vocab().size);
    for spec in &registry.languages {
        println!(
            "  {:<3} family {:<2} transliteration {:<5} suffixing {}",
            spec.id, spec.family, spec.features.transliteration, spec.features.suffixing
        );
    }
    println!(
        "train {} / dev {} / test {}",
        splits.train.len(),
        splits.dev.len(),
        splits.test.len()
    );
    for (channel, n) in splits.channel_counts() {
        println!("  {channel:<13} {n}");
    }

    // A few corrupted records next to the translation the language defines.
    for r in splits
        .train
        .records
        .iter()
        .filter(|r| r.is_corrupted())
        .take(4)
    {
        let spec = registry.get(&r.lang)?;
        let ideal = ideal_translate(spec, &r.source)?;
        let tags: Vec<&str> = r.tags.iter().map(|c| c.name()).collect();
        println!("\n[{}] {}", r.lang, tags.join("+"));
        println!("  source  {}", tokens_to_string(&r.source));
        println!(
            "  target  {}  (qe {:.3})",
            tokens_to_string(&r.target),
            oracle_qe(&r.source, &r.target, spec)?.value()
        );
        println!("  ideal   {}", tokens_to_string(&ideal));
    }
    Ok(())
}
