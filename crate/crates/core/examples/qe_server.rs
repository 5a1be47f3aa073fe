//! Starts the mock QE service on an ephemeral port, scores a batch through
//! the HTTP client and checks it against the in-process oracle. The second
//! half injects a dropped connection and a 503 to show the retries.
//!
//! `cargo run --example qe_server`

use dqoforge::experiment::ExperimentPlan;
use dqoforge::qescore::{
    FaultPlan, MockQeServer, OracleScorer, QeItem, QeScorer, RemoteConfig, RemoteScorer,
};
use dqoforge::synthdata::{gen_corpus, LanguageRegistry};

fn main() -> dqoforge::Result<()> {
    let config = ExperimentPlan::smoke().corpus;
    let registry = LanguageRegistry::build(&config, 3)?;
    let splits = gen_corpus(&registry, &config, 3)?;
    let items: Vec<QeItem> = splits
        .train
        .records
        .iter()
        .take(40)
        .map(|r| QeItem {
            lang: r.lang.clone(),
            source: r.source.clone(),
            hyp: r.target.clone(),
        })
        .collect();
    let oracle = OracleScorer::new(registry.clone()).score_batch(&items)?;

    let local = "127.0.0.1:0".parse().unwrap();
    let server = MockQeServer::new(registry.clone(), FaultPlan::default()).spawn(local)?;
    let client = RemoteScorer::new(RemoteConfig {
        url: server.url(),
        max_batch: 16,
        ..Default::default()
    })?;
    let remote = client.score_batch(&items)?;
    println!("{} at {}", items.len(), server.url());
    println!("  identical to oracle: {}", remote == oracle);
    println!("  requests served: {}", server.stats().requests());
    server.stop()?;

    let flaky = MockQeServer::new(
        registry,
        FaultPlan {
            drop_connections: 1,
            statuses: vec![503],
            ..Default::default()
        },
    )
    .spawn(local)?;
    let client = RemoteScorer::new(RemoteConfig {
        url: flaky.url(),
        ..Default::default()
    })?;
    let again = client.score_batch(&items[..5])?;
    println!(
        "flaky server: {} scores after {} retries",
        again.len(),
        client.retries()
    );
    flaky.stop()
}
