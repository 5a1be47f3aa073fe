//! Weighted MQM over a small annotation set, and the paired one-sided
//! randomization test on per-segment scores of two systems.
//!
//! `cargo run --example mqm_significance`

use dqoforge::evalsuite::{
    mqm_segment_scores, mqm_summary, mqm_weighted_score, paired_randomization_test,
    weighted_from_means, MqmError,
};

fn err(segment_id: usize, category: &str, severity: &str) -> MqmError {
    MqmError {
        segment_id,
        category: category.into(),
        severity: severity.into(),
    }
}

fn main() -> dqoforge::Result<()> {
    let n = 8;
    let baseline = vec![
        err(0, "Accuracy/Mistranslation", "major"),
        err(1, "Non-translation", "major"),
        err(2, "Fluency/Grammar", "minor"),
        err(3, "Fluency/Punctuation", "minor"),
        err(4, "Accuracy/Omission", "major"),
        err(5, "Fluency/Spelling", "minor"),
        err(6, "Accuracy/Mistranslation", "minor"),
        err(7, "Terminology/Inappropriate for context", "major"),
    ];
    let tuned = vec![
        err(0, "Accuracy/Mistranslation", "minor"),
        err(3, "Fluency/Punctuation", "minor"),
        err(4, "Accuracy/Omission", "major"),
        err(6, "Fluency/Grammar", "minor"),
    ];
    for (name, ann) in [("baseline", &baseline), ("tuned", &tuned)] {
        println!(
            "{name:<9} MQM {:.3} per segment",
            mqm_weighted_score(ann, n)?
        );
        println!("          {:?}", mqm_summary(ann, n)?);
    }

    // Lower MQM is better: is the tuned system better than the baseline?
    let a = mqm_segment_scores(&tuned, n)?;
    let b = mqm_segment_scores(&baseline, n)?;
    let exact = paired_randomization_test(&a, &b, 0, 0)?;
    println!("exact test over 2^{n} sign flips: p = {:.4}", exact.p_value);

    // Beyond twenty segments the test samples sign flips instead.
    let a: Vec<f64> = a.iter().cycle().take(40).copied().collect();
    let b: Vec<f64> = b.iter().cycle().take(40).copied().collect();
    let mc = paired_randomization_test(&a, &b, 10_000, 7)?;
    println!(
        "40 segments, {} sampled flips: p = {:.4}",
        mc.trials, mc.p_value
    );

    // Per-segment mean error counts map straight to the weighted score.
    println!(
        "means (0.03, 0.95, 0.89, 0.12) -> {:.3}",
        weighted_from_means(0.03, 0.95, 0.89, 0.12)
    );
    Ok(())
}
