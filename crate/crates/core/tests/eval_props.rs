mod common;

use std::collections::BTreeMap;

use common::{bleu_oracle, random_model, tiny_arch};
use dqoforge::evalsuite::{
    corpus_bleu, group_aggregate, mqm_segment_scores, mqm_weighted_score,
    paired_randomization_test, segment_perplexity, training_perplexity, Group, LangGroups,
    MqmError,
};
use dqoforge::seqmodel::{sequence_log_prob, Token, Vocab};
use proptest::prelude::*;

fn sentence() -> impl Strategy<Value = String> {
    proptest::collection::vec(1u32..5, 0..=6).prop_map(|v| {
        v.iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    })
}

fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
    proptest::collection::vec((sentence(), sentence()), 1..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bleu_matches_the_oracle(c in corpus()) {
        let (h, r): (Vec<String>, Vec<String>) = c.into_iter().unzip();
        let got = corpus_bleu(&h, &r).unwrap();
        let want = bleu_oracle(&h, &r);
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn bleu_ignores_sentence_order(c in corpus(), rot in 0usize..5) {
        let (h, r): (Vec<String>, Vec<String>) = c.into_iter().unzip();
        let k = rot % h.len();
        let mut h2 = h.clone();
        let mut r2 = r.clone();
        h2.rotate_left(k);
        r2.rotate_left(k);
        h2.reverse();
        r2.reverse();
        prop_assert!((corpus_bleu(&h, &r).unwrap() - corpus_bleu(&h2, &r2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn exact_p_is_invariant_to_segment_order(
        pairs in proptest::collection::vec((0u32..8, 0u32..8), 1..=12),
        rot in 0usize..12,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 8.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 8.0).collect();
        let p = paired_randomization_test(&a, &b, 0, 0).unwrap();
        let k = rot % a.len();
        let (mut a2, mut b2) = (a.clone(), b.clone());
        a2.rotate_left(k);
        b2.rotate_left(k);
        a2.reverse();
        b2.reverse();
        let q = paired_randomization_test(&a2, &b2, 0, 0).unwrap();
        prop_assert!(p.exact && q.exact);
        prop_assert_eq!(p.p_value, q.p_value);
        prop_assert!(p.p_value > 0.0 && p.p_value <= 1.0);
    }

    #[test]
    fn partition_means_recombine_exactly(
        values in proptest::collection::vec(0u32..64, 6),
        aligned_mask in proptest::collection::vec(any::<bool>(), 6),
    ) {
        let langs: Vec<String> = (0..6).map(|i| format!("x{i}")).collect();
        let families: BTreeMap<String, String> =
            langs.iter().enumerate().map(|(i, l)| (l.clone(), format!("f{}", i / 2))).collect();
        let aligned: Vec<String> = langs.iter().zip(&aligned_mask).filter(|(_, &m)| m).map(|(l, _)| l.clone()).collect();
        let v: BTreeMap<String, f64> = langs.iter().zip(&values).map(|(l, &x)| (l.clone(), x as f64 / 4.0)).collect();
        let g = LangGroups::new(&families, &aligned, None).unwrap();
        let rows = group_aggregate(&v, &g).unwrap();
        let part = |grp: Group| {
            let r = rows.iter().find(|r| r.group == grp).unwrap();
            r.count as f64 * r.mean.unwrap_or(0.0)
        };
        prop_assert_eq!(part(Group::Aligned) + part(Group::Unaligned), part(Group::All));
        prop_assert_eq!(
            g.size(Group::RelatedUnaligned) + g.size(Group::Unrelated),
            g.size(Group::Unaligned)
        );
    }

    #[test]
    fn mqm_is_linear_in_error_counts(
        errs in proptest::collection::vec((0usize..4, 0usize..4), 0..20),
        k in 1usize..4,
    ) {
        let cats = ["Accuracy/Omission", "Fluency/Grammar", "Fluency/Punctuation", "Non-translation"];
        let sevs = ["major", "minor", "minor", "minor"];
        let ann: Vec<MqmError> = errs
            .iter()
            .map(|&(seg, c)| MqmError { segment_id: seg, category: cats[c].into(), severity: sevs[c].into() })
            .collect();
        let once = mqm_weighted_score(&ann, 4).unwrap();
        let repeated: Vec<MqmError> = ann.iter().cloned().cycle().take(ann.len() * k).collect();
        prop_assert!((mqm_weighted_score(&repeated, 4).unwrap() - k as f64 * once).abs() < 1e-9);
        let (left, right) = ann.split_at(ann.len() / 2);
        let sum = mqm_segment_scores(left, 4).unwrap().iter().sum::<f64>()
            + mqm_segment_scores(right, 4).unwrap().iter().sum::<f64>();
        prop_assert!((sum / 4.0 - once).abs() < 1e-9);
    }

    #[test]
    fn perplexity_is_at_least_one(seed in 0u64..500, tgt in proptest::collection::vec(3u32..10, 0..4)) {
        let m = random_model(tiny_arch(6), 10, seed);
        let mut t: Vec<Token> = tgt;
        t.push(Vocab::EOS);
        let src: Vec<Token> = vec![5, 6, Vocab::EOS];
        let ppl = training_perplexity(&m, &[(src.clone(), t.clone())]).unwrap();
        prop_assert!(ppl >= 1.0);
        let lp = sequence_log_prob(&m, &src, &t).unwrap();
        prop_assert!((ppl - (-lp / t.len() as f64).exp()).abs() < 1e-9 * ppl);
    }
}

#[test]
fn perplexity_averages_segments_arithmetically() {
    let m = random_model(tiny_arch(6), 10, 3);
    let sample: Vec<(Vec<Token>, Vec<Token>)> = vec![
        (vec![5, Vocab::EOS], vec![7, Vocab::EOS]),
        (vec![6, 5, Vocab::EOS], vec![8, 9, 3, Vocab::EOS]),
    ];
    let want: f64 = sample
        .iter()
        .map(|(s, t)| segment_perplexity(sequence_log_prob(&m, s, t).unwrap(), t.len()))
        .sum::<f64>()
        / 2.0;
    assert!((training_perplexity(&m, &sample).unwrap() - want).abs() < 1e-12);
    assert!(training_perplexity(&m, &[]).is_err());
}

#[test]
fn bleu_hand_example() {
    // Precisions 4/4, 3/3, 2/2, 1/1 and brevity penalty exp(1 − 5/4).
    let got = corpus_bleu(&["1 2 3 4"], &["1 2 3 4 5"]).unwrap();
    assert!((got - 100.0 * (1.0f64 - 5.0 / 4.0).exp()).abs() < 1e-9);
    assert_eq!(corpus_bleu(&["3 1 4 1 5"], &["3 1 4 1 5"]).unwrap(), 100.0);
}
