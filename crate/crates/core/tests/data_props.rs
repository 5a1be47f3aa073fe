mod common;

use std::collections::HashMap;

use common::{brute_force_pair, random_model, small_corpus, small_registry};
use dqoforge::prefdata::{build_pair, gather_candidates, CandidateSet, PairOutcome};
use dqoforge::qescore::{oracle_qe, prefer, prefers, OracleScorer, QeScore};
use dqoforge::rng::StreamKey;
use dqoforge::seqmodel::{SamplerParams, Token, Vocab};
use dqoforge::synthdata::{
    corrupt, gen_corpus, ideal_translate, Channel, CorruptionConfig, LanguageRegistry, Record,
    SourceShape,
};
use proptest::prelude::*;

fn registry() -> LanguageRegistry {
    small_registry(4, 7)
}

/// First content token id (the first source word).
fn base(reg: &LanguageRegistry) -> Token {
    reg.layout.source_word(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ideal_translation_is_injective_per_length(
        (a, b) in (1usize..8).prop_flat_map(|n| (
            proptest::collection::vec(0u32..9, n),
            proptest::collection::vec(0u32..9, n),
        )),
        lang in 0usize..4,
    ) {
        prop_assume!(a != b);
        let reg = registry();
        let shift = |s: &Vec<Token>| -> Vec<Token> {
            let mut v: Vec<Token> = s.iter().map(|&t| t + base(&reg)).collect();
            v.push(Vocab::EOS);
            v
        };
        let spec = &reg.languages[lang];
        let (ya, yb) = (ideal_translate(spec, &shift(&a)).unwrap(), ideal_translate(spec, &shift(&b)).unwrap());
        prop_assert_ne!(ya, yb);
    }

    #[test]
    fn ideal_output_scores_one(raw in proptest::collection::vec(0u32..9, 1..12), lang in 0usize..4) {
        let reg = registry();
        let mut src: Vec<Token> = raw.iter().map(|&t| t + base(&reg)).collect();
        src.push(Vocab::EOS);
        let spec = &reg.languages[lang];
        let y = ideal_translate(spec, &src).unwrap();
        prop_assert_eq!(oracle_qe(&src, &y, spec).unwrap().value(), 1.0);
    }

    #[test]
    fn preference_is_irreflexive_and_asymmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0, eps in 0.0f64..0.5) {
        let (qa, qb) = (QeScore::new(a).unwrap(), QeScore::new(b).unwrap());
        prop_assert!(!prefers(qa, qa, eps));
        prop_assert!(!(prefers(qa, qb, eps) && prefers(qb, qa, eps)));
    }

    #[test]
    fn emitted_pairs_respect_the_tolerance(
        raw in proptest::collection::vec(0u32..=20, 1..12),
        eps_i in 0u32..4,
        seed in 0u64..1000,
    ) {
        let eps = [0.0, 0.005, 0.05, 0.2][eps_i as usize];
        let cands = synthetic_set(&raw.iter().map(|&r| r as f64 / 20.0).collect::<Vec<_>>());
        if let PairOutcome::Pair(p) = build_pair(&cands, eps, 1, &mut StreamKey::root(seed).rng()) {
            prop_assert!(prefers(p.score_w, p.score_l, eps));
            prop_assert!(cands.scores.iter().all(|s| s.value() <= p.score_w.value()));
            prop_assert_ne!(p.chosen, p.rejected);
        }
    }
}

#[test]
fn prefer_scores_through_the_scorer() {
    let reg = registry();
    let spec = reg.languages[0].clone();
    let src = vec![base(&reg), base(&reg) + 1, base(&reg) + 2, Vocab::EOS];
    let ideal = ideal_translate(&spec, &src).unwrap();
    let mut worse = ideal.clone();
    worse.remove(0);
    let scorer = OracleScorer::new(reg);
    assert!(prefer(&spec.id, &src, &ideal, &worse, &scorer, 0.005).unwrap());
    assert!(!prefer(&spec.id, &src, &worse, &ideal, &scorer, 0.005).unwrap());
    assert!(!prefer(&spec.id, &src, &ideal, &ideal, &scorer, 0.0).unwrap());
    assert!(prefer(&spec.id, &src, &ideal, &worse, &scorer, -1.0).is_err());
}

#[test]
fn clean_corpus_records_score_one() {
    let mut cfg = small_corpus(4, 2, 6, 3);
    cfg.corruption = CorruptionConfig::default();
    let reg = LanguageRegistry::build(&cfg, 3).unwrap();
    let splits = gen_corpus(&reg, &cfg, 3).unwrap();
    for r in splits
        .train
        .records
        .iter()
        .chain(&splits.dev.records)
        .chain(&splits.test.records)
    {
        assert!(!r.is_corrupted());
        assert_eq!(
            oracle_qe(&r.source, &r.target, reg.get(&r.lang).unwrap())
                .unwrap()
                .value(),
            1.0
        );
    }
}

#[test]
fn every_channel_at_rate_one_lowers_the_oracle_score() {
    let reg = registry();
    // l0 transliterates, so feature drop has an effect on entities.
    let spec = reg.get("l0").unwrap();
    assert!(spec.features.transliteration);
    let l = reg.layout;
    let mut rng = StreamKey::root(1).label("sources").rng();
    let shape = SourceShape::default();
    for c in Channel::ALL {
        for trial in 0..50 {
            let mut source = dqoforge::synthdata::draw_source(&l, &shape, &mut rng);
            // Non-degenerate: at least two words and one entity.
            source.insert(0, l.entity(trial % l.entities));
            source.insert(0, l.source_word(0));
            let clean = Record {
                lang: spec.id.clone(),
                target: ideal_translate(spec, &source).unwrap(),
                source: source.clone(),
                tags: vec![],
            };
            let mut crng = StreamKey::root(trial as u64).label(c.name()).rng();
            let out = corrupt(
                spec,
                &clean,
                &CorruptionConfig::only(c, 1.0),
                &shape,
                &mut crng,
            )
            .unwrap();
            let q = oracle_qe(&out.source, &out.target, spec).unwrap().value();
            assert!(q < 1.0, "{c} left QE at {q}");
        }
    }
}

#[test]
fn ideal_translation_uniquely_maximizes_the_oracle() {
    // Three target-side content tokens plus EOS: every candidate up to
    // |ideal| + 1 content tokens is enumerated.
    let mut cfg = small_corpus(1, 1, 2, 1);
    cfg.languages[0].suffixing = false;
    let reg = LanguageRegistry::build(&cfg, 5).unwrap();
    let spec = reg.get("l0").unwrap();
    let l = reg.layout;
    let alphabet: Vec<Token> = vec![
        l.target_word(0),
        l.target_word(1),
        l.marked(0),
        l.source_word(0),
    ];
    for source in [
        vec![l.source_word(0), Vocab::EOS],
        vec![l.source_word(1), l.entity(0), Vocab::EOS],
    ] {
        let ideal = ideal_translate(spec, &source).unwrap();
        let content = ideal.len() - 1;
        let mut best = Vec::new();
        let mut best_score = -1.0;
        let mut ties = 0;
        let mut stack: Vec<Vec<Token>> = vec![vec![]];
        while let Some(prefix) = stack.pop() {
            let mut y = prefix.clone();
            y.push(Vocab::EOS);
            let s = oracle_qe(&source, &y, spec).unwrap().value();
            if s > best_score {
                best_score = s;
                best = y;
                ties = 1;
            } else if s == best_score {
                ties += 1;
            }
            if prefix.len() <= content {
                for &t in &alphabet {
                    let mut next = prefix.clone();
                    next.push(t);
                    stack.push(next);
                }
            }
        }
        assert_eq!(best, ideal);
        assert_eq!(best_score, 1.0);
        assert_eq!(ties, 1);
    }
}

fn synthetic_set(scores: &[f64]) -> CandidateSet {
    CandidateSet {
        lang: "l0".into(),
        source: vec![5, Vocab::EOS],
        candidates: (0..scores.len())
            .map(|i| vec![10 + i as Token, Vocab::EOS])
            .collect(),
        scores: scores.iter().map(|&s| QeScore::new(s).unwrap()).collect(),
    }
}

#[test]
fn pair_construction_agrees_with_brute_force() {
    let mut rng = StreamKey::root(2024).label("sets").rng();
    use rand::Rng;
    for trial in 0..1000u64 {
        let n = rng.gen_range(1..=9);
        // Coarse grid so ties and near-ties within ε are common.
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..=40) as f64 / 40.0)
            .collect();
        let eps = if trial % 3 == 0 { 0.0 } else { 0.005 };
        let (w, losers) = brute_force_pair(&scores, eps);
        let cands = synthetic_set(&scores);
        match build_pair(&cands, eps, 1, &mut StreamKey::root(trial).rng()) {
            PairOutcome::Pair(p) => {
                assert_eq!(p.provenance.winner_index, w);
                assert!(losers.contains(&p.provenance.loser_index));
                assert_eq!(p.provenance.qualifying_losers, losers.len());
            }
            PairOutcome::NoQualifyingLoser => assert!(losers.is_empty()),
            PairOutcome::IdenticalStrings => panic!("distinct strings cannot collide"),
        }
    }
}

#[test]
fn gathering_returns_greedy_plus_k_and_is_reproducible() {
    let reg = registry();
    let spec = reg.get("l1").unwrap();
    let model = random_model(common::tiny_arch(16), reg.vocab().size, 4);
    let scorer = OracleScorer::new(reg.clone());
    let params = SamplerParams {
        top_k: 4,
        top_p: 0.9,
        max_len: 16,
    };
    let src = vec![base(&reg), base(&reg) + 3, Vocab::EOS];
    let key = StreamKey::root(9).label("cands");
    let a = gather_candidates(&model, spec, &src, 6, &params, &scorer, key).unwrap();
    let b = gather_candidates(&model, spec, &src, 6, &params, &scorer, key).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.candidates.len(), 7);
    assert_eq!(
        a.candidates[0],
        dqoforge::seqmodel::greedy_decode(&model, &spec.model_input(&src)).unwrap()
    );

    // With K = 1 every sample is the greedy output, kept as distinct entries.
    let top1 = SamplerParams { top_k: 1, ..params };
    let c = gather_candidates(&model, spec, &src, 1, &top1, &scorer, key).unwrap();
    assert_eq!(c.candidates.len(), 2);
    assert_eq!(c.candidates[0], c.candidates[1]);
}

#[test]
fn loser_choice_is_uniform_over_qualifiers() {
    let cands = synthetic_set(&[0.9, 0.6, 0.5, 0.4, 0.898]);
    let n = 10_000;
    let mut counts: HashMap<usize, usize> = HashMap::new();
    let mut rng = StreamKey::root(31).label("uniformity").rng();
    for _ in 0..n {
        match build_pair(&cands, 0.005, 1, &mut rng) {
            PairOutcome::Pair(p) => *counts.entry(p.provenance.loser_index).or_default() += 1,
            other => panic!("unexpected {other:?}"),
        }
    }
    assert_eq!(counts.len(), 3);
    let sigma = common::binomial_sigma(1.0 / 3.0, n);
    for (&i, &c) in &counts {
        assert!([1, 2, 3].contains(&i));
        assert!(
            (c as f64 / n as f64 - 1.0 / 3.0).abs() <= 3.0 * sigma,
            "loser {i}: {c}"
        );
    }
}
