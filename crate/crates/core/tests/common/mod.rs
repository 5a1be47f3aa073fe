//! Independent oracles and small fixtures shared by the integration tests.
#![allow(dead_code)]

use dqoforge::seqmodel::{Architecture, Transformer, Vocab};
use dqoforge::synthdata::{CorpusConfig, LanguageDef, LanguageRegistry, SplitSizes};

pub fn tiny_arch(max_len: usize) -> Architecture {
    Architecture {
        d_model: 8,
        heads: 2,
        d_ff: 12,
        encoder_layers: 1,
        decoder_layers: 1,
        max_len,
    }
}

pub fn random_model(arch: Architecture, vocab_size: u32, seed: u64) -> Transformer {
    Transformer::init(arch, Vocab::new(vocab_size).unwrap(), seed).unwrap()
}

/// A small corpus config: `langs` languages split over `families` families.
pub fn small_corpus(langs: usize, families: usize, words: usize, entities: usize) -> CorpusConfig {
    let mut c = CorpusConfig::desk();
    c.words = words;
    c.entities = entities;
    c.languages = (0..langs)
        .map(|i| LanguageDef {
            id: format!("l{i}"),
            family: format!("f{}", i % families),
            transliteration: i % 2 == 0,
            suffixing: i % 3 == 1,
        })
        .collect();
    c.overrides.clear();
    c.sizes = SplitSizes {
        train: 20,
        dev: 4,
        test: 4,
    };
    c
}

pub fn small_registry(langs: usize, seed: u64) -> LanguageRegistry {
    LanguageRegistry::build(&small_corpus(langs, 2, 6, 3), seed).unwrap()
}

fn ngrams(toks: &[&str], n: usize) -> Vec<Vec<String>> {
    if toks.len() < n {
        return Vec::new();
    }
    (0..=toks.len() - n)
        .map(|i| toks[i..i + n].iter().map(|s| s.to_string()).collect())
        .collect()
}

/// Clipped matches of order `n`, by repeatedly striking matched reference n-grams.
fn clipped_matches(hyp: &[&str], reference: &[&str], n: usize) -> usize {
    let mut pool = ngrams(reference, n);
    let mut hits = 0;
    for g in ngrams(hyp, n) {
        if let Some(p) = pool.iter().position(|r| *r == g) {
            pool.swap_remove(p);
            hits += 1;
        }
    }
    hits
}

/// Corpus BLEU-4 written from the textbook definition: product of smoothed
/// precisions, fourth root, brevity penalty.
pub fn bleu_oracle(hyps: &[String], refs: &[String]) -> f64 {
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        let h: Vec<&str> = h.split_whitespace().collect();
        let rf: Vec<&str> = rf.split_whitespace().collect();
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            m[n - 1] += clipped_matches(&h, &rf, n);
            t[n - 1] += ngrams(&h, n).len();
        }
    }
    if t.contains(&0) {
        return 0.0;
    }
    let mut product = 1.0;
    let mut zeros = 0;
    for n in 0..4 {
        let p = if m[n] == 0 {
            zeros += 1;
            1.0 / (2f64.powi(zeros) * t[n] as f64)
        } else {
            m[n] as f64 / t[n] as f64
        };
        product *= p;
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * product.powf(0.25)
}

/// Winner index and qualifying-loser indices, found by sorting.
pub fn brute_force_pair(scores: &[f64], eps: f64) -> (usize, Vec<usize>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let w = order[0];
    let mut losers: Vec<usize> = order
        .into_iter()
        .filter(|&i| scores[w] > scores[i] + eps)
        .collect();
    losers.sort_unstable();
    (w, losers)
}

/// Binomial standard deviation of a frequency over `n` trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
