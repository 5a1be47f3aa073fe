use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::seqmodel::{tokens_to_string, Token, Vocab};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of corpus BLEU.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub correct: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub sys_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<'t, 'a>(toks: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    pub fn add(&mut self, hyp: &str, reference: &str) {
        let h: Vec<&str> = hyp.split_whitespace().collect();
        let r: Vec<&str> = reference.split_whitespace().collect();
        self.sys_len += h.len();
        self.ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            self.total[n - 1] += h.len().saturating_sub(n - 1);
            self.correct[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(*rc.get(g).unwrap_or(&0)))
                .sum::<usize>();
        }
    }

    /// Score with exponential smoothing of zero-match orders, no effective
    /// order, and brevity penalty `exp(1 − r/c)` for `c < r`.
    pub fn score(&self) -> f64 {
        let mut precisions = [0.0; MAX_ORDER];
        let mut smooth = 1.0;
        for n in 0..MAX_ORDER {
            if self.total[n] == 0 {
                break;
            }
            precisions[n] = if self.correct[n] == 0 {
                smooth *= 2.0;
                1.0 / (smooth * self.total[n] as f64)
            } else {
                self.correct[n] as f64 / self.total[n] as f64
            };
        }
        let bp = if self.sys_len < self.ref_len {
            if self.sys_len > 0 {
                (1.0 - self.ref_len as f64 / self.sys_len as f64).exp()
            } else {
                0.0
            }
        } else {
            1.0
        };
        let log_sum: f64 = precisions
            .iter()
            .map(|&p| if p == 0.0 { -9_999_999_999.0 } else { p.ln() })
            .sum();
        100.0 * bp * (log_sum / MAX_ORDER as f64).exp()
    }
}

/// Corpus BLEU-4 in `[0, 100]` over whitespace-separated tokens, one
/// reference per hypothesis.
pub fn corpus_bleu<S: AsRef<str>>(hypotheses: &[S], references: &[S]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::input(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::input("BLEU of an empty corpus"));
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add(h.as_ref(), r.as_ref());
    }
    Ok(stats.score())
}

/// Token ids rendered for BLEU: EOS dropped, ids joined by spaces.
pub fn bleu_text(tokens: &[Token]) -> String {
    match tokens.split_last() {
        Some((&Vocab::EOS, rest)) => tokens_to_string(rest),
        _ => tokens_to_string(tokens),
    }
}

/// [`corpus_bleu`] over token sequences.
pub fn corpus_bleu_tokens(hypotheses: &[Vec<Token>], references: &[Vec<Token>]) -> Result<f64> {
    let h: Vec<String> = hypotheses.iter().map(|t| bleu_text(t)).collect();
    let r: Vec<String> = references.iter().map(|t| bleu_text(t)).collect();
    corpus_bleu(&h, &r)
}
