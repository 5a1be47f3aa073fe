use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{Token, Vocab};
use crate::synthdata::{ideal_translate, LanguageRegistry, LanguageSpec};

/// A quality estimate in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QeScore(f64);

impl QeScore {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(QeScore(value))
        } else {
            Err(Error::input(format!(
                "quality score {value} is outside [0, 1]"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QeScore {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        QeScore::new(v)
    }
}

impl From<QeScore> for f64 {
    fn from(s: QeScore) -> f64 {
        s.0
    }
}

/// One (source, hypothesis) pair to score for a target language.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QeItem {
    pub lang: String,
    pub source: Vec<Token>,
    pub hyp: Vec<Token>,
}

/// A reference-free quality scorer.
pub trait QeScorer: Send + Sync {
    /// Scores in the same order as `items`.
    fn score_batch(&self, items: &[QeItem]) -> Result<Vec<QeScore>>;
}

impl<S: QeScorer + ?Sized> QeScorer for &S {
    fn score_batch(&self, items: &[QeItem]) -> Result<Vec<QeScore>> {
        (**self).score_batch(items)
    }
}

impl<S: QeScorer + ?Sized> QeScorer for Box<S> {
    fn score_batch(&self, items: &[QeItem]) -> Result<Vec<QeScore>> {
        (**self).score_batch(items)
    }
}

fn strip_eos(y: &[Token]) -> &[Token] {
    match y.split_last() {
        Some((&Vocab::EOS, rest)) => rest,
        _ => y,
    }
}

/// Token-level edit distance.
pub fn levenshtein(a: &[Token], b: &[Token]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − lev(y, ideal) / max(|y|, |ideal|)` with EOS removed from both sides.
pub fn oracle_qe(source: &[Token], hyp: &[Token], spec: &LanguageSpec) -> Result<QeScore> {
    let ideal = ideal_translate(spec, source)?;
    let (y, r) = (strip_eos(hyp), strip_eos(&ideal));
    let longest = y.len().max(r.len());
    if longest == 0 {
        return QeScore::new(1.0);
    }
    let s = 1.0 - levenshtein(y, r) as f64 / longest as f64;
    QeScore::new(s.clamp(0.0, 1.0))
}

/// Scores against the known ideal translation of each language.
#[derive(Clone, Debug)]
pub struct OracleScorer {
    registry: LanguageRegistry,
}

impl OracleScorer {
    pub fn new(registry: LanguageRegistry) -> Self {
        OracleScorer { registry }
    }

    pub fn registry(&self) -> &LanguageRegistry {
        &self.registry
    }

    pub fn score_one(&self, item: &QeItem) -> Result<QeScore> {
        oracle_qe(&item.source, &item.hyp, self.registry.get(&item.lang)?)
    }
}

impl QeScorer for OracleScorer {
    fn score_batch(&self, items: &[QeItem]) -> Result<Vec<QeScore>> {
        items.iter().map(|i| self.score_one(i)).collect()
    }
}

/// Memoizes another scorer by `(lang, source, hyp)`. Only cache misses are
/// forwarded, deduplicated, in one batch.
pub struct CachedScorer<S> {
    inner: S,
    cache: Mutex<HashMap<QeItem, QeScore>>,
}

impl<S: QeScorer> CachedScorer<S> {
    pub fn new(inner: S) -> Self {
        CachedScorer {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn clear(&self) {
        self.cache.lock().expect("cache lock").clear();
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: QeScorer> QeScorer for CachedScorer<S> {
    fn score_batch(&self, items: &[QeItem]) -> Result<Vec<QeScore>> {
        let mut misses: Vec<QeItem> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            let mut queued = std::collections::HashSet::new();
            for it in items {
                if !cache.contains_key(it) && queued.insert(it) {
                    misses.push(it.clone());
                }
            }
        }
        if !misses.is_empty() {
            let scores = self.inner.score_batch(&misses)?;
            if scores.len() != misses.len() {
                return Err(Error::Protocol(format!(
                    "scorer returned {} scores for {} items",
                    scores.len(),
                    misses.len()
                )));
            }
            let mut cache = self.cache.lock().expect("cache lock");
            cache.extend(misses.into_iter().zip(scores));
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(items.iter().map(|it| cache[it]).collect())
    }
}

/// `a ≻ b` under tolerance `eps`: strictly better by more than `eps`.
pub fn prefers(a: QeScore, b: QeScore, eps: f64) -> bool {
    a.value() > b.value() + eps
}

/// Scores `y1` and `y2` for `source` and applies [`prefers`].
pub fn prefer<S: QeScorer + ?Sized>(
    lang: &str,
    source: &[Token],
    y1: &[Token],
    y2: &[Token],
    scorer: &S,
    eps: f64,
) -> Result<bool> {
    if !(eps >= 0.0) {
        return Err(Error::input("tolerance must be non-negative"));
    }
    let item = |y: &[Token]| QeItem {
        lang: lang.to_string(),
        source: source.to_vec(),
        hyp: y.to_vec(),
    };
    let s = scorer.score_batch(&[item(y1), item(y2)])?;
    Ok(prefers(s[0], s[1], eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{make_language, Features, TokenLayout};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn spec() -> LanguageSpec {
        let layout = TokenLayout {
            languages: 1,
            words: 3,
            entities: 1,
        };
        make_language(0, "t", 0, "f", 0, Features::default(), layout)
    }

    fn q(x: f64) -> QeScore {
        QeScore::new(x).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let s = spec();
        let l = s.layout;
        let src = vec![l.source_word(0), l.source_word(1), l.source_word(2), 2];
        let ideal = ideal_translate(&s, &src).unwrap();
        assert_eq!(oracle_qe(&src, &ideal, &s).unwrap().value(), 1.0);
        let short = vec![ideal[0], ideal[1], 2];
        assert!((oracle_qe(&src, &short, &s).unwrap().value() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(oracle_qe(&src, &[2], &s).unwrap().value(), 0.0);
        assert_eq!(oracle_qe(&src, &[], &s).unwrap().value(), 0.0);
        assert_eq!(oracle_qe(&[2], &[2], &s).unwrap().value(), 1.0);
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(levenshtein(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(levenshtein(&[], &[4, 5]), 2);
        assert_eq!(levenshtein(&[1, 2], &[2, 1]), 2);
    }

    #[test]
    fn preference_examples() {
        assert!(prefers(q(0.800), q(0.790), 0.005));
        assert!(!prefers(q(0.8), q(0.8), 0.005));
        assert!(!prefers(q(0.800), q(0.796), 0.005));
        assert!(!prefers(q(0.5), q(0.5), 0.0));
    }

    #[test]
    fn scores_outside_the_unit_interval_are_rejected() {
        assert!(QeScore::new(1.5).is_err());
        assert!(QeScore::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<QeScore>("1.5").is_err());
        assert_eq!(
            serde_json::from_str::<QeScore>("0.25").unwrap().value(),
            0.25
        );
    }

    struct Counting(AtomicUsize);

    impl QeScorer for Counting {
        fn score_batch(&self, items: &[QeItem]) -> Result<Vec<QeScore>> {
            self.0.fetch_add(items.len(), Ordering::SeqCst);
            items
                .iter()
                .map(|i| QeScore::new(i.hyp.len() as f64 / 10.0))
                .collect()
        }
    }

    #[test]
    fn cache_forwards_each_distinct_item_once() {
        let c = CachedScorer::new(Counting(AtomicUsize::new(0)));
        let it = |h: Vec<Token>| QeItem {
            lang: "t".into(),
            source: vec![2],
            hyp: h,
        };
        let items = vec![it(vec![1]), it(vec![1, 1]), it(vec![1])];
        let s = c.score_batch(&items).unwrap();
        assert_eq!(
            s.iter().map(|x| x.value()).collect::<Vec<_>>(),
            vec![0.1, 0.2, 0.1]
        );
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 2);
        c.score_batch(&items).unwrap();
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 2);
        c.clear();
        c.score_batch(&items[..1]).unwrap();
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 3);
    }
}
