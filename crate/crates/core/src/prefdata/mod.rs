//! Preference pairs from scored candidate translations.
//!
//! For every sampled source the current policy produces its greedy output and
//! `k` samples. The best-scoring candidate wins; the loser is drawn uniformly
//! from the candidates it beats by more than the tolerance. Sources where no
//! candidate qualifies contribute no pair.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::thread;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qescore::{prefers, QeItem, QeScore, QeScorer};
use crate::rng::StreamKey;
use crate::seqmodel::{
    tokens_from_str, tokens_to_string, EncodedSource, SamplerParams, SeqModel, Token,
};
use crate::synthdata::{LanguageRegistry, LanguageSpec};

/// The greedy output (index 0) followed by `k` samples, with their scores.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub lang: String,
    pub source: Vec<Token>,
    pub candidates: Vec<Vec<Token>>,
    pub scores: Vec<QeScore>,
}

impl CandidateSet {
    pub fn greedy(&self) -> &[Token] {
        &self.candidates[0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// The winner's string equals the greedy output.
    pub greedy_in_winner: bool,
    pub winner_index: usize,
    pub loser_index: usize,
    /// Candidates sharing the top score (1 when the maximum is unique).
    pub tied_at_max: usize,
    pub qualifying_losers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferencePair {
    pub round: usize,
    pub lang: String,
    pub source: Vec<Token>,
    pub chosen: Vec<Token>,
    pub rejected: Vec<Token>,
    pub score_w: QeScore,
    pub score_l: QeScore,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PairOutcome {
    Pair(PreferencePair),
    /// Nothing scores more than the tolerance below the winner.
    NoQualifyingLoser,
    /// The drawn loser is the same string as the winner.
    IdenticalStrings,
}

/// Samples the candidate multiset for one source. Sample `j` draws from
/// stream `key.index(j)`.
pub fn sample_candidates<M: SeqModel + ?Sized>(
    model: &M,
    spec: &LanguageSpec,
    source: &[Token],
    k: usize,
    params: &SamplerParams,
    key: StreamKey,
) -> Result<Vec<Vec<Token>>> {
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    params.validate()?;
    let input = spec.model_input(source);
    let enc = EncodedSource::new(model, &input)?;
    let mut out = Vec::with_capacity(k + 1);
    out.push(enc.greedy(params.max_len));
    for j in 0..k {
        out.push(enc.sample(params, &mut key.index(j as u64).rng()));
    }
    Ok(out)
}

fn score_candidates<S: QeScorer + ?Sized>(
    scorer: &S,
    lang: &str,
    source: &[Token],
    candidates: Vec<Vec<Token>>,
) -> Result<CandidateSet> {
    let items: Vec<QeItem> = candidates
        .iter()
        .map(|c| QeItem {
            lang: lang.to_string(),
            source: source.to_vec(),
            hyp: c.clone(),
        })
        .collect();
    let scores = scorer.score_batch(&items)?;
    Ok(CandidateSet {
        lang: lang.to_string(),
        source: source.to_vec(),
        candidates,
        scores,
    })
}

/// Greedy output plus `k` samples, all scored. Duplicates are kept.
#[allow(clippy::too_many_arguments)]
pub fn gather_candidates<M: SeqModel + ?Sized, S: QeScorer + ?Sized>(
    model: &M,
    spec: &LanguageSpec,
    source: &[Token],
    k: usize,
    params: &SamplerParams,
    scorer: &S,
    key: StreamKey,
) -> Result<CandidateSet> {
    let cands = sample_candidates(model, spec, source, k, params, key)?;
    score_candidates(scorer, &spec.id, source, cands)
}

/// First index holding the maximum score.
fn winner(scores: &[QeScore]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.value() > scores[best].value() {
            best = i;
        }
    }
    best
}

/// Picks the winner and a uniformly drawn qualifying loser.
pub fn build_pair<R: Rng + ?Sized>(
    cands: &CandidateSet,
    eps: f64,
    round: usize,
    rng: &mut R,
) -> PairOutcome {
    let scores = &cands.scores;
    let w = winner(scores);
    let score_w = scores[w];
    let losers: Vec<usize> = (0..scores.len())
        .filter(|&i| prefers(score_w, scores[i], eps))
        .collect();
    if losers.is_empty() {
        return PairOutcome::NoQualifyingLoser;
    }
    let l = losers[rng.gen_range(0..losers.len())];
    if cands.candidates[w] == cands.candidates[l] {
        return PairOutcome::IdenticalStrings;
    }
    PairOutcome::Pair(PreferencePair {
        round,
        lang: cands.lang.clone(),
        source: cands.source.clone(),
        chosen: cands.candidates[w].clone(),
        rejected: cands.candidates[l].clone(),
        score_w,
        score_l: scores[l],
        provenance: Provenance {
            greedy_in_winner: cands.candidates[w] == cands.candidates[0],
            winner_index: w,
            loser_index: l,
            tied_at_max: scores
                .iter()
                .filter(|s| s.value() == score_w.value())
                .count(),
            qualifying_losers: losers.len(),
        },
    })
}

/// Settings of one round's pair construction.
#[derive(Clone, Debug)]
pub struct RoundSpec<'a> {
    pub round: usize,
    /// Languages a source may be translated into, drawn uniformly.
    pub langs: &'a [String],
    pub sources_per_round: usize,
    pub samples_per_source: usize,
    pub sampler: SamplerParams,
    pub tolerance: f64,
    /// Allow drawing more sources than the pool holds.
    pub with_replacement: bool,
    pub threads: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPairStats {
    pub sources: usize,
    pub candidates_scored: usize,
    pub pairs: usize,
    pub dropped_no_loser: usize,
    pub dropped_identical: usize,
    pub greedy_wins: usize,
}

#[derive(Clone, Debug)]
pub struct RoundDataset {
    pub pairs: Vec<PreferencePair>,
    pub candidate_sets: Vec<CandidateSet>,
    pub stats: RoundPairStats,
}

/// Indices into the pool for this round's sources, in draw order.
pub fn draw_source_indices(
    pool: usize,
    d: usize,
    with_replacement: bool,
    key: StreamKey,
) -> Result<Vec<usize>> {
    if pool == 0 {
        return Err(Error::input("source pool is empty"));
    }
    let mut rng = key.label("sources").rng();
    if d <= pool {
        Ok(index::sample(&mut rng, pool, d).into_vec())
    } else if with_replacement {
        Ok((0..d).map(|_| rng.gen_range(0..pool)).collect())
    } else {
        Err(Error::input(format!(
            "{d} sources requested from a pool of {pool} without replacement"
        )))
    }
}

/// One round of pair construction: sources, languages, candidates, one
/// batched scoring call, pairs. Output order follows source draw order.
pub fn build_round_dataset<M, S>(
    pool: &[Vec<Token>],
    registry: &LanguageRegistry,
    model: &M,
    scorer: &S,
    spec: &RoundSpec<'_>,
    key: StreamKey,
) -> Result<RoundDataset>
where
    M: SeqModel + Sync + ?Sized,
    S: QeScorer + ?Sized,
{
    if spec.langs.is_empty() {
        return Err(Error::input("no languages to align"));
    }
    let specs: Vec<&LanguageSpec> = spec
        .langs
        .iter()
        .map(|l| registry.get(l))
        .collect::<Result<_>>()?;
    let picked = draw_source_indices(
        pool.len(),
        spec.sources_per_round,
        spec.with_replacement,
        key,
    )?;
    let jobs: Vec<(usize, &LanguageSpec)> = picked
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let l = key
                .label("lang")
                .index(i as u64)
                .rng()
                .gen_range(0..specs.len());
            (p, specs[l])
        })
        .collect();

    let sample_one = |i: usize| -> Result<Vec<Vec<Token>>> {
        let (p, lang) = jobs[i];
        let k = key.label("sample").index(i as u64);
        sample_candidates(
            model,
            lang,
            &pool[p],
            spec.samples_per_source,
            &spec.sampler,
            k,
        )
    };
    let n_jobs = jobs.len();
    let threads = spec.threads.max(1).min(n_jobs.max(1));
    let sampled: Vec<Vec<Vec<Token>>> = if threads == 1 {
        (0..jobs.len()).map(sample_one).collect::<Result<_>>()?
    } else {
        let chunk = n_jobs.div_ceil(threads);
        let parts: Vec<Result<Vec<_>>> = thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let sample_one = &sample_one;
                    s.spawn(move || {
                        (t * chunk..((t + 1) * chunk).min(n_jobs))
                            .map(sample_one)
                            .collect()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sampler thread"))
                .collect()
        });
        let mut all = Vec::with_capacity(jobs.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };

    let mut items = Vec::new();
    for (&(p, lang), cands) in jobs.iter().zip(&sampled) {
        for c in cands {
            items.push(QeItem {
                lang: lang.id.clone(),
                source: pool[p].clone(),
                hyp: c.clone(),
            });
        }
    }
    let scores = scorer.score_batch(&items)?;
    if scores.len() != items.len() {
        return Err(Error::Protocol(format!(
            "{} scores for {} candidates",
            scores.len(),
            items.len()
        )));
    }

    let mut stats = RoundPairStats {
        sources: jobs.len(),
        candidates_scored: items.len(),
        ..Default::default()
    };
    let mut pairs = Vec::new();
    let mut sets = Vec::with_capacity(jobs.len());
    let mut offset = 0;
    for (i, (&(p, lang), cands)) in jobs.iter().zip(sampled).enumerate() {
        let n = cands.len();
        let set = CandidateSet {
            lang: lang.id.clone(),
            source: pool[p].clone(),
            candidates: cands,
            scores: scores[offset..offset + n].to_vec(),
        };
        offset += n;
        let mut rng = key.label("loser").index(i as u64).rng();
        match build_pair(&set, spec.tolerance, spec.round, &mut rng) {
            PairOutcome::Pair(pair) => {
                stats.greedy_wins += usize::from(pair.provenance.greedy_in_winner);
                pairs.push(pair);
            }
            PairOutcome::NoQualifyingLoser => stats.dropped_no_loser += 1,
            PairOutcome::IdenticalStrings => stats.dropped_identical += 1,
        }
        sets.push(set);
    }
    stats.pairs = pairs.len();
    Ok(RoundDataset {
        pairs,
        candidate_sets: sets,
        stats,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    round: usize,
    lang: String,
    src: String,
    chosen: String,
    rejected: String,
    score_w: f64,
    score_l: f64,
}

/// One JSON object per line: `{round, lang, src, chosen, rejected, score_w, score_l}`.
pub fn pairs_to_jsonl(pairs: &[PreferencePair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let line = PairLine {
            round: p.round,
            lang: p.lang.clone(),
            src: tokens_to_string(&p.source),
            chosen: tokens_to_string(&p.chosen),
            rejected: tokens_to_string(&p.rejected),
            score_w: p.score_w.value(),
            score_l: p.score_l.value(),
        };
        out.push_str(&serde_json::to_string(&line).expect("pair serializes"));
        out.push('\n');
    }
    out
}

/// Reads a pair file. Provenance is not stored and comes back zeroed.
pub fn pairs_from_jsonl(text: &str) -> Result<Vec<PreferencePair>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| {
            let p: PairLine = serde_json::from_str(l)
                .map_err(|e| Error::format("pair file", format!("line {}: {e}", n + 1)))?;
            Ok(PreferencePair {
                round: p.round,
                lang: p.lang,
                source: tokens_from_str(&p.src)?,
                chosen: tokens_from_str(&p.chosen)?,
                rejected: tokens_from_str(&p.rejected)?,
                score_w: QeScore::new(p.score_w)?,
                score_l: QeScore::new(p.score_l)?,
                provenance: Provenance {
                    greedy_in_winner: false,
                    winner_index: 0,
                    loser_index: 0,
                    tied_at_max: 0,
                    qualifying_losers: 0,
                },
            })
        })
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[PreferencePair]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(pairs_to_jsonl(pairs).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: &Path) -> Result<Vec<PreferencePair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    pairs_from_jsonl(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64]) -> CandidateSet {
        CandidateSet {
            lang: "x".into(),
            source: vec![2],
            candidates: (0..scores.len())
                .map(|i| vec![10 + i as Token, 2])
                .collect(),
            scores: scores.iter().map(|&s| QeScore::new(s).unwrap()).collect(),
        }
    }

    #[test]
    fn near_ties_do_not_qualify_as_losers() {
        let c = set(&[0.9, 0.898, 0.7]);
        for seed in 0..20 {
            match build_pair(&c, 0.005, 0, &mut StreamKey::root(seed).rng()) {
                PairOutcome::Pair(p) => {
                    assert_eq!(p.provenance.winner_index, 0);
                    assert_eq!(p.provenance.loser_index, 2);
                    assert_eq!(p.score_l.value(), 0.7);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn equal_scores_give_no_pair() {
        let c = set(&[0.5, 0.5, 0.5]);
        assert_eq!(
            build_pair(&c, 0.005, 0, &mut StreamKey::root(0).rng()),
            PairOutcome::NoQualifyingLoser
        );
        let c = set(&[0.5]);
        assert_eq!(
            build_pair(&c, 0.0, 0, &mut StreamKey::root(0).rng()),
            PairOutcome::NoQualifyingLoser
        );
    }

    #[test]
    fn clear_winner_always_pairs_first_with_second() {
        let c = set(&[1.0, 0.0]);
        let PairOutcome::Pair(p) = build_pair(&c, 0.005, 3, &mut StreamKey::root(1).rng()) else {
            panic!("expected a pair")
        };
        assert_eq!(
            (p.chosen.clone(), p.rejected.clone()),
            (c.candidates[0].clone(), c.candidates[1].clone())
        );
        assert!(p.provenance.greedy_in_winner);
        assert_eq!(p.round, 3);
    }

    #[test]
    fn ties_at_the_top_go_to_the_lowest_index() {
        let c = set(&[0.2, 0.9, 0.9, 0.1]);
        let PairOutcome::Pair(p) = build_pair(&c, 0.0, 0, &mut StreamKey::root(1).rng()) else {
            panic!("expected a pair")
        };
        assert_eq!(p.provenance.winner_index, 1);
        assert_eq!(p.provenance.tied_at_max, 2);
        assert!(!p.provenance.greedy_in_winner);
    }

    #[test]
    fn duplicate_strings_are_discarded() {
        let mut c = set(&[0.9, 0.1]);
        c.candidates[1] = c.candidates[0].clone();
        assert_eq!(
            build_pair(&c, 0.0, 0, &mut StreamKey::root(0).rng()),
            PairOutcome::IdenticalStrings
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let c = set(&[0.75, 0.25]);
        let PairOutcome::Pair(p) = build_pair(&c, 0.0, 2, &mut StreamKey::root(0).rng()) else {
            panic!()
        };
        let text = pairs_to_jsonl(&[p.clone()]);
        assert!(text
            .starts_with(r#"{"round":2,"lang":"x","src":"2","chosen":"10 2","rejected":"11 2""#));
        let back = pairs_from_jsonl(&text).unwrap();
        assert_eq!(
            (back[0].chosen.clone(), back[0].score_l),
            (p.chosen, p.score_l)
        );
        assert!(pairs_from_jsonl("{\"round\":1}").is_err());
    }

    #[test]
    fn source_draws() {
        let k = StreamKey::root(4);
        let a = draw_source_indices(10, 10, false, k).unwrap();
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert!(draw_source_indices(3, 5, false, k).is_err());
        assert_eq!(draw_source_indices(3, 5, true, k).unwrap().len(), 5);
    }
}
