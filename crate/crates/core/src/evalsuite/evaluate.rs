use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bleu::{bleu_text, corpus_bleu, BleuStats};
use super::feature::{feature_counts, feature_usage_rate};
use crate::error::{Error, Result};
use crate::qescore::oracle_qe;
use crate::seqmodel::{greedy_decode, SeqModel, Token, Transformer};
use crate::synthdata::{ideal_translate, LanguageRegistry, LanguageSpec, ParallelCorpus};

/// Registered per-language metrics. All are higher-is-better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Corpus BLEU against the test references.
    Bleu,
    /// Mean oracle QE of the outputs.
    Qe,
    /// Transliteration usage; defined only for languages with the feature.
    FeatureRate,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Bleu, Metric::Qe, Metric::FeatureRate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Qe => "qe",
            Metric::FeatureRate => "feature_rate",
        }
    }

    pub fn higher_is_better(self) -> bool {
        true
    }

    /// Parses a comma separated list.
    pub fn parse_list(s: &str) -> Result<Vec<Metric>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse())
            .collect()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::input(format!(
                    "unknown metric {s:?}; known: bleu, qe, feature_rate"
                ))
            })
    }
}

/// Anything that turns a source sentence into a target sentence.
pub trait Translator {
    fn translate(&self, spec: &LanguageSpec, source: &[Token]) -> Result<Vec<Token>>;
}

impl Translator for Transformer {
    fn translate(&self, spec: &LanguageSpec, source: &[Token]) -> Result<Vec<Token>> {
        greedy_decode(self.net(), &spec.model_input(source))
    }
}

/// Emits the ideal translation.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdealTranslator;

impl Translator for IdealTranslator {
    fn translate(&self, spec: &LanguageSpec, source: &[Token]) -> Result<Vec<Token>> {
        ideal_translate(spec, source)
    }
}

/// Outputs of one system on one language of an evaluation split.
#[derive(Clone, Debug, PartialEq)]
pub struct LangOutputs {
    pub lang: String,
    pub sources: Vec<Vec<Token>>,
    pub references: Vec<Vec<Token>>,
    pub outputs: Vec<Vec<Token>>,
}

impl LangOutputs {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Translates every record of `langs` in `split`.
pub fn translate_split<T: Translator + ?Sized>(
    system: &T,
    registry: &LanguageRegistry,
    split: &ParallelCorpus,
    langs: &[String],
) -> Result<BTreeMap<String, LangOutputs>> {
    let mut out = BTreeMap::new();
    for lang in langs {
        let spec = registry.get(lang)?;
        let mut lo = LangOutputs {
            lang: lang.clone(),
            sources: Vec::new(),
            references: Vec::new(),
            outputs: Vec::new(),
        };
        for r in split.for_lang(lang) {
            lo.outputs.push(system.translate(spec, &r.source)?);
            lo.sources.push(r.source.clone());
            lo.references.push(r.target.clone());
        }
        if lo.is_empty() {
            return Err(Error::input(format!(
                "split has no records for language {lang}"
            )));
        }
        out.insert(lang.clone(), lo);
    }
    Ok(out)
}

/// Corpus-level value, or `None` where the metric is undefined.
pub fn metric_value(metric: Metric, spec: &LanguageSpec, o: &LangOutputs) -> Result<Option<f64>> {
    Ok(match metric {
        Metric::Bleu => {
            let h: Vec<String> = o.outputs.iter().map(|t| bleu_text(t)).collect();
            let r: Vec<String> = o.references.iter().map(|t| bleu_text(t)).collect();
            Some(corpus_bleu(&h, &r)?)
        }
        Metric::Qe => {
            let s = segment_scores(Metric::Qe, spec, o)?.expect("qe is segment level");
            Some(s.iter().sum::<f64>() / s.len() as f64)
        }
        Metric::FeatureRate => {
            if !spec.features.transliteration {
                return Ok(None);
            }
            let pairs: Vec<(&Vec<Token>, &Vec<Token>)> = o.sources.iter().zip(&o.outputs).collect();
            feature_usage_rate(spec, &pairs).ok()
        }
    })
}

/// Per-segment scores for paired significance testing: oracle QE, smoothed
/// sentence BLEU, or entity marking counts (marked minus unmarked, so that
/// the sum is monotone in the corpus rate).
pub fn segment_scores(
    metric: Metric,
    spec: &LanguageSpec,
    o: &LangOutputs,
) -> Result<Option<Vec<f64>>> {
    Ok(match metric {
        Metric::Qe => Some(
            o.sources
                .iter()
                .zip(&o.outputs)
                .map(|(s, y)| oracle_qe(s, y, spec).map(|q| q.value()))
                .collect::<Result<_>>()?,
        ),
        Metric::Bleu => Some(
            o.outputs
                .iter()
                .zip(&o.references)
                .map(|(y, r)| {
                    let mut st = BleuStats::default();
                    st.add(&bleu_text(y), &bleu_text(r));
                    st.score()
                })
                .collect(),
        ),
        Metric::FeatureRate => {
            if !spec.features.transliteration {
                return Ok(None);
            }
            Some(
                o.sources
                    .iter()
                    .zip(&o.outputs)
                    .map(|(s, y)| {
                        let (n, k) = feature_counts(spec, s, y);
                        k as f64 - (n - k) as f64
                    })
                    .collect(),
            )
        }
    })
}

/// `metric → lang → value` over all requested metrics; undefined values are
/// left out.
pub type MetricTable = BTreeMap<Metric, BTreeMap<String, f64>>;

pub fn evaluate_outputs(
    registry: &LanguageRegistry,
    outputs: &BTreeMap<String, LangOutputs>,
    metrics: &[Metric],
) -> Result<MetricTable> {
    let mut table = MetricTable::new();
    for &m in metrics {
        let row = table.entry(m).or_default();
        for (lang, o) in outputs {
            if let Some(v) = metric_value(m, registry.get(lang)?, o)? {
                row.insert(lang.clone(), v);
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{gen_corpus, CorpusConfig};

    #[test]
    fn ideal_system_is_perfect() {
        let mut cfg = CorpusConfig::desk();
        cfg.sizes.train = 5;
        cfg.sizes.dev = 2;
        cfg.sizes.test = 20;
        let reg = LanguageRegistry::build(&cfg, 3).unwrap();
        let splits = gen_corpus(&reg, &cfg, 3).unwrap();
        let langs = reg.ids();
        let out = translate_split(&IdealTranslator, &reg, &splits.test, &langs).unwrap();
        let t = evaluate_outputs(&reg, &out, &Metric::ALL).unwrap();
        for v in t[&Metric::Bleu].values() {
            assert!((v - 100.0).abs() < 1e-9);
        }
        assert!(t[&Metric::Qe].values().all(|&v| v == 1.0));
        assert!(t[&Metric::FeatureRate].values().all(|&v| v == 1.0));
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("chrf".parse::<Metric>().is_err());
        assert_eq!(
            Metric::parse_list("bleu, qe").unwrap(),
            vec![Metric::Bleu, Metric::Qe]
        );
    }
}
