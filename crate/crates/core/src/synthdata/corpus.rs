use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corrupt::{corrupt, draw_source, Channel, CorruptionConfig, Record, SourceShape};
use super::language::{ideal_translate, make_language, Features, LanguageSpec, TokenLayout};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::seqmodel::{tokens_from_str, tokens_to_string, Vocab};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageDef {
    pub id: String,
    pub family: String,
    #[serde(default)]
    pub transliteration: bool,
    #[serde(default)]
    pub suffixing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// Everything needed to generate the languages and their corpora.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub words: usize,
    pub entities: usize,
    pub languages: Vec<LanguageDef>,
    /// Segments per language and split.
    pub sizes: SplitSizes,
    #[serde(default)]
    pub shape: SourceShape,
    #[serde(default)]
    pub corruption: CorruptionConfig,
    /// Per-language replacements for `corruption`.
    #[serde(default)]
    pub overrides: BTreeMap<String, CorruptionConfig>,
}

impl CorpusConfig {
    /// Eight languages in four families, every one transliterating entities.
    /// Family `d` plays the held-out role; `d1` sees the transliteration only
    /// half the time in training.
    pub fn desk() -> Self {
        let languages = ["a", "b", "c", "d"]
            .iter()
            .enumerate()
            .flat_map(|(f, fam)| {
                (0..2).map(move |i| LanguageDef {
                    id: format!("{fam}{i}"),
                    family: fam.to_string(),
                    transliteration: true,
                    suffixing: f % 2 == 1,
                })
            })
            .collect();
        let mut overrides = BTreeMap::new();
        let base = CorruptionConfig {
            misalignment: 0.2,
            omission: 0.2,
            addition: 0.2,
            copy_through: 0.3,
            feature_drop: 0.3,
            skill_noise: 0.2,
        };
        overrides.insert(
            "d1".to_string(),
            CorruptionConfig {
                feature_drop: 0.5,
                ..base
            },
        );
        CorpusConfig {
            words: 20,
            entities: 6,
            languages,
            sizes: SplitSizes {
                train: 1200,
                dev: 60,
                test: 100,
            },
            shape: SourceShape::default(),
            corruption: base,
            overrides,
        }
    }

    pub fn layout(&self) -> TokenLayout {
        TokenLayout {
            languages: self.languages.len(),
            words: self.words,
            entities: self.entities,
        }
    }

    pub fn rates_for(&self, lang: &str) -> &CorruptionConfig {
        self.overrides.get(lang).unwrap_or(&self.corruption)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout().validate()?;
        self.shape.validate()?;
        self.corruption.validate()?;
        let mut seen = HashSet::new();
        for l in &self.languages {
            if l.id.is_empty() || l.id.contains(char::is_whitespace) {
                return Err(Error::config(format!("bad language id {:?}", l.id)));
            }
            if !seen.insert(l.id.as_str()) {
                return Err(Error::config(format!("duplicate language {}", l.id)));
            }
        }
        for (lang, rates) in &self.overrides {
            if !seen.contains(lang.as_str()) {
                return Err(Error::config(format!(
                    "override for unknown language {lang}"
                )));
            }
            rates.validate()?;
        }
        if self.sizes.train == 0 || self.sizes.dev == 0 || self.sizes.test == 0 {
            return Err(Error::config("split sizes must be positive"));
        }
        Ok(())
    }
}

/// All languages of a run, in tag order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageRegistry {
    pub layout: TokenLayout,
    pub languages: Vec<LanguageSpec>,
}

impl LanguageRegistry {
    pub fn build(config: &CorpusConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut families: Vec<&str> = Vec::new();
        let languages = config
            .languages
            .iter()
            .enumerate()
            .map(|(i, def)| {
                let fam = match families.iter().position(|f| *f == def.family) {
                    Some(p) => p,
                    None => {
                        families.push(&def.family);
                        families.len() - 1
                    }
                };
                let features = Features {
                    transliteration: def.transliteration,
                    suffixing: def.suffixing,
                };
                make_language(seed, &def.id, i, &def.family, fam, features, layout)
            })
            .collect();
        Ok(LanguageRegistry { layout, languages })
    }

    pub fn vocab(&self) -> Vocab {
        self.layout.vocab()
    }

    pub fn get(&self, id: &str) -> Result<&LanguageSpec> {
        self.languages
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| Error::input(format!("unknown language {id:?}")))
    }

    pub fn ids(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.id.clone()).collect()
    }

    /// Language id → family name.
    pub fn families(&self) -> BTreeMap<String, String> {
        self.languages
            .iter()
            .map(|l| (l.id.clone(), l.family.clone()))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("registry serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("language registry", e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub records: Vec<Record>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn for_lang<'a>(&'a self, lang: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.lang == lang)
    }

    /// `lang<TAB>source ids<TAB>target ids<TAB>tags`, tags comma separated or `-`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let tags = if r.tags.is_empty() {
                "-".to_string()
            } else {
                r.tags
                    .iter()
                    .map(|t| t.name())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.lang,
                tokens_to_string(&r.source),
                tokens_to_string(&r.target),
                tags
            );
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::format(
                    "corpus",
                    format!("line {}: expected 4 fields", n + 1),
                ));
            }
            let tags = if f[3] == "-" {
                Vec::new()
            } else {
                f[3].split(',').map(str::parse).collect::<Result<_>>()?
            };
            records.push(Record {
                lang: f[0].to_string(),
                source: tokens_from_str(f[1])?,
                target: tokens_from_str(f[2])?,
                tags,
            });
        }
        Ok(ParallelCorpus { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
}

impl Splits {
    pub const FILES: [&'static str; 3] = ["train.tsv", "dev.tsv", "test.tsv"];

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, c) in Self::FILES.iter().zip([&self.train, &self.dev, &self.test]) {
            c.save(&dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Splits {
            train: ParallelCorpus::load(&dir.join("train.tsv"))?,
            dev: ParallelCorpus::load(&dir.join("dev.tsv"))?,
            test: ParallelCorpus::load(&dir.join("test.tsv"))?,
        })
    }

    /// Corrupted segment count per channel in the training split.
    pub fn channel_counts(&self) -> BTreeMap<Channel, usize> {
        let mut m = BTreeMap::new();
        for r in &self.train.records {
            for &t in &r.tags {
                *m.entry(t).or_insert(0) += 1;
            }
        }
        m
    }
}

/// Generates train/dev/test corpora for every language.
///
/// Sources are unique across all splits and languages. Dev and test targets
/// are ideal translations; train targets are corrupted per language.
pub fn gen_corpus(registry: &LanguageRegistry, config: &CorpusConfig, seed: u64) -> Result<Splits> {
    config.validate()?;
    let root = StreamKey::root(seed).label("corpus");
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut splits = Splits::default();
    for spec in &registry.languages {
        let lang_key = root.label(&spec.id);
        let rates = config.rates_for(&spec.id);
        let plan = [
            ("test", config.sizes.test, &mut splits.test),
            ("dev", config.sizes.dev, &mut splits.dev),
            ("train", config.sizes.train, &mut splits.train),
        ];
        for (split, size, corpus) in plan {
            let mut draws = lang_key.label(split).label("source").rng();
            for i in 0..size {
                let mut tries = 0;
                let source = loop {
                    let s = draw_source(&registry.layout, &config.shape, &mut draws);
                    if seen.insert(s.clone()) {
                        break s;
                    }
                    tries += 1;
                    if tries > 10_000 {
                        return Err(Error::config(
                            "source space exhausted; lower sizes or widen shape",
                        ));
                    }
                };
                let target = ideal_translate(spec, &source)?;
                let mut record = Record {
                    lang: spec.id.clone(),
                    source,
                    target,
                    tags: Vec::new(),
                };
                if split == "train" {
                    let mut rng = lang_key.label("corrupt").index(i as u64).rng();
                    record = corrupt(spec, &record, rates, &config.shape, &mut rng)?;
                }
                corpus.records.push(record);
            }
        }
    }
    Ok(splits)
}

/// The thirty-language inventory of the original system: `(code, family)`.
/// Families have sizes 2, 5, 5, 7, 3 and 8; the last is a catch-all whose
/// members are unrelated isolates.
pub fn reference_inventory() -> Vec<(&'static str, &'static str)> {
    let table: [(&str, &[&str]); 6] = [
        ("baltic", &["lt", "lv"]),
        ("germanic", &["da", "de", "nl", "no", "sv"]),
        ("romance", &["es", "fr", "it", "pt", "ro"]),
        ("slavic", &["bg", "cs", "hr", "pl", "ru", "sl", "uk"]),
        ("uralic", &["et", "fi", "hu"]),
        ("other", &["el", "hi", "id", "ja", "ko", "tr", "vi", "zh"]),
    ];
    table
        .iter()
        .flat_map(|(fam, langs)| langs.iter().map(move |l| (*l, *fam)))
        .collect()
}

/// Family name that groups no languages together.
pub const ISOLATE_FAMILY: &str = "other";

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        let mut c = CorpusConfig::desk();
        c.sizes = SplitSizes {
            train: 40,
            dev: 5,
            test: 5,
        };
        c
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let cfg = small();
        let reg = LanguageRegistry::build(&cfg, 3).unwrap();
        let a = gen_corpus(&reg, &cfg, 3).unwrap();
        let b = gen_corpus(&reg, &cfg, 3).unwrap();
        assert_eq!(a.train.to_tsv(), b.train.to_tsv());
        assert_eq!(
            ParallelCorpus::from_tsv(&a.train.to_tsv()).unwrap(),
            a.train
        );
        let json = serde_json::to_string(&reg).unwrap();
        assert_eq!(
            serde_json::from_str::<LanguageRegistry>(&json).unwrap(),
            reg
        );
    }

    #[test]
    fn held_out_splits_are_clean_and_sources_disjoint() {
        let cfg = small();
        let reg = LanguageRegistry::build(&cfg, 4).unwrap();
        let s = gen_corpus(&reg, &cfg, 4).unwrap();
        for r in s.test.records.iter().chain(&s.dev.records) {
            assert!(!r.is_corrupted());
            assert_eq!(
                r.target,
                ideal_translate(reg.get(&r.lang).unwrap(), &r.source).unwrap()
            );
        }
        let mut all: Vec<&Vec<u32>> = s
            .train
            .records
            .iter()
            .chain(&s.dev.records)
            .chain(&s.test.records)
            .map(|r| &r.source)
            .collect();
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
        assert!(s.train.records.iter().any(Record::is_corrupted));
    }

    #[test]
    fn zero_corruption_gives_a_clean_train_split() {
        let mut cfg = small();
        cfg.corruption = CorruptionConfig::default();
        cfg.overrides.clear();
        let reg = LanguageRegistry::build(&cfg, 5).unwrap();
        let s = gen_corpus(&reg, &cfg, 5).unwrap();
        assert!(s.train.records.iter().all(|r| !r.is_corrupted()));
    }

    #[test]
    fn config_errors_are_reported() {
        let mut cfg = small();
        cfg.overrides
            .insert("zz".into(), CorruptionConfig::default());
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.languages.push(cfg.languages[0].clone());
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<CorpusConfig>("words = 3\nbogus = 1").is_err());
    }

    #[test]
    fn inventory_family_sizes() {
        let inv = reference_inventory();
        assert_eq!(inv.len(), 30);
        let mut sizes = BTreeMap::new();
        for (_, f) in &inv {
            *sizes.entry(*f).or_insert(0) += 1;
        }
        let mut v: Vec<usize> = sizes.values().copied().collect();
        v.sort();
        assert_eq!(v, vec![2, 3, 5, 5, 7, 8]);
    }
}
