use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::language::{LanguageSpec, Render, TokenLayout};
use crate::error::{Error, Result};
use crate::seqmodel::{Token, Vocab};

/// One way a training target can diverge from the ideal translation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// The target translates a different sentence.
    Misalignment,
    /// Some source words are left untranslated.
    CopyThrough,
    /// Entities are copied verbatim instead of transliterated.
    FeatureDrop,
    /// One token is replaced by a wrong target word.
    SkillNoise,
    Omission,
    Addition,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Misalignment,
        Channel::CopyThrough,
        Channel::FeatureDrop,
        Channel::SkillNoise,
        Channel::Omission,
        Channel::Addition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Misalignment => "misalignment",
            Channel::CopyThrough => "copy_through",
            Channel::FeatureDrop => "feature_drop",
            Channel::SkillNoise => "skill_noise",
            Channel::Omission => "omission",
            Channel::Addition => "addition",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::format("corpus", format!("unknown corruption tag {s:?}")))
    }
}

/// Per-segment probability of each channel. Channels fire independently.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    pub misalignment: f64,
    pub omission: f64,
    pub addition: f64,
    pub copy_through: f64,
    pub feature_drop: f64,
    pub skill_noise: f64,
}

impl CorruptionConfig {
    pub fn rate(&self, c: Channel) -> f64 {
        match c {
            Channel::Misalignment => self.misalignment,
            Channel::CopyThrough => self.copy_through,
            Channel::FeatureDrop => self.feature_drop,
            Channel::SkillNoise => self.skill_noise,
            Channel::Omission => self.omission,
            Channel::Addition => self.addition,
        }
    }

    pub fn only(c: Channel, rate: f64) -> Self {
        let mut cfg = CorruptionConfig::default();
        *match c {
            Channel::Misalignment => &mut cfg.misalignment,
            Channel::CopyThrough => &mut cfg.copy_through,
            Channel::FeatureDrop => &mut cfg.feature_drop,
            Channel::SkillNoise => &mut cfg.skill_noise,
            Channel::Omission => &mut cfg.omission,
            Channel::Addition => &mut cfg.addition,
        } = rate;
        cfg
    }

    pub fn is_zero(&self) -> bool {
        Channel::ALL.iter().all(|&c| self.rate(c) == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for c in Channel::ALL {
            let r = self.rate(c);
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!(
                    "corruption rate {c} = {r} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Length and entity density of generated source sentences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceShape {
    pub min_len: usize,
    pub max_len: usize,
    pub entity_prob: f64,
}

impl Default for SourceShape {
    fn default() -> Self {
        SourceShape {
            min_len: 3,
            max_len: 12,
            entity_prob: 0.15,
        }
    }
}

impl SourceShape {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::config("source lengths need 1 ≤ min_len ≤ max_len"));
        }
        if !(0.0..=1.0).contains(&self.entity_prob) {
            return Err(Error::config("entity_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A random source sentence: content tokens followed by EOS.
pub fn draw_source<R: Rng + ?Sized>(
    layout: &TokenLayout,
    shape: &SourceShape,
    rng: &mut R,
) -> Vec<Token> {
    let n = rng.gen_range(shape.min_len..=shape.max_len);
    let mut out: Vec<Token> = (0..n)
        .map(|_| {
            if rng.gen::<f64>() < shape.entity_prob {
                layout.entity(rng.gen_range(0..layout.entities))
            } else {
                layout.source_word(rng.gen_range(0..layout.words))
            }
        })
        .collect();
    out.push(Vocab::EOS);
    out
}

/// One parallel segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub lang: String,
    pub source: Vec<Token>,
    pub target: Vec<Token>,
    pub tags: Vec<Channel>,
}

impl Record {
    pub fn is_corrupted(&self) -> bool {
        !self.tags.is_empty()
    }
}

/// Applies each channel of `config` to a clean record with its own coin.
///
/// Coins are drawn for every channel in a fixed order whether or not the
/// channel applies, so changing one rate never shifts another channel's draws.
/// A channel that cannot change the segment (feature drop without entities,
/// copy-through without words) leaves no tag.
pub fn corrupt<R: Rng + ?Sized>(
    spec: &LanguageSpec,
    record: &Record,
    config: &CorruptionConfig,
    shape: &SourceShape,
    rng: &mut R,
) -> Result<Record> {
    if record.is_corrupted() {
        return Err(Error::input("record is already corrupted"));
    }
    let fired: Vec<bool> = Channel::ALL
        .iter()
        .map(|&c| rng.gen::<f64>() < config.rate(c))
        .collect();
    let on = |c: Channel| fired[Channel::ALL.iter().position(|&x| x == c).expect("listed")];
    let layout = &spec.layout;
    let mut tags = Vec::new();

    let mut content = spec.content(&record.source)?;
    if on(Channel::Misalignment) {
        loop {
            let other = draw_source(layout, shape, rng);
            if other != record.source {
                content = spec.content(&other)?;
                break;
            }
        }
        tags.push(Channel::Misalignment);
    }

    let words: Vec<usize> = (0..content.len())
        .filter(|&i| layout.source_word_index(content[i]).is_some())
        .collect();
    let mut mask = vec![false; content.len()];
    if on(Channel::CopyThrough) && !words.is_empty() {
        for &i in &words {
            mask[i] = rng.gen_bool(0.5);
        }
        if !mask.iter().any(|&m| m) {
            mask[words[rng.gen_range(0..words.len())]] = true;
        }
        tags.push(Channel::CopyThrough);
    }

    let has_entity = content.iter().any(|&t| layout.entity_index(t).is_some());
    let drop_features = on(Channel::FeatureDrop) && has_entity && spec.features.transliteration;
    if drop_features {
        tags.push(Channel::FeatureDrop);
    }

    let mut body = spec.render(
        &content,
        Render {
            copy_mask: Some(&mask),
            drop_features,
        },
    );
    body.pop();

    if on(Channel::SkillNoise) && !body.is_empty() {
        let pos = rng.gen_range(0..body.len());
        loop {
            let t = layout.target_word(rng.gen_range(0..layout.words));
            if t != body[pos] {
                body[pos] = t;
                break;
            }
        }
        tags.push(Channel::SkillNoise);
    }

    if on(Channel::Omission) && !body.is_empty() {
        let drop = rng.gen_range(1..=(body.len() / 3).max(1));
        for _ in 0..drop {
            body.remove(rng.gen_range(0..body.len()));
        }
        tags.push(Channel::Omission);
    }

    if on(Channel::Addition) {
        for _ in 0..rng.gen_range(1..=2) {
            let t = layout.target_word(rng.gen_range(0..layout.words));
            body.insert(rng.gen_range(0..=body.len()), t);
        }
        tags.push(Channel::Addition);
    }

    body.push(Vocab::EOS);
    Ok(Record {
        lang: record.lang.clone(),
        source: record.source.clone(),
        target: body,
        tags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use crate::synthdata::{ideal_translate, make_language, Features};

    fn spec() -> LanguageSpec {
        let layout = TokenLayout {
            languages: 1,
            words: 10,
            entities: 3,
        };
        let f = Features {
            transliteration: true,
            suffixing: true,
        };
        make_language(9, "zz", 0, "f", 2, f, layout)
    }

    fn clean(spec: &LanguageSpec, source: Vec<Token>) -> Record {
        let target = ideal_translate(spec, &source).unwrap();
        Record {
            lang: spec.id.clone(),
            source,
            target,
            tags: vec![],
        }
    }

    #[test]
    fn zero_rates_leave_the_record_unchanged() {
        let s = spec();
        let mut rng = StreamKey::root(1).rng();
        for _ in 0..50 {
            let r = clean(
                &s,
                draw_source(&s.layout, &SourceShape::default(), &mut rng),
            );
            let out = corrupt(
                &s,
                &r,
                &CorruptionConfig::default(),
                &SourceShape::default(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(out, r);
        }
    }

    #[test]
    fn full_omission_shortens_the_target() {
        let s = spec();
        let l = s.layout;
        let r = clean(
            &s,
            vec![l.source_word(0), l.source_word(1), l.source_word(2), 2],
        );
        assert_eq!(r.target.len(), 5);
        let mut rng = StreamKey::root(2).rng();
        let cfg = CorruptionConfig::only(Channel::Omission, 1.0);
        let out = corrupt(&s, &r, &cfg, &SourceShape::default(), &mut rng).unwrap();
        assert!(out.target.len() < r.target.len());
        assert_eq!(out.tags, vec![Channel::Omission]);
        assert_eq!(*out.target.last().unwrap(), 2);
    }

    #[test]
    fn every_channel_at_rate_one_changes_the_target() {
        let s = spec();
        let l = s.layout;
        let r = clean(
            &s,
            vec![
                l.source_word(0),
                l.entity(1),
                l.source_word(4),
                l.source_word(7),
                2,
            ],
        );
        for c in Channel::ALL {
            for seed in 0..20 {
                let mut rng = StreamKey::root(seed).rng();
                let out = corrupt(
                    &s,
                    &r,
                    &CorruptionConfig::only(c, 1.0),
                    &SourceShape::default(),
                    &mut rng,
                )
                .unwrap();
                assert_ne!(out.target, r.target, "{c}");
                assert_eq!(out.tags, vec![c]);
            }
        }
    }

    #[test]
    fn tags_round_trip_through_names() {
        for c in Channel::ALL {
            assert_eq!(c.name().parse::<Channel>().unwrap(), c);
        }
        assert!("nope".parse::<Channel>().is_err());
    }

    #[test]
    fn rates_are_validated() {
        assert!(CorruptionConfig::only(Channel::Addition, 1.5)
            .validate()
            .is_err());
        assert!(CorruptionConfig::only(Channel::Addition, 0.5)
            .validate()
            .is_ok());
    }
}
