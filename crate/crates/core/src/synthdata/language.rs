use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::seqmodel::{Token, Vocab};

/// Clause-final marker appended by suffixing languages.
pub const SUFFIX: Token = 3;
const FIRST_TAG: Token = 4;

/// How the shared vocabulary is carved into regions.
///
/// ```text
/// 0 PAD | 1 BOS | 2 EOS | 3 SUFFIX | tags (one per language)
/// | source words | entities | target words | marked entity forms
/// ```
///
/// Target words are shared by all languages; each language permutes them
/// with its own bijection. Entities are copied verbatim unless the language
/// transliterates them into the marked region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenLayout {
    pub languages: usize,
    pub words: usize,
    pub entities: usize,
}

impl TokenLayout {
    pub fn validate(&self) -> Result<()> {
        if self.languages == 0 || self.words < 2 || self.entities == 0 {
            return Err(Error::config(
                "token layout needs ≥1 language, ≥2 words and ≥1 entity",
            ));
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        FIRST_TAG as usize + self.languages + 2 * self.words + 2 * self.entities
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.vocab_size() as u32).expect("layout vocab is large enough")
    }

    pub fn tag(&self, lang_index: usize) -> Token {
        FIRST_TAG + lang_index as Token
    }

    fn base(&self) -> usize {
        FIRST_TAG as usize + self.languages
    }

    pub fn source_word(&self, i: usize) -> Token {
        (self.base() + i) as Token
    }

    pub fn entity(&self, i: usize) -> Token {
        (self.base() + self.words + i) as Token
    }

    pub fn target_word(&self, i: usize) -> Token {
        (self.base() + self.words + self.entities + i) as Token
    }

    pub fn marked(&self, i: usize) -> Token {
        (self.base() + 2 * self.words + self.entities + i) as Token
    }

    pub fn source_word_index(&self, t: Token) -> Option<usize> {
        let i = (t as usize).checked_sub(self.base())?;
        (i < self.words).then_some(i)
    }

    pub fn entity_index(&self, t: Token) -> Option<usize> {
        let i = (t as usize).checked_sub(self.base() + self.words)?;
        (i < self.entities).then_some(i)
    }

    pub fn is_target_word(&self, t: Token) -> bool {
        let lo = self.base() + self.words + self.entities;
        (lo..lo + self.words).contains(&(t as usize))
    }

    pub fn is_marked(&self, t: Token) -> bool {
        let lo = self.base() + 2 * self.words + self.entities;
        (lo..lo + self.entities).contains(&(t as usize))
    }
}

/// Local reordering applied block by block; a trailing partial block keeps
/// its order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderRule {
    pub pattern: Vec<usize>,
}

const PATTERNS: [&[usize]; 6] = [
    &[0],
    &[1, 0],
    &[2, 1, 0],
    &[1, 2, 0],
    &[3, 2, 1, 0],
    &[2, 3, 0, 1],
];

impl ReorderRule {
    pub fn for_family(family_index: usize) -> Self {
        ReorderRule {
            pattern: PATTERNS[family_index % PATTERNS.len()].to_vec(),
        }
    }

    /// Position in the input that lands at output position `i` of an
    /// `n`-token sequence.
    pub fn source_position(&self, i: usize, n: usize) -> usize {
        let b = self.pattern.len();
        let full = n / b * b;
        if i < full {
            i / b * b + self.pattern[i % b]
        } else {
            i
        }
    }

    pub fn apply<T: Copy>(&self, xs: &[T]) -> Vec<T> {
        (0..xs.len())
            .map(|i| xs[self.source_position(i, xs.len())])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Features {
    #[serde(default)]
    pub transliteration: bool,
    #[serde(default)]
    pub suffixing: bool,
}

/// A deterministic toy target language.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub id: String,
    pub index: usize,
    pub family: String,
    pub layout: TokenLayout,
    /// `word_map[i]` is the target token for source word `i`.
    pub word_map: Vec<Token>,
    /// `marked_map[i]` is the transliterated form of entity `i`.
    pub marked_map: Vec<Token>,
    pub reorder: ReorderRule,
    pub features: Features,
}

/// What to do with each content token while rendering a target.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Render<'a> {
    /// Leave the source word at these source positions untranslated.
    pub copy_mask: Option<&'a [bool]>,
    /// Copy entities verbatim even if the language transliterates.
    pub drop_features: bool,
}

impl LanguageSpec {
    pub fn tag(&self) -> Token {
        self.layout.tag(self.index)
    }

    /// Model input for a source sentence: language tag followed by the source.
    pub fn model_input(&self, source: &[Token]) -> Vec<Token> {
        let mut v = Vec::with_capacity(source.len() + 1);
        v.push(self.tag());
        v.extend_from_slice(source);
        v
    }

    pub fn marked_form(&self, entity_index: usize) -> Token {
        self.marked_map[entity_index]
    }

    pub(crate) fn content(&self, source: &[Token]) -> Result<Vec<Token>> {
        let (&last, content) = source
            .split_last()
            .ok_or_else(|| Error::input("source is empty; expected at least EOS"))?;
        if last != Vocab::EOS {
            return Err(Error::input("source must end with EOS"));
        }
        for &t in content {
            if self.layout.source_word_index(t).is_none() && self.layout.entity_index(t).is_none() {
                return Err(Error::input(format!(
                    "token {t} is not a source content token"
                )));
            }
        }
        Ok(content.to_vec())
    }

    pub(crate) fn render(&self, content: &[Token], how: Render<'_>) -> Vec<Token> {
        let mapped: Vec<Token> = content
            .iter()
            .enumerate()
            .map(|(pos, &t)| {
                if let Some(w) = self.layout.source_word_index(t) {
                    let copy = how.copy_mask.is_some_and(|m| m[pos]);
                    if copy {
                        t
                    } else {
                        self.word_map[w]
                    }
                } else {
                    let e = self.layout.entity_index(t).expect("validated content");
                    if self.features.transliteration && !how.drop_features {
                        self.marked_map[e]
                    } else {
                        t
                    }
                }
            })
            .collect();
        let mut out = self.reorder.apply(&mapped);
        if self.features.suffixing {
            out.push(SUFFIX);
        }
        out.push(Vocab::EOS);
        out
    }
}

/// The reference translation of `source` (content tokens followed by EOS).
pub fn ideal_translate(spec: &LanguageSpec, source: &[Token]) -> Result<Vec<Token>> {
    let content = spec.content(source)?;
    Ok(spec.render(&content, Render::default()))
}

/// Builds a language. Languages of the same family share the reorder rule;
/// bijections come from a stream keyed by the seed and the language id.
pub fn make_language(
    seed: u64,
    id: &str,
    index: usize,
    family: &str,
    family_index: usize,
    features: Features,
    layout: TokenLayout,
) -> LanguageSpec {
    let mut rng = StreamKey::root(seed).label("language").label(id).rng();
    let mut word_map: Vec<Token> = (0..layout.words).map(|i| layout.target_word(i)).collect();
    word_map.shuffle(&mut rng);
    let mut marked_map: Vec<Token> = (0..layout.entities).map(|i| layout.marked(i)).collect();
    marked_map.shuffle(&mut rng);
    LanguageSpec {
        id: id.to_string(),
        index,
        family: family.to_string(),
        layout,
        word_map,
        marked_map,
        reorder: ReorderRule::for_family(family_index),
        features,
    }
}
