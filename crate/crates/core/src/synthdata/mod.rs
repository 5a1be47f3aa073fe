//! Toy target languages and corrupted parallel corpora.
//!
//! Each language is a token bijection plus a family-level reorder rule and
//! optional features (entity transliteration, a clause-final suffix). The
//! ideal translation is known exactly, so every corruption of a training
//! target is measurable.

mod corpus;
mod corrupt;
mod language;

pub use corpus::{
    gen_corpus, reference_inventory, CorpusConfig, LanguageDef, LanguageRegistry, ParallelCorpus,
    SplitSizes, Splits, ISOLATE_FAMILY,
};
pub use corrupt::{corrupt, draw_source, Channel, CorruptionConfig, Record, SourceShape};
pub use language::{
    ideal_translate, make_language, Features, LanguageSpec, ReorderRule, TokenLayout, SUFFIX,
};
