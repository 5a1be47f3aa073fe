use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    NonTranslation,
    Major,
    Minor,
    /// Minor punctuation error.
    TrivialPunct,
}

impl Severity {
    pub fn weight(self) -> f64 {
        match self {
            Severity::NonTranslation => 25.0,
            Severity::Major => 5.0,
            Severity::Minor => 1.0,
            Severity::TrivialPunct => 0.1,
        }
    }
}

/// Whether an error category generalizes across languages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specificity {
    Agnostic,
    Specific,
    Other,
}

const AGNOSTIC: &[&str] = &[
    "Accuracy/Creative Reinterpretation",
    "Accuracy/Mistranslation",
    "Accuracy/Source language fragment",
    "Accuracy/Addition",
    "Accuracy/Omission",
    "Fluency/Inconsistency",
    "Terminology/Inconsistent",
    "Non-translation",
];

const SPECIFIC: &[&str] = &[
    "Fluency/Grammar",
    "Fluency/Register",
    "Fluency/Spelling",
    "Fluency/Punctuation",
    "Fluency/Character encoding",
    "Style/Unnatural or awkward",
    "Style/Bad sentence structure",
    "Terminology/Inappropriate for context",
    "Locale convention/Address format",
    "Locale convention/Date format",
    "Locale convention/Currency format",
    "Locale convention/Telephone format",
    "Locale convention/Time format",
    "Locale convention/Name format",
];

const OTHER: &[&str] = &["Other", "Source issue"];

/// Looks up a category (`Main/Sub`) in the closed taxonomy.
pub fn specificity(category: &str) -> Result<Specificity> {
    if AGNOSTIC.contains(&category) {
        Ok(Specificity::Agnostic)
    } else if SPECIFIC.contains(&category) {
        Ok(Specificity::Specific)
    } else if OTHER.contains(&category) {
        Ok(Specificity::Other)
    } else {
        Err(Error::input(format!("unknown MQM category {category:?}")))
    }
}

/// One annotated error, as read from a line of JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqmError {
    pub segment_id: usize,
    pub category: String,
    pub severity: String,
}

impl MqmError {
    /// Effective severity: a non-translation category always counts as a
    /// non-translation, and a minor punctuation error as trivial.
    pub fn severity(&self) -> Result<Severity> {
        let s = match self.severity.as_str() {
            "non_translation" => Severity::NonTranslation,
            "major" => Severity::Major,
            "minor" => Severity::Minor,
            "trivial_punct" => Severity::TrivialPunct,
            other => return Err(Error::input(format!("unknown MQM severity {other:?}"))),
        };
        Ok(match (s, self.category.as_str()) {
            (_, "Non-translation") => Severity::NonTranslation,
            (Severity::Minor, "Fluency/Punctuation") => Severity::TrivialPunct,
            _ => s,
        })
    }

    pub fn specificity(&self) -> Result<Specificity> {
        specificity(&self.category)
    }
}

pub fn read_annotations(path: &Path) -> Result<Vec<MqmError>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::format("MQM annotation", e.to_string()))
        })
        .collect()
}

/// Weighted points per segment for each of `n_segments` segments.
pub fn mqm_segment_scores(annotations: &[MqmError], n_segments: usize) -> Result<Vec<f64>> {
    if n_segments == 0 {
        return Err(Error::input("MQM needs at least one segment"));
    }
    let mut out = vec![0.0; n_segments];
    for a in annotations {
        a.specificity()?;
        let slot = out
            .get_mut(a.segment_id)
            .ok_or_else(|| Error::input(format!("segment {} out of range", a.segment_id)))?;
        *slot += a.severity()?.weight();
    }
    Ok(out)
}

/// `(25·NT + 5·major + minor + 0.1·trivial) / n_segments`
pub fn mqm_weighted_score(annotations: &[MqmError], n_segments: usize) -> Result<f64> {
    let s = mqm_segment_scores(annotations, n_segments)?;
    Ok(s.iter().sum::<f64>() / n_segments as f64)
}

/// The same weighting applied to per-segment mean counts.
pub fn weighted_from_means(
    non_translation: f64,
    major: f64,
    minor: f64,
    trivial_punct: f64,
) -> f64 {
    Severity::NonTranslation.weight() * non_translation
        + Severity::Major.weight() * major
        + Severity::Minor.weight() * minor
        + Severity::TrivialPunct.weight() * trivial_punct
}

/// Mean error counts per segment, by severity and by specificity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MqmSummary {
    pub non_translation: f64,
    pub major: f64,
    pub minor: f64,
    pub trivial_punct: f64,
    pub specific: f64,
    pub agnostic: f64,
    pub other: f64,
    pub weighted: f64,
}

pub fn mqm_summary(annotations: &[MqmError], n_segments: usize) -> Result<MqmSummary> {
    let weighted = mqm_weighted_score(annotations, n_segments)?;
    let mut s = MqmSummary {
        weighted,
        ..Default::default()
    };
    let inc = 1.0 / n_segments as f64;
    for a in annotations {
        *match a.severity()? {
            Severity::NonTranslation => &mut s.non_translation,
            Severity::Major => &mut s.major,
            Severity::Minor => &mut s.minor,
            Severity::TrivialPunct => &mut s.trivial_punct,
        } += inc;
        *match a.specificity()? {
            Specificity::Specific => &mut s.specific,
            Specificity::Agnostic => &mut s.agnostic,
            Specificity::Other => &mut s.other,
        } += inc;
    }
    Ok(s)
}
