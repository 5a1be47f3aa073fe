use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The report rows, in display order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    All,
    /// Languages used for alignment.
    Aligned,
    /// Everything else.
    Unaligned,
    /// Unaligned, but in a family that has an aligned member.
    RelatedUnaligned,
    /// In no family with an aligned member.
    Unrelated,
}

impl Group {
    pub const ROWS: [Group; 5] = [
        Group::All,
        Group::Aligned,
        Group::Unaligned,
        Group::RelatedUnaligned,
        Group::Unrelated,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Group::All => "All",
            Group::Aligned => "T",
            Group::Unaligned => "T^c",
            Group::RelatedUnaligned => "R∩T^c",
            Group::Unrelated => "R^c",
        }
    }

    /// ASCII identifier for file names and metric keys.
    pub fn key(self) -> &'static str {
        match self {
            Group::All => "all",
            Group::Aligned => "t",
            Group::Unaligned => "tc",
            Group::RelatedUnaligned => "r_tc",
            Group::Unrelated => "rc",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Language sets derived from the aligned set and language families.
///
/// A language is related to the aligned set when it shares a family with an
/// aligned language; every language is related to itself. Members of the
/// isolate family (if any) are related only to themselves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LangGroups {
    pub all: BTreeSet<String>,
    pub aligned: BTreeSet<String>,
    pub related: BTreeSet<String>,
}

impl LangGroups {
    pub fn new(
        families: &BTreeMap<String, String>,
        aligned: &[String],
        isolate_family: Option<&str>,
    ) -> Result<Self> {
        let all: BTreeSet<String> = families.keys().cloned().collect();
        let aligned: BTreeSet<String> = aligned.iter().cloned().collect();
        if let Some(bad) = aligned.iter().find(|l| !all.contains(*l)) {
            return Err(Error::input(format!(
                "aligned language {bad} is not in the inventory"
            )));
        }
        let fams: BTreeSet<&str> = aligned
            .iter()
            .map(|l| families[l].as_str())
            .filter(|f| Some(*f) != isolate_family)
            .collect();
        let related = all
            .iter()
            .filter(|l| aligned.contains(*l) || fams.contains(families[*l].as_str()))
            .cloned()
            .collect();
        Ok(LangGroups {
            all,
            aligned,
            related,
        })
    }

    pub fn members(&self, g: Group) -> BTreeSet<String> {
        match g {
            Group::All => self.all.clone(),
            Group::Aligned => self.aligned.clone(),
            Group::Unaligned => self.all.difference(&self.aligned).cloned().collect(),
            Group::RelatedUnaligned => self.related.difference(&self.aligned).cloned().collect(),
            Group::Unrelated => self.all.difference(&self.related).cloned().collect(),
        }
    }

    pub fn size(&self, g: Group) -> usize {
        self.members(g).len()
    }
}

/// Mean of one metric over one group; `None` for an empty group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub group: Group,
    pub count: usize,
    pub mean: Option<f64>,
}

/// Unweighted mean per group. Every language must have a value.
pub fn group_aggregate(
    values: &BTreeMap<String, f64>,
    groups: &LangGroups,
) -> Result<Vec<GroupMean>> {
    if let Some(missing) = groups.all.iter().find(|l| !values.contains_key(*l)) {
        return Err(Error::input(format!("no value for language {missing}")));
    }
    Ok(Group::ROWS
        .iter()
        .map(|&g| {
            let m = groups.members(g);
            let mean =
                (!m.is_empty()).then(|| m.iter().map(|l| values[l]).sum::<f64>() / m.len() as f64);
            GroupMean {
                group: g,
                count: m.len(),
                mean,
            }
        })
        .collect())
}
