use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::groups::{group_aggregate, Group, LangGroups};
use crate::error::{Error, Result};

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub run_id: String,
    pub round: usize,
    pub lang: String,
    pub metric: String,
    pub value: f64,
}

pub fn metrics_to_jsonl(records: &[MetricRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_metrics(path: &Path, records: &[MetricRecord]) -> Result<()> {
    fs::write(path, metrics_to_jsonl(records)).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format("metrics.jsonl", e.to_string())))
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Group report: one row per group, one column per metric. Metrics defined
/// only on some languages are averaged over the languages that have them.
pub fn group_report_csv(
    columns: &[(String, BTreeMap<String, f64>)],
    groups: &LangGroups,
) -> Result<String> {
    let mut header = "group,size".to_string();
    let mut cols = Vec::with_capacity(columns.len());
    for (name, values) in columns {
        let _ = write!(header, ",{name}");
        let complete = groups.all.iter().all(|l| values.contains_key(l));
        let rows: Vec<Option<f64>> = if complete {
            group_aggregate(values, groups)?
                .into_iter()
                .map(|g| g.mean)
                .collect()
        } else {
            Group::ROWS
                .iter()
                .map(|&g| {
                    let vs: Vec<f64> = groups
                        .members(g)
                        .iter()
                        .filter_map(|l| values.get(l))
                        .copied()
                        .collect();
                    (!vs.is_empty()).then(|| vs.iter().sum::<f64>() / vs.len() as f64)
                })
                .collect()
        };
        cols.push(rows);
    }
    let mut out = header;
    out.push('\n');
    for (i, g) in Group::ROWS.iter().enumerate() {
        let _ = write!(out, "{},{}", g.label(), groups.size(*g));
        for c in &cols {
            let _ = write!(out, ",{}", cell(c[i]));
        }
        out.push('\n');
    }
    Ok(out)
}
