use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use log::info;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::baseline::run_baseline;
use super::plan::ExperimentPlan;
use crate::error::{Error, Result};
use crate::evalsuite::{
    evaluate_outputs, feature_counts, group_aggregate, group_report_csv, paired_randomization_test,
    segment_perplexity, segment_scores, translate_split, Group, LangGroups, LangOutputs, Metric,
    MetricTable, Translator,
};
use crate::qescore::OracleScorer;
use crate::rng::StreamKey;
use crate::seqmodel::{sequence_log_prob, SeqModel, Token, Transformer};
use crate::synthdata::{
    draw_source, gen_corpus, LanguageRegistry, ParallelCorpus, Record, Splits, ISOLATE_FAMILY,
};
use crate::trainer::{run_dqo, RoundRecord, RunOptions};

/// Generated data for one seed.
#[derive(Clone, Debug)]
pub struct SeedData {
    pub registry: LanguageRegistry,
    pub splits: Splits,
    /// Fresh sources for the feature probe language, disjoint from all splits.
    pub probe_sources: Vec<Vec<Token>>,
    /// Training segments used for perplexity.
    pub perplexity_sample: Vec<Record>,
}

pub fn prepare_data(plan: &ExperimentPlan, seed: u64) -> Result<SeedData> {
    let registry = LanguageRegistry::build(&plan.corpus, seed)?;
    let splits = gen_corpus(&registry, &plan.corpus, seed)?;
    let key = StreamKey::root(seed);

    let mut probe_sources = Vec::new();
    if plan.feature_probe.is_some() {
        let mut seen: HashSet<Vec<Token>> = [&splits.train, &splits.dev, &splits.test]
            .iter()
            .flat_map(|c| c.records.iter().map(|r| r.source.clone()))
            .collect();
        let mut rng = key.label("feature-probe").rng();
        let budget = 100 * plan.feature_probe_size + 10_000;
        for _ in 0..budget {
            if probe_sources.len() == plan.feature_probe_size {
                break;
            }
            let s = draw_source(&registry.layout, &plan.corpus.shape, &mut rng);
            if seen.insert(s.clone()) {
                probe_sources.push(s);
            }
        }
        if probe_sources.len() < plan.feature_probe_size {
            return Err(Error::config(
                "source space exhausted while drawing the feature probe",
            ));
        }
    }

    let n = plan.perplexity_sample.min(splits.train.len());
    let mut picks =
        index::sample(&mut key.label("perplexity").rng(), splits.train.len(), n).into_vec();
    picks.sort_unstable();
    let perplexity_sample = picks
        .iter()
        .map(|&i| splits.train.records[i].clone())
        .collect();
    Ok(SeedData {
        registry,
        splits,
        probe_sources,
        perplexity_sample,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    /// Test quality rises on the aligned languages.
    QualityAligned,
    /// Test quality rises on languages unrelated to the aligned set.
    QualityHeldOut,
    /// The policy moves away from its training data.
    TrainingPerplexity,
    /// The held-out probe language uses its transliteration more often.
    FeatureUsage,
    /// Dev quality does not drop from round to round.
    RoundTrend,
}

impl Observation {
    pub const ALL: [Observation; 5] = [
        Observation::QualityAligned,
        Observation::QualityHeldOut,
        Observation::TrainingPerplexity,
        Observation::FeatureUsage,
        Observation::RoundTrend,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Observation::QualityAligned => "quality_aligned",
            Observation::QualityHeldOut => "quality_held_out",
            Observation::TrainingPerplexity => "training_perplexity",
            Observation::FeatureUsage => "feature_usage",
            Observation::RoundTrend => "round_trend",
        }
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// One checked observation for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationResult {
    pub observation: Observation,
    pub status: Status,
    pub metric: String,
    pub group: String,
    /// First and last round compared.
    pub rounds: [usize; 2],
    pub threshold: String,
    pub baseline: Option<f64>,
    pub candidate: Option<f64>,
    pub delta: Option<f64>,
    pub standard_error: Option<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub metric: Metric,
    pub group: Group,
    pub size: usize,
    pub baseline: Option<f64>,
    pub candidate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangRow {
    pub lang: String,
    pub metric: Metric,
    pub baseline: f64,
    pub candidate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub metric: Metric,
    pub group: Group,
    pub delta: f64,
    pub p_value: f64,
    pub exact: bool,
    pub trials: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundPoint {
    pub round: usize,
    pub pairs: usize,
    pub mean_loss: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub baseline_epochs: usize,
    pub baseline_best_epoch: usize,
    pub groups: Vec<GroupRow>,
    pub languages: Vec<LangRow>,
    pub rounds: Vec<RoundPoint>,
    pub significance: Vec<SignificanceRow>,
    pub observations: Vec<ObservationResult>,
}

impl SeedReport {
    pub fn observation(&self, o: Observation) -> Option<&ObservationResult> {
        self.observations.iter().find(|r| r.observation == o)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSummary {
    pub observation: Observation,
    pub evaluated: usize,
    pub passed: usize,
    pub required: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub mode: String,
    pub aligned: Vec<String>,
    pub held_out: Vec<String>,
    pub feature_probe: Option<String>,
    pub quality_metric: Metric,
    pub seeds: Vec<SeedReport>,
    pub summary: Vec<ObservationSummary>,
}

/// Key under which round metrics store dev quality for a group.
pub fn dev_metric_key(metric: Metric, group: Group) -> String {
    format!("dev_{}_{}", metric.name(), group.key())
}

/// Mean and standard error of `candidate − baseline`.
fn paired_delta(baseline: &[f64], candidate: &[f64]) -> (f64, f64) {
    let n = baseline.len() as f64;
    let d: Vec<f64> = baseline.iter().zip(candidate).map(|(b, c)| c - b).collect();
    let mean = d.iter().sum::<f64>() / n;
    if d.len() < 2 {
        return (mean, 0.0);
    }
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn one_se_threshold(se: f64) -> String {
    format!("delta > 0 and delta >= 1 SE of paired segment differences ({se:.6})")
}

fn improved(delta: f64, se: f64) -> Status {
    if delta > 0.0 && delta >= se {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn skipped(
    o: Observation,
    metric: &str,
    group: &str,
    rounds: [usize; 2],
    note: &str,
) -> ObservationResult {
    ObservationResult {
        observation: o,
        status: Status::Skipped,
        metric: metric.into(),
        group: group.into(),
        rounds,
        threshold: "not asserted".into(),
        baseline: None,
        candidate: None,
        delta: None,
        standard_error: None,
        note: Some(note.into()),
    }
}

/// Dev-set quality per group under `dev_metric_key` names, as recorded
/// after every round.
pub fn dev_quality(
    model: &Transformer,
    registry: &LanguageRegistry,
    dev: &ParallelCorpus,
    groups: &LangGroups,
    metric: Metric,
) -> Result<BTreeMap<String, f64>> {
    let langs: Vec<String> = groups.all.iter().cloned().collect();
    let out = translate_split(model, registry, dev, &langs)?;
    let table = evaluate_outputs(registry, &out, &[metric])?;
    let values = table.get(&metric).cloned().unwrap_or_default();
    let mut m = BTreeMap::new();
    if groups.all.iter().all(|l| values.contains_key(l)) {
        for row in group_aggregate(&values, groups)? {
            if let Some(v) = row.mean {
                m.insert(dev_metric_key(metric, row.group), v);
            }
        }
    }
    Ok(m)
}

fn pooled_segments(
    metric: Metric,
    langs: &[String],
    registry: &LanguageRegistry,
    outputs: &BTreeMap<String, LangOutputs>,
) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    for l in langs {
        if let Some(s) = segment_scores(metric, registry.get(l)?, &outputs[l])? {
            v.extend(s);
        }
    }
    Ok(v)
}

/// Per-segment perplexity of each training record.
fn perplexities<M: SeqModel + ?Sized>(
    model: &M,
    registry: &LanguageRegistry,
    sample: &[Record],
) -> Result<Vec<f64>> {
    sample
        .iter()
        .map(|r| {
            let input = registry.get(&r.lang)?.model_input(&r.source);
            Ok(segment_perplexity(
                sequence_log_prob(model, &input, &r.target)?,
                r.target.len(),
            ))
        })
        .collect()
}

/// Runs the whole pipeline for one seed: data, baseline, preference rounds,
/// evaluation and observation checks. Artifacts go under `dir` if given.
pub fn run_seed(plan: &ExperimentPlan, seed: u64, dir: Option<&Path>) -> Result<SeedReport> {
    plan.validate()?;
    let data = prepare_data(plan, seed)?;
    let registry = &data.registry;
    if let Some(d) = dir {
        let c = d.join("corpus");
        data.splits.save(&c)?;
        registry.save(&c.join("languages.json"))?;
    }
    let baseline = run_baseline(
        plan,
        registry,
        &data.splits.train,
        &data.splits.dev,
        seed,
        dir.map(|d| d.join("baseline")).as_deref(),
    )?;
    info!(
        "seed {seed}: baseline best epoch {} of {}",
        baseline.best_epoch,
        baseline.epochs.len()
    );

    let groups = LangGroups::new(&registry.families(), plan.aligned(), Some(ISOLATE_FAMILY))?;
    let evaluator = |m: &Transformer, _round: usize| {
        dev_quality(m, registry, &data.splits.dev, &groups, plan.quality_metric)
    };
    let pool: Vec<Vec<Token>> = data
        .splits
        .train
        .records
        .iter()
        .map(|r| r.source.clone())
        .collect();
    let mut config = plan.dqo.clone();
    config.seed = seed;
    let run_dir = dir.map(|d| d.join("run"));
    let outcome = run_dqo(
        &baseline.model,
        &pool,
        registry,
        &OracleScorer::new(registry.clone()),
        &config,
        plan.mode,
        RunOptions {
            run_dir: run_dir.as_deref(),
            evaluator: Some(&evaluator),
            ..Default::default()
        },
    )?;
    let last_round = config.rounds;
    let candidate = outcome.policy.net();

    let langs: Vec<String> = groups.all.iter().cloned().collect();
    let base_out = translate_split(&baseline.model, registry, &data.splits.test, &langs)?;
    let cand_out = translate_split(candidate, registry, &data.splits.test, &langs)?;
    let base_table = evaluate_outputs(registry, &base_out, &plan.metrics)?;
    let cand_table = evaluate_outputs(registry, &cand_out, &plan.metrics)?;

    let mut group_rows = Vec::new();
    let mut lang_rows = Vec::new();
    for &m in &plan.metrics {
        let (b, c) = (&base_table[&m], &cand_table[&m]);
        for (l, &bv) in b {
            lang_rows.push(LangRow {
                lang: l.clone(),
                metric: m,
                baseline: bv,
                candidate: c[l],
            });
        }
        for &g in &Group::ROWS {
            let members = groups.members(g);
            let mean = |t: &BTreeMap<String, f64>| {
                let vs: Vec<f64> = members.iter().filter_map(|l| t.get(l)).copied().collect();
                (!vs.is_empty()).then(|| vs.iter().sum::<f64>() / vs.len() as f64)
            };
            group_rows.push(GroupRow {
                metric: m,
                group: g,
                size: members.len(),
                baseline: mean(b),
                candidate: mean(c),
            });
        }
    }
    let group_value = |m: Metric, g: Group| {
        group_rows
            .iter()
            .find(|r| r.metric == m && r.group == g)
            .map(|r| (r.baseline, r.candidate))
            .unwrap_or((None, None))
    };

    let mut significance = Vec::new();
    for &m in &plan.significance {
        for &g in &Group::ROWS {
            let members: Vec<String> = groups.members(g).into_iter().collect();
            let b = pooled_segments(m, &members, registry, &base_out)?;
            let c = pooled_segments(m, &members, registry, &cand_out)?;
            if b.is_empty() {
                continue;
            }
            // Higher is better, so the "lower is better" test sees negated scores.
            let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
            let sig_seed = StreamKey::root(seed)
                .label("significance")
                .label(m.name())
                .label(g.key())
                .value();
            let r =
                paired_randomization_test(&neg(&c), &neg(&b), plan.randomization_trials, sig_seed)?;
            significance.push(SignificanceRow {
                metric: m,
                group: g,
                delta: r.statistic,
                p_value: r.p_value,
                exact: r.exact,
                trials: r.trials,
            });
        }
    }

    let qm = plan.quality_metric;
    let rounds = [0, last_round];
    let mut observations = Vec::new();
    for (o, g) in [
        (Observation::QualityAligned, Group::Aligned),
        (Observation::QualityHeldOut, Group::Unrelated),
    ] {
        let members: Vec<String> = groups.members(g).into_iter().collect();
        if members.is_empty() {
            observations.push(skipped(
                o,
                qm.name(),
                g.label(),
                rounds,
                "group is empty: no held-out languages",
            ));
            continue;
        }
        let b = pooled_segments(qm, &members, registry, &base_out)?;
        let c = pooled_segments(qm, &members, registry, &cand_out)?;
        let (_, se) = paired_delta(&b, &c);
        let (bv, cv) = group_value(qm, g);
        let (bv, cv) = (bv.expect("non-empty group"), cv.expect("non-empty group"));
        let delta = cv - bv;
        observations.push(ObservationResult {
            observation: o,
            status: improved(delta, se),
            metric: format!("test {}", qm.name()),
            group: g.label().into(),
            rounds,
            threshold: one_se_threshold(se),
            baseline: Some(bv),
            candidate: Some(cv),
            delta: Some(delta),
            standard_error: Some(se),
            note: Some(format!("languages: {}", members.join(","))),
        });
    }

    let clean =
        plan.corpus.corruption.is_zero() && plan.corpus.overrides.values().all(|c| c.is_zero());
    if clean {
        observations.push(skipped(
            Observation::TrainingPerplexity,
            "training perplexity",
            Group::All.label(),
            rounds,
            "corpus is uncorrupted: no mismatch to reduce",
        ));
    } else {
        let b = perplexities(&baseline.model, registry, &data.perplexity_sample)?;
        let c = perplexities(candidate, registry, &data.perplexity_sample)?;
        let (delta, se) = paired_delta(&b, &c);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        observations.push(ObservationResult {
            observation: Observation::TrainingPerplexity,
            status: improved(delta, se),
            metric: "training perplexity".into(),
            group: Group::All.label().into(),
            rounds,
            threshold: one_se_threshold(se),
            baseline: Some(mean(&b)),
            candidate: Some(mean(&c)),
            delta: Some(delta),
            standard_error: Some(se),
            note: Some(format!("{} corrupted-train segments", b.len())),
        });
    }

    match &plan.feature_probe {
        None => observations.push(skipped(
            Observation::FeatureUsage,
            "feature_rate",
            "-",
            rounds,
            "no feature probe language",
        )),
        Some(p) => {
            let spec = registry.get(p)?;
            let mut diffs = Vec::with_capacity(data.probe_sources.len());
            let (mut total, mut kb, mut kc) = (0usize, 0usize, 0usize);
            for s in &data.probe_sources {
                let (n, b) = feature_counts(spec, s, &baseline.model.translate(spec, s)?);
                let (_, c) = feature_counts(spec, s, &candidate.translate(spec, s)?);
                total += n;
                kb += b;
                kc += c;
                diffs.push(c as f64 - b as f64);
            }
            if total == 0 {
                observations.push(skipped(
                    Observation::FeatureUsage,
                    "feature_rate",
                    p,
                    rounds,
                    "probe contains no entity tokens",
                ));
            } else {
                let zeros = vec![0.0; diffs.len()];
                let (_, se_count) = paired_delta(&zeros, &diffs);
                let se = se_count * diffs.len() as f64 / total as f64;
                let (bv, cv) = (kb as f64 / total as f64, kc as f64 / total as f64);
                observations.push(ObservationResult {
                    observation: Observation::FeatureUsage,
                    status: improved(cv - bv, se),
                    metric: "feature_rate".into(),
                    group: p.clone(),
                    rounds,
                    threshold: one_se_threshold(se),
                    baseline: Some(bv),
                    candidate: Some(cv),
                    delta: Some(cv - bv),
                    standard_error: Some(se),
                    note: Some(format!(
                        "{} probe sentences, {total} entity tokens",
                        data.probe_sources.len()
                    )),
                });
            }
        }
    }

    let key = dev_metric_key(qm, Group::All);
    let series: Vec<f64> = outcome
        .rounds
        .iter()
        .filter_map(|r| r.metrics.get(&key).copied())
        .collect();
    let steps = series.len().saturating_sub(1);
    let ups = series.windows(2).filter(|w| w[1] >= w[0]).count();
    let required = steps.saturating_sub(1).max(1).min(steps);
    observations.push(ObservationResult {
        observation: Observation::RoundTrend,
        status: if steps > 0 && ups >= required {
            Status::Pass
        } else {
            Status::Fail
        },
        metric: format!("dev {}", qm.name()),
        group: Group::All.label().into(),
        rounds,
        threshold: format!("non-decreasing in >= {required} of {steps} round transitions"),
        baseline: series.first().copied(),
        candidate: series.last().copied(),
        delta: series.first().zip(series.last()).map(|(a, b)| b - a),
        standard_error: None,
        note: Some(format!(
            "{ups} of {steps} non-decreasing; series: {}",
            series
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        )),
    });

    let report = SeedReport {
        seed,
        baseline_epochs: baseline.epochs.len(),
        baseline_best_epoch: baseline.best_epoch,
        groups: group_rows,
        languages: lang_rows,
        rounds: outcome.rounds.iter().map(round_point).collect(),
        significance,
        observations,
    };
    if let Some(d) = dir {
        let columns = |t: &MetricTable| -> Vec<(String, BTreeMap<String, f64>)> {
            t.iter()
                .map(|(m, v)| (m.name().to_string(), v.clone()))
                .collect()
        };
        let mut cols = columns(&base_table);
        for c in &mut cols {
            c.0 = format!("baseline_{}", c.0);
        }
        for (name, v) in columns(&cand_table) {
            cols.push((format!("final_{name}"), v));
        }
        write(&d.join("groups.csv"), &group_report_csv(&cols, &groups)?)?;
        write(
            &d.join("seed_report.json"),
            &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
        )?;
    }
    Ok(report)
}

fn round_point(r: &RoundRecord) -> RoundPoint {
    RoundPoint {
        round: r.round,
        pairs: r.pairs.pairs,
        mean_loss: r.mean_loss,
        metrics: r.metrics.clone(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Seeds needed for an observation to hold: two thirds, rounded up.
pub fn required_passes(evaluated: usize) -> usize {
    (2 * evaluated).div_ceil(3)
}

/// Runs every seed of the plan and summarizes the observations. With an
/// output directory, each seed gets `seed-<n>/` and the suite writes
/// `report.json` and `report.txt`.
pub fn run_observation_suite(plan: &ExperimentPlan, out: Option<&Path>) -> Result<SuiteReport> {
    plan.validate()?;
    let mut seeds = Vec::new();
    for &s in &plan.seeds {
        let dir = out.map(|o| o.join(format!("seed-{s}")));
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        seeds.push(run_seed(plan, s, dir.as_deref())?);
    }
    let registry = LanguageRegistry::build(&plan.corpus, plan.seeds[0])?;
    let groups = LangGroups::new(&registry.families(), plan.aligned(), Some(ISOLATE_FAMILY))?;
    let summary = Observation::ALL
        .iter()
        .map(|&o| {
            let results: Vec<&ObservationResult> =
                seeds.iter().filter_map(|s| s.observation(o)).collect();
            let evaluated = results
                .iter()
                .filter(|r| r.status != Status::Skipped)
                .count();
            let passed = results.iter().filter(|r| r.status == Status::Pass).count();
            let required = required_passes(evaluated);
            ObservationSummary {
                observation: o,
                evaluated,
                passed,
                required,
                holds: evaluated > 0 && passed >= required,
            }
        })
        .collect();
    let report = SuiteReport {
        mode: plan.mode.name().into(),
        aligned: plan.aligned().to_vec(),
        held_out: groups.members(Group::Unrelated).into_iter().collect(),
        feature_probe: plan.feature_probe.clone(),
        quality_metric: plan.quality_metric,
        seeds,
        summary,
    };
    if let Some(o) = out {
        write(&o.join("report.json"), &report.to_json())?;
        write(&o.join("report.txt"), &report.to_text())?;
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "mode {} | aligned {} | held out {} | probe {}",
            self.mode,
            self.aligned.join(","),
            if self.held_out.is_empty() {
                "-".into()
            } else {
                self.held_out.join(",")
            },
            self.feature_probe.as_deref().unwrap_or("-")
        );
        for seed in &self.seeds {
            let _ = writeln!(
                s,
                "\nseed {} (baseline: {} epochs, best {})",
                seed.seed, seed.baseline_epochs, seed.baseline_best_epoch
            );
            let _ = writeln!(
                s,
                "  {:<12} {:<6} {:>4} {:>10} {:>10}",
                "metric", "group", "n", "baseline", "final"
            );
            for g in &seed.groups {
                let _ = writeln!(
                    s,
                    "  {:<12} {:<6} {:>4} {:>10} {:>10}",
                    g.metric.name(),
                    g.group.label(),
                    g.size,
                    opt(g.baseline),
                    opt(g.candidate)
                );
            }
            for r in &seed.observations {
                let _ = writeln!(
                    s,
                    "  [{:?}] {} on {} rounds {}..{}: {} -> {} (delta {}, SE {}); {}{}",
                    r.status,
                    r.metric,
                    r.group,
                    r.rounds[0],
                    r.rounds[1],
                    opt(r.baseline),
                    opt(r.candidate),
                    opt(r.delta),
                    opt(r.standard_error),
                    r.threshold,
                    r.note
                        .as_ref()
                        .map(|n| format!("; {n}"))
                        .unwrap_or_default()
                );
            }
        }
        let _ = writeln!(s, "\nsummary");
        for o in &self.summary {
            let _ = writeln!(
                s,
                "  {:<20} {} of {} seeds (need {}): {}",
                o.observation.name(),
                o.passed,
                o.evaluated,
                o.required,
                if o.evaluated == 0 {
                    "skipped"
                } else if o.holds {
                    "holds"
                } else {
                    "does not hold"
                }
            );
        }
        s
    }
}
