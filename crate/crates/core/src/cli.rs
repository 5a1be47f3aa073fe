//! The `dqoforge` command line.
//!
//! Exit codes: 0 success, 1 I/O or transport failure, 2 configuration or
//! input error, 3 training aborted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evalsuite::{
    evaluate_outputs, group_report_csv, paired_randomization_test, segment_scores, translate_split,
    write_metrics, IdealTranslator, LangGroups, LangOutputs, Metric, MetricRecord, MetricTable,
};
use crate::experiment::{dev_quality, run_baseline, run_observation_suite, ExperimentPlan};
use crate::qescore::{MockQeServer, OracleScorer, QeScorer, RemoteConfig, RemoteScorer};
use crate::seqmodel::{checkpoint, Transformer};
use crate::synthdata::{gen_corpus, LanguageRegistry, Splits, ISOLATE_FAMILY};
use crate::trainer::{run_dqo, RoundRecord, RunOptions, TrainMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

pub const LOG_ENV: &str = "DQOFORGE_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "dqoforge",
    version,
    about = "Preference optimization from quality estimates on toy translation"
)]
pub struct Cli {
    /// Experiment plan (TOML). The built-in desk plan is used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the plan's first seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a preset plan as TOML.
    Plan {
        #[arg(long, default_value = "desk")]
        preset: String,
    },
    /// Generate languages and train/dev/test corpora.
    Gen,
    /// Supervised baseline on the corrupted training split.
    TrainBaseline {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Preference rounds starting from a baseline checkpoint.
    Dqo(RoundArgs),
    /// Same rounds with supervised updates on the winners only.
    Raft(RoundArgs),
    /// Per-language and per-group metrics for a checkpoint.
    Eval(EvalArgs),
    /// Per-round series and charts from one or more run directories.
    Report {
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
    },
    /// Serve the oracle scorer over HTTP until interrupted.
    QeServe {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Full observation suite: every seed, baseline through final report.
    Suite,
}

#[derive(Debug, Args)]
pub struct RoundArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub baseline: PathBuf,
    /// `dqo` or `raft`; defaults to the subcommand's own mode.
    #[arg(long)]
    pub mode: Option<TrainMode>,
    /// Score with a remote QE service instead of the in-process oracle.
    #[arg(long)]
    pub qe_url: Option<String>,
    /// Stop after this round, leaving a resumable run directory.
    #[arg(long)]
    pub stop_after_round: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint to evaluate; omit together with `--ideal`.
    #[arg(long, required_unless_present = "ideal")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate the ideal translations instead of a model.
    #[arg(long, conflicts_with = "checkpoint")]
    pub ideal: bool,
    /// Second checkpoint: adds deltas and randomization p-values.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Comma separated: bleu, qe, feature_rate.
    #[arg(long, default_value = "bleu,qe,feature_rate")]
    pub metrics: String,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub round: usize,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Format { .. } => EXIT_CONFIG,
        Error::Io { .. } | Error::Transport { .. } | Error::Protocol(_) => EXIT_IO,
        Error::Training { .. } | Error::Numeric { .. } => EXIT_TRAINING,
    }
}

/// Content hash in the style of a git blob id: SHA-256 over
/// `"blob <len>\0"` followed by the bytes.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

/// Written next to every command's outputs as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    /// [`blob_hash`] of `config.toml` in the same directory.
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub tool_version: String,
    pub status: RunStatus,
    pub error: Option<String>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

impl RunManifest {
    /// Snapshots the plan as `config.toml` and hashes the given inputs.
    pub fn begin(
        dir: &Path,
        command: &str,
        plan: &ExperimentPlan,
        seed: u64,
        inputs: &[&Path],
    ) -> Result<Self> {
        mkdir(dir)?;
        let snapshot = plan.to_toml();
        write_file(&dir.join("config.toml"), snapshot.as_bytes())?;
        let config_hash = blob_hash(snapshot.as_bytes());
        let mut hashed = BTreeMap::new();
        for p in inputs {
            let bytes = fs::read(p).map_err(|e| Error::io(*p, e))?;
            hashed.insert(p.display().to_string(), blob_hash(&bytes));
        }
        let m = RunManifest {
            run_id: format!("{command}-{}-s{seed}", &config_hash[..12]),
            command: command.into(),
            config_hash,
            inputs: hashed,
            started_unix: now_unix(),
            finished_unix: None,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            status: RunStatus::Running,
            error: None,
        };
        m.save(dir)?;
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_file(&dir.join("manifest.json"), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("manifest.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))
    }

    /// Recomputes the hash of the stored snapshot.
    pub fn verify_config(&self, dir: &Path) -> Result<bool> {
        let p = dir.join("config.toml");
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        Ok(blob_hash(&bytes) == self.config_hash)
    }

    pub fn finish<T>(mut self, dir: &Path, result: &Result<T>) -> Result<()> {
        self.finished_unix = Some(now_unix());
        match result {
            Ok(_) => self.status = RunStatus::Ok,
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
        self.save(dir)
    }
}

struct Context {
    plan: ExperimentPlan,
    seed: u64,
    out: Option<PathBuf>,
}

impl Context {
    fn out(&self, command: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::config(format!("{command} needs --out")))
    }
}

/// Parses arguments, runs the command and returns the exit code. Errors are
/// printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut plan = match &cli.config {
        Some(p) => ExperimentPlan::load(p)?,
        None => ExperimentPlan::desk(),
    };
    if let Some(s) = cli.seed {
        plan.seeds[0] = s;
    }
    let ctx = Context {
        seed: plan.seeds[0],
        plan,
        out: cli.out,
    };
    match cli.command {
        Command::Plan { preset } => cmd_plan(&preset),
        Command::Gen => cmd_gen(&ctx),
        Command::TrainBaseline { corpus } => cmd_train_baseline(&ctx, &corpus),
        Command::Dqo(a) => cmd_rounds(&ctx, a, TrainMode::Dpo),
        Command::Raft(a) => cmd_rounds(&ctx, a, TrainMode::Sft),
        Command::Eval(a) => cmd_eval(&ctx, &a),
        Command::Report { runs } => cmd_report(&ctx, &runs),
        Command::QeServe { corpus, port } => cmd_qe_serve(&corpus, port),
        Command::Suite => cmd_suite(&ctx),
    }
}

fn cmd_plan(preset: &str) -> Result<()> {
    let plan = match preset {
        "desk" => ExperimentPlan::desk(),
        "smoke" => ExperimentPlan::smoke(),
        other => {
            return Err(Error::config(format!(
                "unknown preset {other:?}; expected desk or smoke"
            )))
        }
    };
    print!("{}", plan.to_toml());
    Ok(())
}

const REGISTRY_FILE: &str = "languages.json";

fn load_corpus(dir: &Path) -> Result<(LanguageRegistry, Splits)> {
    Ok((
        LanguageRegistry::load(&dir.join(REGISTRY_FILE))?,
        Splits::load(dir)?,
    ))
}

fn corpus_inputs(dir: &Path) -> Vec<PathBuf> {
    std::iter::once(REGISTRY_FILE)
        .chain(Splits::FILES)
        .map(|f| dir.join(f))
        .collect()
}

fn with_manifest<T>(
    dir: &Path,
    command: &str,
    ctx: &Context,
    inputs: &[PathBuf],
    body: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::begin(dir, command, &ctx.plan, ctx.seed, &refs)?;
    let result = body();
    manifest.finish(dir, &result)?;
    result
}

fn cmd_gen(ctx: &Context) -> Result<()> {
    let out = ctx.out("gen")?;
    with_manifest(out, "gen", ctx, &[], || {
        let registry = LanguageRegistry::build(&ctx.plan.corpus, ctx.seed)?;
        let splits = gen_corpus(&registry, &ctx.plan.corpus, ctx.seed)?;
        splits.save(out)?;
        registry.save(&out.join(REGISTRY_FILE))?;
        println!(
            "{} languages, {} train / {} dev / {} test segments",
            registry.languages.len(),
            splits.train.len(),
            splits.dev.len(),
            splits.test.len()
        );
        for (c, n) in splits.channel_counts() {
            println!("  {c}: {n} corrupted train segments");
        }
        Ok(())
    })
}

fn cmd_train_baseline(ctx: &Context, corpus: &Path) -> Result<()> {
    let out = ctx.out("train-baseline")?;
    let (registry, splits) = load_corpus(corpus)?;
    with_manifest(out, "train-baseline", ctx, &corpus_inputs(corpus), || {
        let b = run_baseline(
            &ctx.plan,
            &registry,
            &splits.train,
            &splits.dev,
            ctx.seed,
            Some(out),
        )?;
        for e in &b.epochs {
            println!(
                "epoch {} steps {} train_loss {:.6} dev_loss {:.6}{}",
                e.epoch,
                e.steps,
                e.train_loss,
                e.dev_loss,
                if e.best { " best" } else { "" }
            );
        }
        println!(
            "baseline checkpoint: {}",
            out.join("baseline.ckpt").display()
        );
        Ok(())
    })
}

fn groups_for(plan: &ExperimentPlan, registry: &LanguageRegistry) -> Result<LangGroups> {
    LangGroups::new(&registry.families(), plan.aligned(), Some(ISOLATE_FAMILY))
}

fn cmd_rounds(ctx: &Context, a: RoundArgs, default_mode: TrainMode) -> Result<()> {
    let mode = a.mode.unwrap_or(default_mode);
    let command = match mode {
        TrainMode::Dpo => "dqo",
        TrainMode::Sft => "raft",
    };
    let out = ctx.out(command)?;
    let (registry, splits) = load_corpus(&a.corpus)?;
    let baseline = checkpoint::load(&a.baseline)?;
    let mut inputs = corpus_inputs(&a.corpus);
    inputs.push(a.baseline.clone());
    let mut config = ctx.plan.dqo.clone();
    config.seed = ctx.seed;
    let groups = groups_for(&ctx.plan, &registry)?;
    let metric = ctx.plan.quality_metric;
    let evaluator =
        |m: &Transformer, _round: usize| dev_quality(m, &registry, &splits.dev, &groups, metric);
    let scorer: Box<dyn QeScorer> = match &a.qe_url {
        Some(url) => Box::new(RemoteScorer::new(RemoteConfig {
            url: url.clone(),
            ..RemoteConfig::default()
        })?),
        None => Box::new(OracleScorer::new(registry.clone())),
    };
    let pool: Vec<_> = splits
        .train
        .records
        .iter()
        .map(|r| r.source.clone())
        .collect();
    with_manifest(out, command, ctx, &inputs, || {
        let mut progress = |s: &crate::trainer::StepRecord| {
            println!(
                "round {} epoch {} step {} loss {:.6} lr {:.3e}",
                s.round, s.epoch, s.step, s.loss, s.lr
            );
        };
        let outcome = run_dqo(
            &baseline,
            &pool,
            &registry,
            scorer.as_ref(),
            &config,
            mode,
            RunOptions {
                run_dir: Some(out),
                evaluator: Some(&evaluator),
                stop_after_round: a.stop_after_round,
                on_step: Some(&mut progress),
            },
        )?;
        if let Some(r) = outcome.resumed_from {
            println!("resumed after round {r}");
        }
        for r in &outcome.rounds {
            let m: Vec<String> = r
                .metrics
                .iter()
                .map(|(k, v)| format!("{k}={v:.4}"))
                .collect();
            println!("round {} pairs {} {}", r.round, r.pairs.pairs, m.join(" "));
        }
        Ok(())
    })
}

fn split_of<'a>(splits: &'a Splits, name: &str) -> Result<&'a crate::synthdata::ParallelCorpus> {
    match name {
        "train" => Ok(&splits.train),
        "dev" => Ok(&splits.dev),
        "test" => Ok(&splits.test),
        other => Err(Error::config(format!(
            "unknown split {other:?}; expected train, dev or test"
        ))),
    }
}

fn table_columns(t: &MetricTable, prefix: &str) -> Vec<(String, BTreeMap<String, f64>)> {
    t.iter()
        .map(|(m, v)| (format!("{prefix}{}", m.name()), v.clone()))
        .collect()
}

fn cmd_eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    let metrics = Metric::parse_list(&a.metrics)?;
    if metrics.is_empty() {
        return Err(Error::config("--metrics names no metric"));
    }
    let out = ctx.out("eval")?;
    let (registry, splits) = load_corpus(&a.corpus)?;
    let split = split_of(&splits, &a.split)?;
    let mut inputs = corpus_inputs(&a.corpus);
    inputs.extend(a.checkpoint.iter().cloned());
    inputs.extend(a.compare.iter().cloned());
    let langs = registry.ids();
    let groups = groups_for(&ctx.plan, &registry)?;
    with_manifest(out, "eval", ctx, &inputs, || {
        let outputs = match &a.checkpoint {
            Some(p) => translate_split(&checkpoint::load(p)?, &registry, split, &langs)?,
            None => translate_split(&IdealTranslator, &registry, split, &langs)?,
        };
        let table = evaluate_outputs(&registry, &outputs, &metrics)?;
        let run_id = a.run_id.clone().unwrap_or_else(|| {
            a.checkpoint
                .as_ref()
                .map_or("ideal".into(), |p| p.display().to_string())
        });
        let records = metric_records(&run_id, a.round, &table);
        write_metrics(&out.join("metrics.jsonl"), &records)?;
        let mut columns = table_columns(&table, "");
        let mut compare_csv = None;
        if let Some(other) = &a.compare {
            let other_out = translate_split(&checkpoint::load(other)?, &registry, split, &langs)?;
            let other_table = evaluate_outputs(&registry, &other_out, &metrics)?;
            columns.extend(table_columns(&other_table, "compare_"));
            compare_csv = Some(compare_rows(
                &registry,
                &metrics,
                &outputs,
                &other_out,
                &table,
                &other_table,
                ctx,
            )?);
        }
        let csv = group_report_csv(&columns, &groups)?;
        write_file(&out.join("groups.csv"), csv.as_bytes())?;
        print!("{csv}");
        if let Some(c) = compare_csv {
            write_file(&out.join("compare.csv"), c.as_bytes())?;
            print!("{c}");
        }
        Ok(())
    })
}

fn metric_records(run_id: &str, round: usize, table: &MetricTable) -> Vec<MetricRecord> {
    table
        .iter()
        .flat_map(|(m, per_lang)| {
            per_lang.iter().map(move |(l, &v)| MetricRecord {
                run_id: run_id.to_string(),
                round,
                lang: l.clone(),
                metric: m.name().to_string(),
                value: v,
            })
        })
        .collect()
}

/// `lang,metric,value,compare,delta,p_value`; the p-value tests whether the
/// compared checkpoint is better.
fn compare_rows(
    registry: &LanguageRegistry,
    metrics: &[Metric],
    base: &BTreeMap<String, LangOutputs>,
    other: &BTreeMap<String, LangOutputs>,
    base_table: &MetricTable,
    other_table: &MetricTable,
    ctx: &Context,
) -> Result<String> {
    let mut s = "lang,metric,value,compare,delta,p_value\n".to_string();
    for &m in metrics {
        for (lang, &v) in &base_table[&m] {
            let spec = registry.get(lang)?;
            let w = other_table[&m][lang];
            let p = match (
                segment_scores(m, spec, &base[lang])?,
                segment_scores(m, spec, &other[lang])?,
            ) {
                (Some(b), Some(o)) => {
                    let neg = |x: &[f64]| x.iter().map(|v| -v).collect::<Vec<_>>();
                    let r = paired_randomization_test(
                        &neg(&o),
                        &neg(&b),
                        ctx.plan.randomization_trials,
                        ctx.seed,
                    )?;
                    format!("{:.6}", r.p_value)
                }
                _ => String::new(),
            };
            let _ = writeln!(s, "{lang},{m},{v:.6},{w:.6},{:.6},{p}", w - v);
        }
    }
    Ok(s)
}

fn read_rounds(dir: &Path) -> Result<Vec<RoundRecord>> {
    let p = dir.join("rounds.jsonl");
    let text = match fs::read_to_string(&p) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Error::io(&p, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format("rounds.jsonl", e.to_string())))
        .collect()
}

/// One line per run in an SVG chart of `metric` against round.
pub fn svg_chart(metric: &str, series: &[(String, Vec<(usize, f64)>)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 48.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    let pts: Vec<&(usize, f64)> = series.iter().flat_map(|(_, s)| s).collect();
    let max_r = pts.iter().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let (mut lo, mut hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1), b.max(p.1))
        });
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let x = |r: usize| PAD + (W - 2.0 * PAD) * r as f64 / max_r;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{metric}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">round</text>"#,
        W / 2.0,
        H - 10.0
    );
    for r in 0..=max_r as usize {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="middle">{r}</text>"#,
            x(r),
            H - PAD + 14.0
        );
    }
    for v in [lo, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            PAD - 4.0,
            y(v) + 3.0
        );
    }
    for (i, (label, pts)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(r, v)| format!("{:.1},{:.1}", x(r), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(r, v) in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#,
                x(r),
                y(v)
            );
        }
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{c}">{label}</text>"#,
            W - PAD - 90.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn run_label(dir: &Path, rounds: &[RoundRecord]) -> String {
    let name = dir.file_name().map_or_else(
        || dir.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    format!("{name} ({})", rounds[0].mode.name())
}

fn cmd_report(ctx: &Context, runs: &[PathBuf]) -> Result<()> {
    let out = ctx.out("report")?;
    let mut by_metric: BTreeMap<String, Vec<(String, Vec<(usize, f64)>)>> = BTreeMap::new();
    let mut csv = "run,mode,round,metric,value\n".to_string();
    for dir in runs {
        let rounds = read_rounds(dir)?;
        if rounds.is_empty() {
            return Err(Error::input(format!(
                "{} has no completed rounds",
                dir.display()
            )));
        }
        let label = run_label(dir, &rounds);
        let mut series: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
        for r in &rounds {
            let mut metrics = r.metrics.clone();
            if let Some(l) = r.mean_loss {
                metrics.insert("mean_loss".into(), l);
            }
            for (k, v) in metrics {
                let _ = writeln!(
                    csv,
                    "{},{},{},{k},{v}",
                    dir.display(),
                    r.mode.name(),
                    r.round
                );
                series.entry(k).or_default().push((r.round, v));
            }
        }
        for (k, pts) in series {
            by_metric.entry(k).or_default().push((label.clone(), pts));
        }
    }
    mkdir(out)?;
    write_file(&out.join("series.csv"), csv.as_bytes())?;
    for (metric, series) in &by_metric {
        write_file(
            &out.join(format!("{metric}.svg")),
            svg_chart(metric, series).as_bytes(),
        )?;
        println!("{metric}: {} series", series.len());
    }
    Ok(())
}

fn cmd_qe_serve(corpus: &Path, port: u16) -> Result<()> {
    let registry = LanguageRegistry::load(&corpus.join(REGISTRY_FILE))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| Error::io("<tokio runtime>", e))?;
    runtime.block_on(async move {
        let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::io(addr.to_string(), e))?;
        let local = listener
            .local_addr()
            .map_err(|e| Error::io(addr.to_string(), e))?;
        println!("listening on http://{local}");
        use std::io::Write as _;
        let _ = std::io::stdout().flush();
        MockQeServer::new(registry, Default::default())
            .serve(listener, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}

fn cmd_suite(ctx: &Context) -> Result<()> {
    let out = ctx.out("suite")?;
    with_manifest(out, "suite", ctx, &[], || {
        let report = run_observation_suite(&ctx.plan, Some(out))?;
        print!("{}", report.to_text());
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_framing() {
        // sha256 of "blob 0\0"
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::config("x")), EXIT_CONFIG);
        assert_eq!(
            exit_code(&Error::io("p", std::io::Error::other("x"))),
            EXIT_IO
        );
        let t = Error::Training {
            round: 1,
            stage: "train",
            detail: "x".into(),
        };
        assert_eq!(exit_code(&t), EXIT_TRAINING);
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let s = svg_chart(
            "dev_qe_all",
            &[
                ("a (dqo)".into(), vec![(0, 0.5), (1, 0.6)]),
                ("b (raft)".into(), vec![(0, 0.5), (1, 0.55)]),
            ],
        );
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("b (raft)"));
    }
}
