use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use dqoforge::qescore::{OracleScorer, QeItem, QeScorer, RemoteConfig, RemoteScorer};
use dqoforge::synthdata::{LanguageRegistry, Splits};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dqoforge"));
    c.env("DQOFORGE_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Smoke plan written to `dir`, with `[dqo]` keys replaced.
fn smoke_config(dir: &Path, name: &str, dqo_edits: &[(&str, &str)]) -> PathBuf {
    let o = run(&["plan", "--preset", "smoke"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let (head, tail) = text.split_once("[dqo]\n").unwrap();
    let mut tail = tail.to_string();
    for (k, v) in dqo_edits {
        let start = tail.find(&format!("\n{k} = ")).map(|i| i + 1).unwrap_or(0);
        assert!(
            tail[start..].starts_with(&format!("{k} = ")),
            "no dqo key {k}"
        );
        let end = start + tail[start..].find('\n').unwrap();
        tail.replace_range(start..end, &format!("{k} = {v}"));
    }
    let path = dir.join(name);
    fs::write(&path, format!("{head}[dqo]\n{tail}")).unwrap();
    path
}

struct Workspace {
    tmp: TempDir,
    config: PathBuf,
}

impl Workspace {
    fn new(dqo_edits: &[(&str, &str)]) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let config = smoke_config(tmp.path(), "plan.toml", dqo_edits);
        Workspace { tmp, config }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.tmp.path().join(rel)
    }

    fn cmd(&self, out: &str, args: &[&str]) -> Output {
        let out = self.path(out);
        let mut all = vec!["--config", s(&self.config), "--out", s(&out)];
        all.extend_from_slice(args);
        run(&all)
    }

    fn ok(&self, out: &str, args: &[&str]) -> String {
        let o = self.cmd(out, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        stdout(&o)
    }

    /// Corpus in `corpus/`, baseline in `base/`.
    fn prepared(self) -> Self {
        self.ok("corpus", &["gen"]);
        let corpus = self.path("corpus");
        self.ok("base", &["train-baseline", "--corpus", s(&corpus)]);
        self
    }

    fn rounds(&self, out: &str, sub: &str, extra: &[&str]) -> Output {
        let (corpus, base) = (self.path("corpus"), self.path("base/baseline.ckpt"));
        let mut args = vec![sub, "--corpus", s(&corpus), "--baseline", s(&base)];
        args.extend_from_slice(extra);
        self.cmd(out, &args)
    }
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn gen_exit_codes_and_reruns() {
    let w = Workspace::new(&[]);
    let out = w.ok("a", &["gen"]);
    assert!(out.contains("8 languages"), "{out}");
    w.ok("b", &["gen"]);
    for f in [
        "languages.json",
        "train.tsv",
        "dev.tsv",
        "test.tsv",
        "config.toml",
    ] {
        assert_eq!(
            fs::read(w.path("a").join(f)).unwrap(),
            fs::read(w.path("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let (ma, mb) = (manifest(&w.path("a")), manifest(&w.path("b")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["run_id"], mb["run_id"]);
    assert_eq!(ma["status"], "ok");

    // A missing required key names the key.
    let text = fs::read_to_string(&w.config).unwrap();
    let bad = w.path("bad.toml");
    fs::write(&bad, text.replace("seeds = [1]\n", "")).unwrap();
    let o = run(&["--config", s(&bad), "--out", s(&w.path("c")), "gen"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seeds"), "{}", stderr(&o));

    // An unknown key is a hard error too.
    fs::write(&bad, text.replace("[dqo]\n", "[dqo]\nlearning_rat = 1.0\n")).unwrap();
    assert_eq!(
        code(&run(&[
            "--config",
            s(&bad),
            "--out",
            s(&w.path("c")),
            "gen"
        ])),
        2
    );

    // Output path occupied by a file: an I/O error.
    fs::write(w.path("file"), "x").unwrap();
    assert_eq!(code(&w.cmd("file", &["gen"])), 1);
    assert_eq!(code(&run(&["--config", s(&w.path("nope.toml")), "gen"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn smoke_pipeline_finishes_quickly() {
    let start = Instant::now();
    let w = Workspace::new(&[]).prepared();
    let out = w.rounds("run", "dqo", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");
    assert!(
        stdout(&out).contains("loss 0.693147"),
        "progress lines stream step, loss and lr"
    );
    let m = manifest(&w.path("run"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["inputs"].as_object().unwrap().len(), 5);
}

#[test]
fn dqo_and_raft_differ_only_in_the_update() {
    let w = Workspace::new(&[("rounds", "5")]).prepared();
    for (out, sub) in [("dqo", "dqo"), ("raft", "raft")] {
        let o = w.rounds(out, sub, &[]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    // Same plan snapshot, same inputs, different mode in the round log.
    let (a, b) = (manifest(&w.path("dqo")), manifest(&w.path("raft")));
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["inputs"], b["inputs"]);
    let first = |d: &str| fs::read_to_string(w.path(d).join("rounds.jsonl")).unwrap();
    assert!(first("dqo").contains("\"dpo\"") && first("raft").contains("\"sft\""));

    let o = w.ok(
        "report",
        &[
            "report",
            "--run",
            s(&w.path("dqo")),
            "--run",
            s(&w.path("raft")),
        ],
    );
    assert!(o.contains("dev_qe_t: 2 series"), "{o}");
    let csv = fs::read_to_string(w.path("report/series.csv")).unwrap();
    for run in ["dqo", "raft"] {
        let rounds: Vec<&str> = csv
            .lines()
            .filter(|l| l.contains(&format!("{run},")) && l.contains(",dev_qe_t,"))
            .collect();
        assert_eq!(rounds.len(), 6, "{run}: round 0 plus five rounds");
    }
    let svg = fs::read_to_string(w.path("report/dev_qe_t.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    // Same inputs, same bytes.
    w.ok(
        "report2",
        &[
            "report",
            "--run",
            s(&w.path("dqo")),
            "--run",
            s(&w.path("raft")),
        ],
    );
    for f in ["series.csv", "dev_qe_t.svg"] {
        assert_eq!(
            fs::read(w.path("report").join(f)).unwrap(),
            fs::read(w.path("report2").join(f)).unwrap()
        );
    }

    fs::create_dir(w.path("empty")).unwrap();
    fs::write(w.path("empty/rounds.jsonl"), "").unwrap();
    assert_eq!(
        code(&w.cmd("r3", &["report", "--run", s(&w.path("empty"))])),
        2
    );
}

#[test]
fn eval_compare_ideal_and_unknown_metric() {
    let w = Workspace::new(&[]).prepared();
    let (corpus, base) = (w.path("corpus"), w.path("base/baseline.ckpt"));
    w.ok(
        "ev",
        &[
            "eval",
            "--corpus",
            s(&corpus),
            "--checkpoint",
            s(&base),
            "--compare",
            s(&base),
        ],
    );
    let compare = fs::read_to_string(w.path("ev/compare.csv")).unwrap();
    let mut rows = 0;
    for line in compare.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[4].parse::<f64>().unwrap(), 0.0, "{line}");
        assert_eq!(cols[5].parse::<f64>().unwrap(), 1.0, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 8 * 3);
    assert!(w.path("ev/metrics.jsonl").exists());

    let out = w.ok(
        "ideal",
        &[
            "eval",
            "--corpus",
            s(&corpus),
            "--ideal",
            "--metrics",
            "bleu",
        ],
    );
    let groups: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(groups.len(), 5, "{out}");
    for g in groups {
        assert_eq!(
            g.rsplit(',').next().unwrap().parse::<f64>().unwrap(),
            100.0,
            "{g}"
        );
    }

    let o = w.cmd(
        "bad",
        &[
            "eval",
            "--corpus",
            s(&corpus),
            "--ideal",
            "--metrics",
            "bleurt",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn training_abort_exits_3_and_marks_the_manifest() {
    let w = Workspace::new(&[
        ("rounds", "2"),
        ("learning_rate", "1e300"),
        ("warmup_steps", "0"),
    ])
    .prepared();
    let o = w.rounds("boom", "dqo", &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let m = manifest(&w.path("boom"));
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("round"));
}

#[test]
fn interrupted_run_resumes_to_the_same_result() {
    let w = Workspace::new(&[("rounds", "3")]).prepared();
    assert_eq!(code(&w.rounds("full", "dqo", &[])), 0);
    let o = w.rounds("part", "dqo", &["--stop-after-round", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(w.path("part/round-1/policy.ckpt").exists());
    assert!(!w.path("part/round-2").exists());

    let o = w.rounds("part", "dqo", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stdout(&o).contains("resumed after round 1"),
        "{}",
        stdout(&o)
    );
    for f in ["round-3/policy.ckpt", "rounds.jsonl"] {
        assert_eq!(
            fs::read(w.path("full").join(f)).unwrap(),
            fs::read(w.path("part").join(f)).unwrap(),
            "{f}"
        );
    }
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn qe_serve_answers_the_wire_protocol() {
    let w = Workspace::new(&[]);
    w.ok("corpus", &["gen"]);
    let corpus = w.path("corpus");
    let mut child = Child(
        bin()
            .args(["qe-serve", "--corpus", s(&corpus), "--port", "0"])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(child.0.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .expect("address line")
        .to_string();

    let registry = LanguageRegistry::load(&corpus.join("languages.json")).unwrap();
    let splits = Splits::load(&corpus).unwrap();
    let items: Vec<QeItem> = splits.test.records[..3]
        .iter()
        .map(|r| QeItem {
            lang: r.lang.clone(),
            source: r.source.clone(),
            hyp: r.target.clone(),
        })
        .collect();
    let remote = RemoteScorer::new(RemoteConfig {
        url: url.clone(),
        ..Default::default()
    })
    .unwrap();
    let got = remote.score_batch(&items).unwrap();
    assert_eq!(got.len(), 3);
    assert_eq!(
        got,
        OracleScorer::new(registry).score_batch(&items).unwrap()
    );

    let resp = reqwest::blocking::Client::new()
        .post(format!("{url}/v1/score"))
        .body("{oops")
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 400);

    // The port is now taken: a second server cannot bind.
    let port = url.rsplit(':').next().unwrap();
    let o = run(&["qe-serve", "--corpus", s(&corpus), "--port", port]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
