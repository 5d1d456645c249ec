use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crossling::embedding::save_text_embeddings;
use crossling::lexicon::save_lexicon;
use crossling::synthetic::{rotated_pair, SyntheticConfig};

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let fx = rotated_pair(&SyntheticConfig {
            words: 200,
            dim: 8,
            noise: 0.01,
            ..Default::default()
        })
        .unwrap();
        save_text_embeddings(&fx.src, &root.join("src.vec")).unwrap();
        save_text_embeddings(&fx.tgt, &root.join("tgt.vec")).unwrap();
        save_lexicon(&fx.lexicon, &root.join("full.dict")).unwrap();
        fs::write(
            root.join("base.toml"),
            format!(
                "[embeddings]\nsource = {:?}\ntarget = {:?}\nsource_lang = \"en\"\ntarget_lang = \"de\"\n",
                root.join("src.vec").display().to_string(),
                root.join("tgt.vec").display().to_string()
            ),
        )
        .unwrap();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_crossling")).args(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn fails(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(!out.status.success(), "{args:?} should fail");
        String::from_utf8(out.stderr).unwrap()
    }

    fn split(&self) {
        self.ok(&["dict-split", "--lexicon", s(&self.path("full.dict")), "--sizes", "20,100", "--test-size", "50", "--output", s(&self.path("dicts"))]);
    }

    fn align(&self, method: &str, out: &str, extra: &[&str]) -> String {
        let config = self.path("base.toml");
        let train = format!("dictionary.train={:?}", s(&self.path("dicts/train_100.txt")));
        let output = self.path(out);
        let mut args = vec!["align", "--config", s(&config), "--method", method, "--output", s(&output), "--set", &train];
        args.extend_from_slice(extra);
        self.ok(&args)
    }

    fn eval(&self, projection: &str, out: &str) -> String {
        let config = self.path("base.toml");
        self.ok(&["eval-bli", "--config", s(&config), "--projection", s(&self.path(projection)), "--test", s(&self.path("dicts/test.txt")), "--output", s(&self.path(out))])
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn align_evaluate_and_tabulate() {
    let fx = Fixture::new();
    fx.split();
    assert_eq!(fs::read_to_string(fx.path("dicts/test.txt")).unwrap().lines().count(), 50);

    let line = fx.align("proc", "proc", &[]);
    assert!(line.contains("orthogonal=true"), "{line}");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(fx.path("proc/metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["orthogonal"], true);
    assert!(fx.path("proc/timing.json").exists());

    let line = fx.eval("proc", "proc-eval");
    assert!(line.starts_with("MAP 1.0000"), "{line}");
    assert!(line.contains("successful=true"), "{line}");
    let table = fx.ok(&["table", s(&fx.path("proc-eval/summary.json"))]);
    assert!(table.contains("1/1"), "{table}");
    assert!(table.contains("proc"), "{table}");
}

#[test]
fn compare_a_report_with_itself() {
    let fx = Fixture::new();
    fx.split();
    fx.align("proc", "proc", &[]);
    fx.eval("proc", "eval");
    let report = fx.path("eval/report.tsv");
    let out = fx.ok(&["compare", s(&report), s(&report), "--alpha", "0.05", "--comparisons", "5"]);
    assert!(out.contains("threshold: 0.01"), "{out}");
    assert!(out.trim_end().ends_with("p = 1.000000: not significant"), "{out}");
}

#[test]
fn compare_rejects_different_query_sets() {
    let fx = Fixture::new();
    fx.split();
    fx.align("proc", "proc", &[]);
    fx.eval("proc", "eval");
    let full = fs::read_to_string(fx.path("eval/report.tsv")).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    fs::write(fx.path("short.tsv"), lines[..lines.len() - 1].join("\n") + "\n").unwrap();
    let err = fx.fails(&["compare", s(&fx.path("eval/report.tsv")), s(&fx.path("short.tsv"))]);
    assert!(err.contains("different query sets"), "{err}");
}

#[test]
fn stochastic_alignment_is_reproducible() {
    let fx = Fixture::new();
    fx.split();
    fx.align("vecmap", "a", &["--seed", "7"]);
    fx.align("vecmap", "b", &["--seed", "7"]);
    let read = |d: &str| fs::read(fx.path(d).join("metadata.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(fs::read(fx.path("a/W_src.txt")).unwrap(), fs::read(fx.path("b/W_src.txt")).unwrap());
}

#[test]
fn stochastic_alignment_needs_a_seed() {
    let fx = Fixture::new();
    let err = fx.fails(&["align", "--config", s(&fx.path("base.toml")), "--method", "vecmap", "--output", s(&fx.path("out"))]);
    assert!(err.contains("seed"), "{err}");
    assert!(!fx.path("out").exists());
}

#[test]
fn missing_inputs_are_named() {
    let fx = Fixture::new();
    let missing = fx.path("nowhere.vec");
    let set = format!("embeddings.source={:?}", s(&missing));
    let err = fx.fails(&["align", "--config", s(&fx.path("base.toml")), "--method", "gwa", "--set", &set, "--output", s(&fx.path("out"))]);
    assert!(err.contains("nowhere.vec"), "{err}");
}

#[test]
fn nonpositive_entropy_is_rejected() {
    let fx = Fixture::new();
    let err = fx.fails(&["align", "--config", s(&fx.path("base.toml")), "--method", "gwa", "--set", "gwa.lambda=0.0", "--output", s(&fx.path("out"))]);
    assert!(err.contains("lambda"), "{err}");
    assert!(!fx.path("out").exists());
}

#[test]
fn retrieval_writes_a_trec_run() {
    let fx = Fixture::new();
    fx.split();
    fx.align("proc", "proc", &[]);
    fs::write(fx.path("docs.tsv"), "d1\tt0 t1 t2\nd2\tt50 t51\nd3\tt100 t101, t102.\n").unwrap();
    fs::write(fx.path("queries.tsv"), "q1\ts0 s1\nq2\ts100 s102\n").unwrap();
    fs::write(fx.path("qrels.txt"), "q1 0 d1 1\nq2 0 d3 1\n").unwrap();
    let config = fx.path("base.toml");
    let out = fx.ok(&[
        "eval-clir", "--config", s(&config), "--projection", s(&fx.path("proc")), "--output", s(&fx.path("clir")),
        "--documents", s(&fx.path("docs.tsv")), "--queries", s(&fx.path("queries.tsv")), "--qrels", s(&fx.path("qrels.txt")),
    ]);
    assert!(out.starts_with("MAP 1.0000"), "{out}");
    let run = fs::read_to_string(fx.path("clir/run.trec")).unwrap();
    assert_eq!(run.lines().count(), 6);
    assert!(run.lines().all(|l| l.split_whitespace().nth(1) == Some("Q0")));
}

#[test]
fn preprocess_writes_unit_rows() {
    let fx = Fixture::new();
    let out = fx.path("unit.vec");
    fx.ok(&["preprocess", "--input", s(&fx.path("src.vec")), "--output", s(&out), "--steps", "unit", "--max-vocab", "10"]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 10);
    // vectors are written with 6 significant digits
    assert!(rows.iter().all(|r| (r.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-5));
}

#[test]
fn scrambled_supervision_is_unsuccessful() {
    let fx = Fixture::new();
    fx.split();
    // every source word paired with an unrelated target word
    let wrong: String = (0..100).map(|i| format!("s{i} t{}\n", (i * 7 + 53) % 200)).collect();
    fs::write(fx.path("wrong.dict"), wrong).unwrap();
    let set = format!("dictionary.train={:?}", s(&fx.path("wrong.dict")));
    fx.ok(&["align", "--config", s(&fx.path("base.toml")), "--method", "proc", "--set", &set, "--output", s(&fx.path("proc"))]);
    let line = fx.eval("proc", "eval");
    assert!(line.contains("successful=false"), "{line}");

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(fx.path("eval/summary.json")).unwrap()).unwrap();
    let rows = fs::read_to_string(fx.path("eval/report.tsv")).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(summary["queries"].as_u64(), Some(rows as u64));
    assert_eq!(rows, 50);
}
