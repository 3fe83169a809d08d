use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

const TINY: &str = "\
# small enough to train in about a second
labeled_docs = 3
unlabeled_docs = 6
dev_docs = 2
shape.hidden = 16
shape.layers = 1
shape.heads = 2
shape.ff = 24
extractor_train.epochs = 1
qgen_train.epochs = 1
qa_train.epochs = 1
staged.pretrain.epochs = 1
staged.finetune.epochs = 1
curve_sizes = 0,8,16
";

// Trained enough that the roundtrip filter keeps something.
const MID: &str = "\
labeled_docs = 10
unlabeled_docs = 40
dev_docs = 2
shape.hidden = 32
shape.layers = 1
shape.heads = 2
shape.ff = 48
extractor_train.epochs = 8
qgen_train.epochs = 25
qa_train.epochs = 25
staged.pretrain.epochs = 1
staged.finetune.epochs = 2
pipeline.negatives_ratio = 0.25
";

fn rtqa(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_rtqa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rtqa(dir, args);
    assert!(out.status.success(), "rtqa {args:?} failed");
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn workdir(cfg: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    dir
}

/// A world plus the three trained models under the mid config, shared by
/// the tests that need a working pipeline.
fn trained() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = workdir(MID);
        let p = dir.path();
        ok(p, &["--config", "run.cfg", "toyworld", "--out", "world"]);
        for task in ["answer-extraction", "qgen", "qa"] {
            ok(p, &["--config", "run.cfg", "train", "--task", task, "--data", "world", "--out", "models"]);
        }
        dir
    })
    .path()
}

#[test]
fn toyworld_outputs_are_reproducible() {
    let dir = workdir(TINY);
    let p = dir.path();
    let digests = |out: &str, seed: &str| {
        ok(p, &["--config", "run.cfg", "--seed", seed, "toyworld", "--out", out]);
        json(p.join(out).join("manifest.toyworld.json"))["outputs"].clone()
    };
    let a = digests("a", "4");
    assert_eq!(a, digests("b", "4"));
    assert_ne!(a, digests("c", "5"));
    assert_eq!(a.as_object().unwrap().len(), 2);
    assert_eq!(fs::read(p.join("a/corpus.jsonl")).unwrap(), fs::read(p.join("b/corpus.jsonl")).unwrap());
}

#[test]
fn configuration_errors_exit_with_usage_code_before_running() {
    let dir = workdir(TINY);
    let p = dir.path();
    assert_eq!(code(&rtqa(p, &["--set", "labeled_docs=0", "toyworld", "--out", "w"])), 2);
    assert_eq!(code(&rtqa(p, &["--set", "qa_train.epoch=3", "toyworld", "--out", "w"])), 2);
    assert_eq!(code(&rtqa(p, &["--match-mode", "fuzzy", "toyworld", "--out", "w"])), 2);
    assert_eq!(code(&rtqa(p, &["--sizes", "16,8", "toyworld", "--out", "w"])), 2);
    fs::write(p.join("bad.cfg"), "labeled_docs = 3\nshape.hiden = 8\n").unwrap();
    assert_eq!(code(&rtqa(p, &["--config", "bad.cfg", "toyworld", "--out", "w"])), 2);
    assert!(!p.join("w").exists(), "nothing may be written on a usage error");
    assert_eq!(code(&rtqa(p, &["toyworld", "--bogus"])), 2);

    let shown = ok(p, &["--config", "run.cfg", "--set", "qgen.mode=seq2seq", "show-config"]);
    assert!(shown.contains("qgen.mode = seq2seq\n"));
    assert!(shown.contains("labeled_docs = 3\n"));
}

#[test]
fn decoding_method_options_are_settable() {
    let dir = workdir(TINY);
    let shown = ok(
        dir.path(),
        &["--set", "pipeline.decoding.method=beam", "--set", "pipeline.decoding.width=4", "show-config"],
    );
    assert!(shown.contains("pipeline.decoding.width = 4\n"), "{shown}");
    let bad = rtqa(dir.path(), &["--set", "pipeline.decoding.method=beam", "show-config"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn missing_or_incompatible_inputs_exit_with_data_code() {
    let dir = workdir(TINY);
    let p = dir.path();
    let out = rtqa(p, &["--config", "run.cfg", "train", "--task", "qa", "--data", "nowhere", "--out", "m"]);
    assert_eq!(code(&out), 3);

    ok(p, &["--config", "run.cfg", "toyworld", "--out", "w"]);
    ok(p, &["--config", "run.cfg", "train", "--task", "qa", "--data", "w", "--out", "m"]);
    // A larger vocabulary still loads the corpus but cannot feed the model.
    fs::create_dir(p.join("w2")).unwrap();
    fs::copy(p.join("w/corpus.jsonl"), p.join("w2/corpus.jsonl")).unwrap();
    let vocab = fs::read_to_string(p.join("w/vocab.txt")).unwrap();
    fs::write(p.join("w2/vocab.txt"), vocab + "zyzzyva\n").unwrap();
    let out = rtqa(p, &["--config", "run.cfg", "eval", "--model", "m/qa.ckpt.json", "--data", "w2", "--out", "e"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary"));

    // A checkpoint of another kind is rejected too.
    ok(p, &["--config", "run.cfg", "train", "--task", "qgen", "--data", "w", "--out", "m"]);
    let out = rtqa(p, &["--config", "run.cfg", "eval", "--model", "m/qgen.ckpt.json", "--data", "w", "--out", "e"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn training_writes_checkpoints_and_resumes_the_step_counter() {
    let dir = workdir(TINY);
    let p = dir.path();
    ok(p, &["--config", "run.cfg", "toyworld", "--out", "w"]);
    for task in ["answer-extraction", "qgen", "qa"] {
        ok(p, &["--config", "run.cfg", "train", "--task", task, "--data", "w", "--out", "m"]);
        assert!(p.join(format!("m/{task}.ckpt.json")).is_file());
        let losses = fs::read_to_string(p.join(format!("m/{task}.losses.csv"))).unwrap();
        assert!(losses.starts_with("step,loss\n1,"));
    }
    let m = json(p.join("m/manifest.train.json"));
    assert_eq!(m["command"], "train");
    assert_eq!(m["config"]["labeled_docs"], 3);
    assert!(m["inputs"]["corpus.jsonl"].is_string());
    assert!(m["outputs"]["qa.ckpt.json"].is_string());

    let first = json(p.join("m/qa.ckpt.json"))["step"].as_u64().unwrap();
    assert!(first > 0);
    ok(p, &["--config", "run.cfg", "train", "--task", "qa", "--data", "w", "--out", "r", "--resume", "m/qa.ckpt.json"]);
    assert_eq!(json(p.join("r/qa.ckpt.json"))["step"].as_u64().unwrap(), 2 * first);
    let losses = fs::read_to_string(p.join("r/qa.losses.csv")).unwrap();
    assert!(losses.lines().nth(1).unwrap().starts_with(&format!("{},", first + 1)));

    // Retraining from scratch reproduces the checkpoint byte for byte.
    ok(p, &["--config", "run.cfg", "train", "--task", "qa", "--data", "w", "--out", "again"]);
    assert_eq!(fs::read(p.join("m/qa.ckpt.json")).unwrap(), fs::read(p.join("again/qa.ckpt.json")).unwrap());
}

fn synth(out: &str, extra: &[&str]) -> (Value, Vec<Value>) {
    let p = trained();
    let mut args = vec!["--config", "run.cfg", "synth", "--models", "models", "--data", "world", "--out", out];
    args.extend_from_slice(extra);
    ok(p, &args);
    let records = fs::read_to_string(p.join(out).join("synthetic.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (json(p.join(out).join("synthetic.summary.json")), records)
}

#[test]
fn synth_summary_counts_match_the_records() {
    let (summary, records) = synth("syn", &[]);
    let n = |k: &str| summary[k].as_u64().unwrap() as usize;
    let count = |f: &dyn Fn(&Value) -> bool| records.iter().filter(|r| f(r)).count();
    assert_eq!(n("attempted"), n("kept") + n("discarded") + n("skipped"));
    assert!(n("kept") > 0, "{summary}");
    assert_eq!(count(&|r| r["label"] == "positive" && r["kept"] == true), n("kept"));
    assert_eq!(count(&|r| r["label"] == "positive" && r["kept"] == false), n("discarded"));
    assert_eq!(count(&|r| r["label"] == "negative"), n("negatives"));
    assert_eq!(records.len(), n("kept") + n("discarded") + n("negatives"));
    assert!(n("negatives") > 0);
    let filter = json(trained().join("syn/filter.json"));
    assert_eq!(filter["kept"].as_u64().unwrap() as usize, n("kept"));

    let (again, _) = synth("syn-again", &[]);
    assert_eq!(summary, again);
    let bytes = |d: &str| fs::read(trained().join(d).join("synthetic.jsonl")).unwrap();
    assert_eq!(bytes("syn"), bytes("syn-again"));
}

#[test]
fn match_mode_flag_reaches_the_filter() {
    let (text, text_records) = synth("text", &["--match-mode", "text-normalized"]);
    let (exact, records) = synth("exact", &["--match-mode", "span-exact"]);
    assert!(text_records.iter().all(|r| r["match_mode"] == "text-normalized"));
    assert!(records.iter().all(|r| r["match_mode"] == "span-exact"));
    for r in records.iter().filter(|r| r["label"] == "positive" && r["kept"] == true) {
        assert_eq!(r["answer_start"], r["reanswer_start"]);
        assert_eq!(r["answer_end"], r["reanswer_end"]);
    }
    assert!(exact["kept"].as_u64() <= text["kept"].as_u64());
    assert_eq!(exact["attempted"], text["attempted"]);

    let (fewer, _) = synth("k1", &["--k-top", "1"]);
    assert_eq!(fewer["attempted"], text["attempted"]);
}

#[test]
fn pretrain_finetune_routes_on_lambda() {
    let p = trained();
    ok(p, &["--config", "run.cfg", "synth", "--models", "models", "--data", "world", "--out", "pf-syn"]);
    let base = ["--config", "run.cfg", "pretrain-finetune", "--synthetic", "pf-syn/synthetic.jsonl", "--data", "world"];
    let run = |out: &str, extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(&["--out", out]);
        a.extend_from_slice(extra);
        rtqa(p, &a)
    };
    assert!(run("staged", &[]).status.success());
    let staged = json(p.join("staged/report.json"));
    assert_eq!(staged["objective"], "staged");
    assert_eq!(staged["arm"], "rt");
    assert!(p.join("staged/qa.staged.ckpt.json").is_file());
    let metrics = fs::read_to_string(p.join("staged/metrics.csv")).unwrap();
    assert!(metrics.starts_with("arm,size,seed,em,f1,beta,wall_s\nrt,"));

    assert!(run("combined", &["--lambda", "0.5", "--arms", "no-rt"]).status.success());
    let report = json(p.join("combined/report.json"));
    assert_eq!(report["objective"], "combined");
    assert_eq!(report["arm"], "no-rt");

    // The margin shape cannot be trained with.
    let out = run("margin", &["--lambda", "0.5", "--beta-variant", "margin"]);
    assert_eq!(code(&out), 2);

    let out = rtqa(p, &["--config", "run.cfg", "eval", "--model", "staged/qa.staged.ckpt.json", "--data", "world", "--out", "ev"]);
    assert!(out.status.success());
    assert_eq!(json(p.join("ev/eval.json"))["em"], staged["em"]);
}

#[test]
fn curve_covers_sizes_arms_and_seeds() {
    let dir = workdir(TINY);
    let p = dir.path();
    ok(p, &["--config", "run.cfg", "curve", "--out", "c"]);
    let rows: Vec<Vec<String>> = fs::read_to_string(p.join("c/curve.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 18);
    let keys: Vec<(String, String, String)> = rows.iter().map(|r| (r[1].clone(), r[0].clone(), r[2].clone())).collect();
    let mut expected = Vec::new();
    for size in ["0", "8", "16"] {
        for arm in ["rt", "no-rt"] {
            for seed in ["1", "2", "3"] {
                expected.push((size.to_string(), arm.to_string(), seed.to_string()));
            }
        }
    }
    assert_eq!(keys, expected);
    // Both arms share the labeled-only baseline.
    for seed in 0..3 {
        assert_eq!(rows[seed][3], rows[3 + seed][3]);
    }
    let summary = json(p.join("c/curve.summary.json"));
    assert_eq!(summary["points"].as_array().unwrap().len(), 6);
    assert_eq!(summary["filter"].as_object().unwrap().len(), 3);

    ok(p, &["--config", "run.cfg", "curve", "--out", "d"]);
    assert_eq!(fs::read(p.join("c/curve.csv")).unwrap(), fs::read(p.join("d/curve.csv")).unwrap());
    assert_eq!(
        json(p.join("c/manifest.curve.json"))["outputs"],
        json(p.join("d/manifest.curve.json"))["outputs"]
    );

    let one = rtqa(p, &["--config", "run.cfg", "--arms", "rt", "--sizes", "0,4", "--set", "curve_seeds=7", "curve", "--out", "e"]);
    assert!(one.status.success());
    assert_eq!(fs::read_to_string(p.join("e/curve.csv")).unwrap().lines().count(), 3);
}

#[test]
fn curve_on_a_generated_dataset() {
    let p = trained();
    ok(p, &["--config", "run.cfg", "synth", "--models", "models", "--data", "world", "--out", "cs"]);
    ok(
        p,
        &[
            "--config", "run.cfg", "--sizes", "0,4", "--set", "curve_seeds=1,2", "curve", "--synthetic",
            "cs/synthetic.jsonl", "--data", "world", "--out", "cc",
        ],
    );
    let text = fs::read_to_string(p.join("cc/curve.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
    let m = json(p.join("cc/manifest.curve.json"));
    assert!(m["inputs"]["synthetic.jsonl"].is_string());
}
