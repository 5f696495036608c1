use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &[&str] = &[
    "--dim",
    "128",
    "--num-concepts",
    "40",
    "--train-per-class",
    "60",
    "--examples-per-concept",
    "40",
];

fn cce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cce")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = cce(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn world(dir: &Path) -> Value {
    let mut args = vec!["gen-scenario", "--seed", "3", "--out", s(dir)];
    args.extend_from_slice(SMALL);
    json(&ok(&args))
}

#[test]
fn scenario_files_feed_every_explainer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let summary = world(dir);
    for f in ["spec.json", "head.json", "bank.json", "train.emb", "ood.emb", "world.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(summary["ood_mistakes"].as_u64().unwrap() > 0, "{summary}");

    let (head, bank, mistakes) = (dir.join("head.json"), dir.join("bank.json"), dir.join("mistakes.emb"));
    let base = ["--head", s(&head), "--bank", s(&bank), "--embeddings", s(&mistakes), "--top-k", "5"];

    let reports = json(&ok(&[&["explain"][..], &base].concat()));
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len() as u64, summary["ood_mistakes"].as_u64().unwrap());
    let first = &reports[0];
    assert_eq!(first["top_k"].as_array().unwrap().len(), 5);
    assert!(first["loss_final"].as_f64().unwrap() <= first["loss_initial"].as_f64().unwrap());

    let one = json(&ok(&[&["explain", "--index", "0"][..], &base].concat()));
    assert_eq!(one[0]["top_k"], first["top_k"]);

    let batch = json(&ok(&[&["explain-batch"][..], &base].concat()));
    assert_eq!(batch["sample_id"], "batch");

    for (cmd, method) in [("baseline-css", "css"), ("baseline-univariate", "cce_univariate")] {
        let r = json(&ok(&[&[cmd][..], &base].concat()));
        assert_eq!(r[0]["method"], method);
        assert_eq!(r[0]["top_k"][0]["rank"], 1);
    }
}

#[test]
fn explain_writes_to_a_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    world(dir);
    let out = dir.join("r.json");
    let stdout = ok(&[
        "explain",
        "--head",
        s(&dir.join("head.json")),
        "--bank",
        s(&dir.join("bank.json")),
        "--embeddings",
        s(&dir.join("mistakes.emb")),
        "--index",
        "0",
        "--out",
        s(&out),
    ]);
    assert!(stdout.is_empty());
    assert_eq!(json(&fs::read(&out).unwrap()).as_array().unwrap().len(), 1);
}

#[test]
fn learn_bank_from_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    world(dir);
    // ood.emb rows all belong to one class; train.emb mixes classes
    fs::write(
        dir.join("concepts.json"),
        r#"[{"name": "ood_vs_train", "positives": "ood.emb", "negatives": "train.emb"}]"#,
    )
    .unwrap();
    let out = dir.join("learned.json");
    ok(&["learn-bank", "--concepts", s(&dir.join("concepts.json")), "--out", s(&out), "--threshold", "0.5"]);
    let bank = json(&fs::read(&out).unwrap());
    assert_eq!(bank["concepts"][0]["name"], "ood_vs_train");
    assert_eq!(bank["dim"], 128);
}

#[test]
fn suite_records_replay_to_the_same_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (summary, records, table) = (dir.join("summary.json"), dir.join("records.json"), dir.join("t.tsv"));
    let mut args = vec![
        "run-suite",
        "--scenarios",
        "2",
        "--methods",
        "cce,random",
        "--out",
        s(&summary),
        "--records",
        s(&records),
        "--table",
        s(&table),
    ];
    args.extend_from_slice(SMALL);
    ok(&args);
    let replay = dir.join("replay.json");
    let replay_table = dir.join("replay.tsv");
    ok(&["export-report", "--records", s(&records), "--out", s(&replay), "--table", s(&replay_table)]);
    assert_eq!(fs::read(&summary).unwrap(), fs::read(&replay).unwrap());
    assert_eq!(fs::read(&table).unwrap(), fs::read(&replay_table).unwrap());
    let v = json(&fs::read(&summary).unwrap());
    assert_eq!(v["methods"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_input_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    world(dir);
    let (head, bank, mistakes) = (dir.join("head.json"), dir.join("bank.json"), dir.join("mistakes.emb"));
    let base = ["--head", s(&head), "--bank", s(&bank), "--embeddings", s(&mistakes)];
    let cat = |h: &[&'static str]| -> Vec<&str> { h.iter().chain(base.iter()).copied().collect() };
    let cases: Vec<Vec<&str>> = vec![
        cat(&["explain", "--top-k", "0"]),
        cat(&["explain", "--index", "100000"]),
        cat(&["explain", "--alpha", "-1"]),
        vec!["explain", "--head", "/nonexistent/head.json", "--bank", "x", "--embeddings", "y"],
        vec!["run-suite", "--methods", "cce,nonsense"],
        vec!["gen-scenario", "--severity", "1.5", "--out", s(dir)],
        vec!["no-such-command"],
    ];
    for args in cases {
        let out = cce(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn numerical_failure_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    world(dir);
    // a head whose logits overflow
    let mut head = json(&fs::read(dir.join("head.json")).unwrap());
    for layer in head["layers"].as_array_mut().unwrap() {
        for w in layer["weights_row_major"].as_array_mut().unwrap() {
            *w = Value::from(w.as_f64().unwrap().signum() * 1e307);
        }
    }
    let huge = dir.join("huge.json");
    fs::write(&huge, serde_json::to_vec(&head).unwrap()).unwrap();
    let out = cce(&[
        "explain",
        "--head",
        s(&huge),
        "--bank",
        s(&dir.join("bank.json")),
        "--embeddings",
        s(&dir.join("mistakes.emb")),
        "--index",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
