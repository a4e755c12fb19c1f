mod common;

use std::path::Path;

use common::{data_dir, xlir};

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_collection_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out_file = tmp.path().join("plan.json");
    let out = xlir(&["shard-plan", "--collection", path(&tmp.path().join("nope.jsonl")), "--out", path(&out_file)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("does not exist"), "{}", stderr(&out));
    assert!(!out_file.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[dense]\nbitz = 2\n").unwrap();
    let out_file = tmp.path().join("plan.json");
    let docs = data_dir().join("docs.jsonl");
    let out = xlir(&["--config", path(&cfg), "shard-plan", "--collection", path(&docs), "--out", path(&out_file)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bitz"), "{}", stderr(&out));
    assert!(!out_file.exists());
}

#[test]
fn missing_output_directory_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let docs = data_dir().join("docs.jsonl");
    let out = xlir(&["shard-plan", "--collection", path(&docs), "--out", path(&tmp.path().join("a/b/plan.json"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("output directory"), "{}", stderr(&out));
}

#[test]
fn unknown_subcommand_and_bad_flag_values_exit_nonzero() {
    assert!(!xlir(&["frobnicate"]).status.success());
    let tmp = tempfile::tempdir().unwrap();
    let out = xlir(&[
        "search",
        "--index",
        path(tmp.path()),
        "--topics",
        path(&data_dir().join("topics.jsonl")),
        "--scorer",
        "tfidf",
        "--out",
        path(&tmp.path().join("run")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn index_lexical_needs_exactly_one_input() {
    let tmp = tempfile::tempdir().unwrap();
    let docs = data_dir().join("docs.jsonl");
    let out = xlir(&["index-lexical", "--out", path(&tmp.path().join("idx"))]);
    assert!(!out.status.success());
    let out = xlir(&[
        "index-lexical",
        "--collection",
        path(&docs),
        "--bags",
        path(&docs),
        "--out",
        path(&tmp.path().join("idx")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn malformed_run_fails_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    std::fs::write(&run, "201 Q0 d1 1 2.0\n").unwrap();
    let report = tmp.path().join("eval.json");
    let out = xlir(&[
        "evaluate",
        "--run",
        path(&run),
        "--qrels",
        path(&data_dir().join("qrels.txt")),
        "--out",
        path(&report),
    ]);
    assert!(!out.status.success());
    assert!(!report.exists());
}

#[test]
fn fusion_rejects_overlapping_languages() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    std::fs::write(&run, "201 Q0 d1 1 2.0 a\n201 Q0 d2 2 1.0 a\n").unwrap();
    let fused = tmp.path().join("fused");
    let out = xlir(&["fuse", path(&run), path(&run), "--out", path(&fused)]);
    assert!(!out.status.success());
    assert!(!fused.exists());
}

#[test]
fn dense_search_requires_query_embeddings() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir();
    let cfg = data.join("pipeline.toml");
    let index = tmp.path().join("dense");
    let built = xlir(&[
        "--config",
        path(&cfg),
        "index-dense",
        "--embeddings",
        path(&data.join("passages.liemb")),
        "--centroids",
        "32",
        "--out",
        path(&index),
    ]);
    assert!(built.status.success(), "{}", stderr(&built));
    let run = tmp.path().join("run");
    let out = xlir(&["search", "--index", path(&index), "--topics", path(&data.join("topics.jsonl")), "--out", path(&run)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--queries"), "{}", stderr(&out));
    assert!(!run.exists());

    let out = xlir(&[
        "search",
        "--index",
        path(&index),
        "--topics",
        path(&data.join("topics.jsonl")),
        "--queries",
        path(&data.join("queries.liemb")),
        "--date-filter",
        "--out",
        path(&run),
    ]);
    assert!(!out.status.success(), "date filter on an unsharded index must fail");
}

#[test]
fn evaluate_prints_table() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    std::fs::write(&run, "201 Q0 nothing 1 1.0 t\n").unwrap();
    let out = xlir(&["evaluate", "--run", path(&run), "--qrels", path(&data_dir().join("qrels.txt"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("all\t")), "{table}");
}
