//! Drives the `xlir` binary through the bundled synthetic pipeline.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const LANGS: [&str; 3] = ["fas", "rus", "zho"];
pub const SEED: &str = "13";

/// Files compared against the golden copies.
pub const GOLDEN_FILES: [&str; 8] = [
    "plan.json",
    "run.psq.fas",
    "run.psq.rus",
    "run.psq.zho",
    "run.psq.fused",
    "run.plaid",
    "run.plaid.date",
    "distill.jsonl",
];

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn data_dir() -> PathBuf {
    repo_root().join("data/synthetic")
}

pub fn golden_dir() -> PathBuf {
    data_dir().join("golden")
}

pub fn xlir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlir"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("xlir binary runs")
}

fn step(args: &[&str]) -> Result<(), String> {
    let out = xlir(args);
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`xlir {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

/// Runs every pipeline stage into `out`, reading the bundled collection.
pub fn run_pipeline(out: &Path) -> Result<(), String> {
    let data = data_dir();
    let p = |name: &str| data.join(name).to_str().unwrap().to_string();
    let o = |name: &str| out.join(name).to_str().unwrap().to_string();
    let config = p("pipeline.toml");
    let base = ["--config", config.as_str(), "--seed", SEED, "--threads", "2"];
    let run = |rest: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(rest);
        step(&args)
    };

    run(&["shard-plan", "--collection", &p("docs.jsonl"), "--out", &o("plan.json")])?;
    for lang in LANGS {
        run(&[
            "psq-translate",
            "--collection",
            &p("docs.jsonl"),
            "--table",
            &p("psq.tsv"),
            "--lang",
            lang,
            "--out",
            &o(&format!("bags.{lang}.jsonl")),
        ])?;
        run(&[
            "index-lexical",
            "--bags",
            &o(&format!("bags.{lang}.jsonl")),
            "--shard-plan",
            &o("plan.json"),
            "--out",
            &o(&format!("lex.{lang}")),
        ])?;
        run(&[
            "search",
            "--index",
            &o(&format!("lex.{lang}")),
            "--topics",
            &p("topics.jsonl"),
            "--variant",
            "TD",
            "--scorer",
            "hmm",
            "--rm3",
            "--date-filter",
            "--k",
            "1000",
            "--tag",
            &format!("psq_hmm_rm3_{lang}"),
            "--out",
            &o(&format!("run.psq.{lang}")),
        ])?;
    }
    run(&[
        "fuse",
        &o("run.psq.fas"),
        &o("run.psq.rus"),
        &o("run.psq.zho"),
        "--k",
        "1000",
        "--tag",
        "psq_mlir",
        "--out",
        &o("run.psq.fused"),
    ])?;
    run(&["index-dense", "--embeddings", &p("passages.liemb"), "--out", &o("dense")])?;
    run(&[
        "search",
        "--index",
        &o("dense"),
        "--topics",
        &p("topics.jsonl"),
        "--queries",
        &p("queries.liemb"),
        "--tag",
        "plaid",
        "--out",
        &o("run.plaid"),
    ])?;
    run(&[
        "index-dense",
        "--embeddings",
        &p("passages.liemb"),
        "--shard-plan",
        &o("plan.json"),
        "--centroids",
        "64",
        "--out",
        &o("dense.date"),
    ])?;
    run(&[
        "search",
        "--index",
        &o("dense.date"),
        "--topics",
        &p("topics.jsonl"),
        "--queries",
        &p("queries.liemb"),
        "--date-filter",
        "--tag",
        "plaid_date",
        "--out",
        &o("run.plaid.date"),
    ])?;
    run(&[
        "mine-distill",
        "--index",
        &o("dense"),
        "--queries",
        &p("queries.liemb"),
        "--k",
        "50",
        "--out",
        &o("distill.jsonl"),
    ])?;
    for run_name in ["run.psq.fused", "run.plaid"] {
        run(&[
            "evaluate",
            "--run",
            &o(run_name),
            "--qrels",
            &p("qrels.txt"),
            "--out",
            &o(&format!("eval.{run_name}.json")),
        ])?;
    }
    Ok(())
}

/// Every file under `dir`, relative, sorted.
pub fn list_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
