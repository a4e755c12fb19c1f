//! TREC run and qrels files, nDCG@k and Recall@k.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ranking::ScoredDoc;

pub const DEFAULT_NDCG_DEPTH: usize = 20;
pub const DEFAULT_RECALL_DEPTH: usize = 1000;

/// One line of a TREC run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub topic_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub run_tag: String,
}

/// Graded judgments keyed by topic, then document.
pub type Qrels = BTreeMap<String, BTreeMap<String, u32>>;

/// Builds run entries for one topic from a ranked list.
pub fn run_entries(topic_id: &str, ranked: &[ScoredDoc], run_tag: &str) -> Vec<RunEntry> {
    ranked
        .iter()
        .enumerate()
        .map(|(i, d)| RunEntry {
            topic_id: topic_id.to_string(),
            doc_id: d.id.clone(),
            rank: i + 1,
            score: d.score,
            run_tag: run_tag.to_string(),
        })
        .collect()
}

fn check_field(name: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.chars().any(char::is_whitespace) {
        return Err(Error::Validation(format!("{name} `{value}` must be non-empty without whitespace")));
    }
    Ok(())
}

/// Checks that every topic's entries are contiguous, ranked 1..n, and
/// have non-increasing finite scores.
pub fn validate_run(entries: &[RunEntry]) -> Result<()> {
    let mut finished: HashSet<&str> = HashSet::new();
    let mut seen_docs: HashSet<&str> = HashSet::new();
    let mut prev: Option<&RunEntry> = None;
    for e in entries {
        check_field("topic id", &e.topic_id)?;
        check_field("doc id", &e.doc_id)?;
        check_field("run tag", &e.run_tag)?;
        if !e.score.is_finite() {
            return Err(Error::Validation(format!("topic {}: non-finite score", e.topic_id)));
        }
        let continuing = prev.is_some_and(|p| p.topic_id == e.topic_id);
        if continuing {
            let p = prev.expect("checked above");
            if e.rank != p.rank + 1 {
                return Err(Error::Validation(format!(
                    "topic {}: rank {} follows rank {}",
                    e.topic_id, e.rank, p.rank
                )));
            }
            if e.score > p.score {
                return Err(Error::Validation(format!(
                    "topic {}: score increases at rank {}",
                    e.topic_id, e.rank
                )));
            }
        } else {
            if let Some(p) = prev {
                finished.insert(p.topic_id.as_str());
            }
            if finished.contains(e.topic_id.as_str()) {
                return Err(Error::Validation(format!("topic {} is not contiguous", e.topic_id)));
            }
            if e.rank != 1 {
                return Err(Error::Validation(format!(
                    "topic {}: first rank is {}",
                    e.topic_id, e.rank
                )));
            }
            seen_docs.clear();
        }
        if !seen_docs.insert(e.doc_id.as_str()) {
            return Err(Error::Validation(format!(
                "topic {}: document {} ranked twice",
                e.topic_id, e.doc_id
            )));
        }
        prev = Some(e);
    }
    Ok(())
}

pub fn format_run_line(e: &RunEntry) -> String {
    format!("{} Q0 {} {} {} {}", e.topic_id, e.doc_id, e.rank, e.score, e.run_tag)
}

pub fn format_run(entries: &[RunEntry]) -> Result<String> {
    validate_run(entries)?;
    let mut out = String::new();
    for e in entries {
        out.push_str(&format_run_line(e));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_run(path: &Path, entries: &[RunEntry]) -> Result<()> {
    let text = format_run(entries)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_run(text: &str, path: &Path) -> Result<Vec<RunEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(path, i + 1, format!("expected 6 fields, found {}", fields.len())));
        }
        let rank = fields[3]
            .parse::<usize>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad rank `{}`: {e}", fields[3])))?;
        let score = fields[4]
            .parse::<f64>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad score `{}`: {e}", fields[4])))?;
        out.push(RunEntry {
            topic_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            rank,
            score,
            run_tag: fields[5].to_string(),
        });
    }
    validate_run(&out)?;
    Ok(out)
}

pub fn read_run(path: &Path) -> Result<Vec<RunEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, path)
}

/// Groups a run by topic, keeping rank order.
pub fn run_by_topic(entries: &[RunEntry]) -> BTreeMap<String, Vec<ScoredDoc>> {
    let mut out: BTreeMap<String, Vec<ScoredDoc>> = BTreeMap::new();
    for e in entries {
        out.entry(e.topic_id.clone())
            .or_default()
            .push(ScoredDoc::new(e.doc_id.clone(), e.score));
    }
    out
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Qrels::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, i + 1, format!("expected 4 fields, found {}", fields.len())));
        }
        let grade = fields[3]
            .parse::<i64>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad grade `{}`: {e}", fields[3])))?;
        let grade = u32::try_from(grade)
            .map_err(|_| Error::parse(path, i + 1, format!("grade {grade} is negative or too large")))?;
        out.entry(fields[0].to_string())
            .or_default()
            .insert(fields[2].to_string(), grade);
    }
    Ok(out)
}

pub fn write_qrels(path: &Path, qrels: &Qrels) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (topic, docs) in qrels {
        for (doc, grade) in docs {
            writeln!(w, "{topic} 0 {doc} {grade}").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_depth(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("cutoff depth must be at least 1".into()));
    }
    Ok(())
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// nDCG@k with exponential gain. `None` when the topic has no relevant
/// document. Unjudged documents have grade 0.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], judgments: &BTreeMap<String, u32>, k: usize) -> Result<Option<f64>> {
    check_depth(k)?;
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return Ok(None);
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i + 1))
        .sum();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(judgments.get(d.as_ref()).copied().unwrap_or(0)) / discount(i + 1))
        .sum();
    Ok(Some(dcg / idcg))
}

/// Fraction of relevant documents (grade > 0) in the top `k`. `None` when
/// the topic has no relevant document.
pub fn recall_at_k<S: AsRef<str>>(ranking: &[S], judgments: &BTreeMap<String, u32>, k: usize) -> Result<Option<f64>> {
    check_depth(k)?;
    let relevant = judgments.values().filter(|&&g| g > 0).count();
    if relevant == 0 {
        return Ok(None);
    }
    let found = ranking
        .iter()
        .take(k)
        .filter(|d| judgments.get(d.as_ref()).is_some_and(|&g| g > 0))
        .count();
    Ok(Some(found as f64 / relevant as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicMetrics {
    pub topic_id: String,
    pub ndcg: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ndcg_depth: usize,
    pub recall_depth: usize,
    pub topics: Vec<TopicMetrics>,
    pub mean_ndcg: f64,
    pub mean_recall: f64,
    /// Run topics absent from the qrels.
    pub unjudged_topics: Vec<String>,
    /// Judged topics without any relevant document.
    pub topics_without_relevant: Vec<String>,
}

impl EvalReport {
    /// Tab-separated per-topic lines followed by an `all` line.
    pub fn to_table(&self) -> String {
        let mut out = format!("topic\tndcg@{}\trecall@{}\n", self.ndcg_depth, self.recall_depth);
        for t in &self.topics {
            out.push_str(&format!("{}\t{:.4}\t{:.4}\n", t.topic_id, t.ndcg, t.recall));
        }
        out.push_str(&format!("all\t{:.4}\t{:.4}\n", self.mean_ndcg, self.mean_recall));
        for t in &self.unjudged_topics {
            out.push_str(&format!("# unjudged topic {t}\n"));
        }
        out
    }
}

/// Scores a run against qrels. Topics judged but missing from the run are
/// not counted; the run is the sole source of evaluated topics.
pub fn evaluate_entries(entries: &[RunEntry], qrels: &Qrels, ndcg_depth: usize, recall_depth: usize) -> Result<EvalReport> {
    check_depth(ndcg_depth)?;
    check_depth(recall_depth)?;
    let by_topic = run_by_topic(entries);
    let mut topics = Vec::new();
    let mut unjudged = Vec::new();
    let mut without_relevant = BTreeSet::new();
    for (topic, ranked) in &by_topic {
        let Some(judgments) = qrels.get(topic) else {
            unjudged.push(topic.clone());
            continue;
        };
        let ids: Vec<&str> = ranked.iter().map(|d| d.id.as_str()).collect();
        match (
            ndcg_at_k(&ids, judgments, ndcg_depth)?,
            recall_at_k(&ids, judgments, recall_depth)?,
        ) {
            (Some(ndcg), Some(recall)) => topics.push(TopicMetrics { topic_id: topic.clone(), ndcg, recall }),
            _ => {
                without_relevant.insert(topic.clone());
            }
        }
    }
    let n = topics.len() as f64;
    let (mean_ndcg, mean_recall) = if topics.is_empty() {
        (0.0, 0.0)
    } else {
        (
            topics.iter().map(|t| t.ndcg).sum::<f64>() / n,
            topics.iter().map(|t| t.recall).sum::<f64>() / n,
        )
    };
    Ok(EvalReport {
        ndcg_depth,
        recall_depth,
        topics,
        mean_ndcg,
        mean_recall,
        unjudged_topics: unjudged,
        topics_without_relevant: without_relevant.into_iter().collect(),
    })
}

pub fn evaluate(run_path: &Path, qrels_path: &Path) -> Result<EvalReport> {
    let run = read_run(run_path)?;
    let qrels = read_qrels(qrels_path)?;
    evaluate_entries(&run, &qrels, DEFAULT_NDCG_DEPTH, DEFAULT_RECALL_DEPTH)
}
