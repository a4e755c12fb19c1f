//! Date-windowed shards, topic date filters, shard merging and
//! multilingual fusion.
//!
//! Lexical shards carry global collection statistics, so merging their
//! results reproduces the unsharded ranking. Dense shards train their own
//! codebooks and their scores are not guaranteed comparable across shards.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::{doc_id_of_passage, Document, Topic};
use crate::dense::{DenseIndex, DenseIndexParams, TokenEmbeddings};
use crate::error::{Error, Result};
use crate::lexical::{read_json, write_json, InvertedIndex};
use crate::psq::WeightedBag;
use crate::ranking::{top_k, ScoredDoc};

pub const DEFAULT_WINDOW_MONTHS: u32 = 3;

/// `[start, end)` in calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl ShardWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub window_months: u32,
    pub windows: Vec<ShardWindow>,
    /// doc id -> shard ordinal
    pub assignment: BTreeMap<String, usize>,
}

impl ShardPlan {
    pub fn num_shards(&self) -> usize {
        self.windows.len()
    }

    pub fn shard_of(&self, doc_id: &str) -> Option<usize> {
        self.assignment.get(doc_id).copied()
    }

    pub fn window_of(&self, date: NaiveDate) -> Option<usize> {
        self.windows.iter().position(|w| w.contains(date))
    }

    /// Document ids assigned to `shard`, ascending.
    pub fn docs_in(&self, shard: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &s)| s == shard)
            .map(|(d, _)| d.as_str())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let plan: Self = read_json(path)?;
        for w in plan.windows.windows(2) {
            if w[0].end != w[1].start {
                return Err(Error::Validation("shard windows are not contiguous".into()));
            }
        }
        if let Some((d, s)) = plan.assignment.iter().find(|(_, &s)| s >= plan.windows.len()) {
            return Err(Error::Validation(format!("`{d}` assigned to missing shard {s}")));
        }
        Ok(plan)
    }
}

fn month_start(d: NaiveDate) -> NaiveDate {
    NaiveDate::from_ymd_opt(d.year(), d.month(), 1).expect("first of month exists")
}

fn months_between(a: NaiveDate, b: NaiveDate) -> u32 {
    ((b.year() - a.year()) * 12 + b.month() as i32 - a.month() as i32) as u32
}

/// Partitions the collection's date span into calendar-aligned windows of
/// `window_months`, starting at the month of the earliest date. Undated
/// documents go to the last window.
pub fn plan_shards(docs: &[Document], window_months: u32) -> Result<ShardPlan> {
    if window_months == 0 {
        return Err(Error::InvalidArgument("window_months must be at least 1".into()));
    }
    let dates = docs.iter().filter_map(|d| d.date);
    let (Some(first), Some(last)) = (dates.clone().min(), dates.max()) else {
        return Err(Error::InvalidArgument("no dated documents to plan shards from".into()));
    };
    let origin = month_start(first);
    let count = months_between(origin, last) / window_months + 1;
    let windows: Vec<ShardWindow> = (0..count)
        .map(|i| ShardWindow {
            start: origin + Months::new(i * window_months),
            end: origin + Months::new((i + 1) * window_months),
        })
        .collect();
    let assignment = docs
        .iter()
        .map(|d| {
            let shard = match d.date {
                Some(date) => (months_between(origin, date) / window_months) as usize,
                None => windows.len() - 1,
            };
            (d.doc_id.clone(), shard)
        })
        .collect();
    Ok(ShardPlan {
        window_months,
        windows,
        assignment,
    })
}

/// Inclusive date range; a missing bound is open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateFilter {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl DateFilter {
    pub fn new(start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<Self> {
        if let (Some(s), Some(e)) = (start, end) {
            if s > e {
                return Err(Error::InvalidArgument(format!("filter start {s} after end {e}")));
            }
        }
        Ok(Self { start, end })
    }

    pub fn from_topic(topic: &Topic) -> Self {
        Self {
            start: topic.start_date,
            end: topic.end_date,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_none() && self.end.is_none()
    }
}

/// Shards whose window intersects the filter range, ascending.
pub fn select_shards(plan: &ShardPlan, filter: &DateFilter) -> Vec<usize> {
    plan.windows
        .iter()
        .enumerate()
        .filter(|(_, w)| filter.start.is_none_or(|s| s < w.end) && filter.end.is_none_or(|e| w.start <= e))
        .map(|(i, _)| i)
        .collect()
}

/// Concatenates per-shard rankings, keeps each document's best score and
/// returns the top `k`.
pub fn merge_shard_results(per_shard: Vec<Vec<ScoredDoc>>, k: usize) -> Vec<ScoredDoc> {
    let mut best: HashMap<String, f64> = HashMap::new();
    for doc in per_shard.into_iter().flatten() {
        best.entry(doc.id)
            .and_modify(|s| *s = s.max(doc.score))
            .or_insert(doc.score);
    }
    top_k(best.into_iter().map(|(id, s)| ScoredDoc::new(id, s)).collect(), k)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionNorm {
    /// Scores are merged as they are.
    #[default]
    Raw,
    /// Each run is rescaled to `[0, 1]` first.
    MinMax,
}

impl FromStr for FusionNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(FusionNorm::Raw),
            "minmax" | "min-max" => Ok(FusionNorm::MinMax),
            _ => Err(Error::InvalidArgument(format!("unknown fusion normalization `{s}`"))),
        }
    }
}

/// Merges per-language runs over disjoint subcollections into one ranking.
pub fn fuse_multilingual(runs: &[Vec<ScoredDoc>], k: usize, norm: FusionNorm) -> Result<Vec<ScoredDoc>> {
    let mut seen = HashSet::new();
    let mut all = Vec::with_capacity(runs.iter().map(Vec::len).sum());
    for run in runs {
        let (lo, hi) = run
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d.score), hi.max(d.score)));
        for d in run {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Validation(format!(
                    "document `{}` appears in more than one language run",
                    d.id
                )));
            }
            let score = match norm {
                FusionNorm::Raw => d.score,
                FusionNorm::MinMax if hi > lo => (d.score - lo) / (hi - lo),
                FusionNorm::MinMax => 1.0,
            };
            all.push(ScoredDoc::new(d.id.clone(), score));
        }
    }
    Ok(top_k(all, k))
}

/// One lexical index per shard, each scoring with statistics of the whole
/// collection.
pub fn build_lexical_shards(bags: Vec<(String, WeightedBag)>, plan: &ShardPlan) -> Result<Vec<InvertedIndex>> {
    let mut per_shard: Vec<Vec<(String, WeightedBag)>> = vec![Vec::new(); plan.num_shards()];
    for (id, bag) in &bags {
        let s = plan
            .shard_of(id)
            .ok_or_else(|| Error::Validation(format!("document `{id}` is not in the shard plan")))?;
        per_shard[s].push((id.clone(), bag.clone()));
    }
    let stats = InvertedIndex::build(bags)?.local_stats();
    per_shard
        .into_iter()
        .map(|docs| InvertedIndex::build_with_stats(docs, stats.clone()))
        .collect()
}

/// One dense index per shard with its own codebook.
pub fn build_dense_shards(
    embeddings: &TokenEmbeddings,
    plan: &ShardPlan,
    params: &DenseIndexParams,
) -> Result<Vec<DenseIndex>> {
    if let Some((key, _)) = embeddings.iter().find(|(k, _)| plan.shard_of(doc_id_of_passage(k)).is_none()) {
        return Err(Error::Validation(format!("passage `{key}` belongs to no planned document")));
    }
    (0..plan.num_shards())
        .map(|s| {
            let subset = embeddings.filter(|k| plan.shard_of(doc_id_of_passage(k)) == Some(s));
            DenseIndex::build(&subset, params)
        })
        .collect()
}
