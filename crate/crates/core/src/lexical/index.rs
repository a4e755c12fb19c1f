use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psq::WeightedBag;

const FORMAT_NAME: &str = "xlir-lexical";
const FORMAT_VERSION: u32 = 1;

/// Per-term collection statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    /// Number of documents containing the term.
    pub df: u32,
    /// Summed weight over the collection.
    pub cf: f64,
}

/// Collection-wide statistics used by the scorers.
///
/// A shard index carries the statistics of the whole collection so that its
/// scores are identical to those of the unsharded index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub num_docs: usize,
    pub total_weight: f64,
    pub terms: BTreeMap<String, TermStats>,
}

impl CollectionStats {
    pub fn avg_doc_length(&self) -> f64 {
        if self.num_docs == 0 {
            0.0
        } else {
            self.total_weight / self.num_docs as f64
        }
    }

    pub fn term(&self, term: &str) -> TermStats {
        self.terms.get(term).copied().unwrap_or_default()
    }
}

/// Immutable inverted index over real-valued term weights.
///
/// Documents are numbered in ascending doc-id order, so postings sorted by
/// ordinal are also sorted by doc id.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<f64>,
    vocab: Vec<String>,
    term_ids: HashMap<String, u32>,
    /// term id -> (doc ordinal, weight)
    postings: Vec<Vec<(u32, f32)>>,
    /// doc ordinal -> (term id, weight), sorted by term id
    forward: Vec<Vec<(u32, f32)>>,
    stats: CollectionStats,
}

impl InvertedIndex {
    /// Builds an index whose statistics are derived from its own documents.
    pub fn build<I>(bags: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, WeightedBag)>,
    {
        let mut index = Self::build_postings(bags)?;
        index.stats = index.local_stats();
        Ok(index)
    }

    /// Builds an index over a subset of the collection that scores with the
    /// supplied global statistics.
    pub fn build_with_stats<I>(bags: I, stats: CollectionStats) -> Result<Self>
    where
        I: IntoIterator<Item = (String, WeightedBag)>,
    {
        let mut index = Self::build_postings(bags)?;
        index.stats = stats;
        Ok(index)
    }

    fn build_postings<I>(bags: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, WeightedBag)>,
    {
        let mut docs: Vec<(String, WeightedBag)> = bags.into_iter().collect();
        docs.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateId(w[0].0.clone()));
        }

        let mut vocab: Vec<String> = docs
            .iter()
            .flat_map(|(_, bag)| bag.iter().map(|(t, _)| t.clone()))
            .collect();
        vocab.sort_unstable();
        vocab.dedup();
        let term_ids: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();

        let mut postings = vec![Vec::new(); vocab.len()];
        let mut forward = Vec::with_capacity(docs.len());
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (ord, (_, bag)) in docs.iter().enumerate() {
            // BTreeMap iteration is term-sorted, and so are term ids.
            let entries: Vec<(u32, f32)> = bag
                .iter()
                .map(|(t, w)| (term_ids[t], *w as f32))
                .filter(|(_, w)| *w > 0.0)
                .collect();
            for &(tid, w) in &entries {
                postings[tid as usize].push((ord as u32, w));
            }
            doc_lengths.push(entries.iter().map(|(_, w)| *w as f64).sum());
            forward.push(entries);
        }

        Ok(Self {
            doc_ids: docs.into_iter().map(|(id, _)| id).collect(),
            doc_lengths,
            vocab,
            term_ids,
            postings,
            forward,
            stats: CollectionStats::default(),
        })
    }

    /// Statistics computed from this index's own postings.
    pub fn local_stats(&self) -> CollectionStats {
        let terms = self
            .vocab
            .iter()
            .zip(&self.postings)
            .map(|(t, plist)| {
                let cf = plist.iter().map(|(_, w)| *w as f64).sum();
                (t.clone(), TermStats { df: plist.len() as u32, cf })
            })
            .collect();
        CollectionStats {
            num_docs: self.doc_ids.len(),
            total_weight: self.doc_lengths.iter().sum(),
            terms,
        }
    }

    pub fn stats(&self) -> &CollectionStats {
        &self.stats
    }

    /// Documents stored in this index (not the global count).
    pub fn num_local_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_ordinal(&self, doc_id: &str) -> Option<u32> {
        self.doc_ids
            .binary_search_by(|d| d.as_str().cmp(doc_id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn doc_id(&self, ord: u32) -> &str {
        &self.doc_ids[ord as usize]
    }

    pub fn doc_length(&self, ord: u32) -> f64 {
        self.doc_lengths[ord as usize]
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    pub fn term(&self, tid: u32) -> &str {
        &self.vocab[tid as usize]
    }

    /// Document frequency from the scoring statistics.
    pub fn df(&self, term: &str) -> u32 {
        self.stats.term(term).df
    }

    pub fn postings(&self, term: &str) -> &[(u32, f32)] {
        match self.term_id(term) {
            Some(tid) => &self.postings[tid as usize],
            None => &[],
        }
    }

    /// Weight of `term` in document `ord`, 0 when absent.
    pub fn term_weight(&self, ord: u32, term: &str) -> f64 {
        self.term_id(term)
            .map_or(0.0, |tid| self.term_weight_by_id(ord, tid))
    }

    pub(crate) fn term_weight_by_id(&self, ord: u32, tid: u32) -> f64 {
        let row = &self.forward[ord as usize];
        match row.binary_search_by_key(&tid, |(t, _)| *t) {
            Ok(i) => row[i].1 as f64,
            Err(_) => 0.0,
        }
    }

    /// The `(term id, weight)` vector of a document.
    pub fn doc_terms(&self, ord: u32) -> &[(u32, f32)] {
        &self.forward[ord as usize]
    }

    /// Writes the index to `dir` as a postings file, a documents file and a
    /// statistics file, plus a small metadata header.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = IndexMeta {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            num_docs: self.doc_ids.len(),
            num_terms: self.vocab.len(),
        };
        write_json(&dir.join("meta.json"), &meta)?;
        write_json(&dir.join("stats.json"), &self.stats)?;

        let docs: Vec<DocRecord> = self
            .doc_ids
            .iter()
            .zip(&self.doc_lengths)
            .map(|(id, len)| DocRecord { id: id.clone(), length: *len })
            .collect();
        write_json(&dir.join("docs.json"), &docs)?;

        let path = dir.join("postings.jsonl");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (term, plist) in self.vocab.iter().zip(&self.postings) {
            let line = serde_json::to_string(&PostingRecord {
                term: term.clone(),
                postings: plist.clone(),
            })
            .expect("posting record is serializable");
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: IndexMeta = read_json(&dir.join("meta.json"))?;
        if meta.format != FORMAT_NAME || meta.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT_NAME} v{FORMAT_VERSION}, found {} v{}",
                dir.display(),
                meta.format,
                meta.version
            )));
        }
        let stats: CollectionStats = read_json(&dir.join("stats.json"))?;
        let docs: Vec<DocRecord> = read_json(&dir.join("docs.json"))?;
        if docs.len() != meta.num_docs {
            return Err(Error::Corrupt(format!("{} documents, header says {}", docs.len(), meta.num_docs)));
        }
        if docs.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(Error::Corrupt("document table is not strictly sorted".into()));
        }

        let path = dir.join("postings.jsonl");
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut vocab = Vec::with_capacity(meta.num_terms);
        let mut postings = Vec::with_capacity(meta.num_terms);
        let mut forward = vec![Vec::new(); docs.len()];
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            let rec: PostingRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(&path, i + 1, e.to_string()))?;
            let tid = vocab.len() as u32;
            for &(ord, w) in &rec.postings {
                let row = forward
                    .get_mut(ord as usize)
                    .ok_or_else(|| Error::Corrupt(format!("posting for unknown document {ord}")))?;
                row.push((tid, w));
            }
            vocab.push(rec.term);
            postings.push(rec.postings);
        }
        if vocab.len() != meta.num_terms {
            return Err(Error::Corrupt(format!("{} terms, header says {}", vocab.len(), meta.num_terms)));
        }
        let term_ids = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let (doc_ids, doc_lengths) = docs.into_iter().map(|d| (d.id, d.length)).unzip();
        Ok(Self {
            doc_ids,
            doc_lengths,
            vocab,
            term_ids,
            postings,
            forward,
            stats,
        })
    }
}

/// Builds an index from `(doc_id, bag)` pairs. Doc ids must be unique.
pub fn build_index<I>(bags: I) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = (String, WeightedBag)>,
{
    InvertedIndex::build(bags)
}

#[derive(Serialize, Deserialize)]
struct IndexMeta {
    format: String,
    version: u32,
    num_docs: usize,
    num_terms: usize,
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    id: String,
    length: f64,
}

#[derive(Serialize, Deserialize)]
struct PostingRecord {
    term: String,
    postings: Vec<(u32, f32)>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value is serializable");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(pairs: &[(&str, f64)]) -> WeightedBag {
        pairs.iter().map(|&(t, w)| (t, w)).collect()
    }

    #[test]
    fn counts_and_lengths() {
        let idx = build_index([
            ("d1".to_string(), bag(&[("a", 2.0), ("b", 2.0)])),
            ("d2".to_string(), bag(&[("a", 1.0), ("c", 3.0)])),
        ])
        .unwrap();
        assert_eq!(idx.df("a"), 2);
        assert_eq!(idx.df("b"), 1);
        assert_eq!(idx.df("zzz"), 0);
        let d1 = idx.doc_ordinal("d1").unwrap();
        assert_eq!(idx.doc_length(d1), 4.0);
        assert_eq!(idx.stats().num_docs, 2);
        assert_eq!(idx.stats().total_weight, 8.0);
        assert_eq!(idx.postings("a"), &[(0, 2.0), (1, 1.0)]);
        assert_eq!(idx.term_weight(1, "c"), 3.0);
        assert_eq!(idx.term_weight(1, "b"), 0.0);
    }

    #[test]
    fn empty_and_real_valued() {
        let idx = build_index(std::iter::empty()).unwrap();
        assert_eq!(idx.stats().num_docs, 0);
        assert_eq!(idx.stats().avg_doc_length(), 0.0);

        let idx = build_index([("d".to_string(), bag(&[("x", 2.2), ("y", 0.8)]))]).unwrap();
        assert!((idx.doc_length(0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn duplicate_doc_rejected() {
        let err = build_index([
            ("d1".to_string(), bag(&[("a", 1.0)])),
            ("d1".to_string(), bag(&[("b", 1.0)])),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "d1"));
    }

    #[test]
    fn postings_sorted_by_doc_id() {
        let idx = build_index([
            ("z".to_string(), bag(&[("a", 1.0)])),
            ("m".to_string(), bag(&[("a", 1.0)])),
            ("b".to_string(), bag(&[("a", 1.0)])),
        ])
        .unwrap();
        let ids: Vec<_> = idx.postings("a").iter().map(|(o, _)| idx.doc_id(*o)).collect();
        assert_eq!(ids, ["b", "m", "z"]);
    }

    #[test]
    fn save_load_round_trip() {
        let idx = build_index([
            ("d1".to_string(), bag(&[("a", 2.5), ("b", 2.0)])),
            ("d2".to_string(), bag(&[("a", 1.0), ("c", 0.125)])),
            ("d3".to_string(), WeightedBag::new()),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        assert_eq!(InvertedIndex::load(dir.path()).unwrap(), idx);

        fs::write(dir.path().join("meta.json"), r#"{"format":"xlir-lexical","version":99,"num_docs":3,"num_terms":3}"#).unwrap();
        assert!(matches!(InvertedIndex::load(dir.path()), Err(Error::Format(_))));
    }
}
