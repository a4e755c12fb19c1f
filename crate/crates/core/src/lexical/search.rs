use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::psq::WeightedBag;
use crate::ranking::{top_k, ScoredDoc};

use super::rm3::rm3_from_feedback;
use super::scoring::{prepare, score_prepared};
use super::{InvertedIndex, LexicalParams, Scorer};

pub(crate) fn check_query(query: &WeightedBag, params: &LexicalParams, k: usize) -> Result<()> {
    if query.is_empty() {
        return Err(Error::InvalidArgument("empty query".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    params.validate()
}

/// Scores every document of one index that contains at least one query
/// term, dropping documents whose score is not finite.
fn score_index(
    index: &InvertedIndex,
    query: &WeightedBag,
    scorer: Scorer,
    params: &LexicalParams,
    k: usize,
) -> Vec<ScoredDoc> {
    // Under the HMM a term unseen in the whole collection zeroes every
    // document's likelihood; it carries no ranking information.
    let effective: WeightedBag = query
        .iter()
        .filter(|(t, _)| scorer != Scorer::Hmm || index.stats().term(t).cf > 0.0)
        .map(|(t, w)| (t.as_str(), *w))
        .collect();
    let terms = prepare(index, &effective);

    let mut hit = vec![false; index.num_local_docs()];
    for t in &terms {
        if let Some(tid) = t.tid {
            for &(ord, _) in index.postings(index.term(tid)) {
                hit[ord as usize] = true;
            }
        }
    }
    let scored: Vec<ScoredDoc> = hit
        .iter()
        .enumerate()
        .filter(|(_, h)| **h)
        .filter_map(|(ord, _)| {
            let s = score_prepared(index, &terms, ord as u32, scorer, params);
            s.is_finite().then(|| ScoredDoc::new(index.doc_id(ord as u32), s))
        })
        .collect();
    top_k(scored, k)
}

/// Top-`k` documents for a weighted query across one or more indexes that
/// share collection statistics.
pub fn search_weighted(
    indexes: &[&InvertedIndex],
    query: &WeightedBag,
    scorer: Scorer,
    params: &LexicalParams,
    k: usize,
) -> Vec<ScoredDoc> {
    let per_index: Vec<Vec<ScoredDoc>> = indexes
        .par_iter()
        .map(|ix| score_index(ix, query, scorer, params, k))
        .collect();
    top_k(per_index.into_iter().flatten().collect(), k)
}

/// Ranks documents for a tokenized query, ties broken by ascending doc id.
/// With `rm3` set, a second pass runs with the expanded query.
pub fn search_lexical<S: AsRef<str>>(
    index: &InvertedIndex,
    query_terms: &[S],
    scorer: Scorer,
    rm3: bool,
    k: usize,
    params: &LexicalParams,
) -> Result<Vec<ScoredDoc>> {
    search_lexical_sharded(&[index], query_terms, scorer, rm3, k, params)
}

/// [`search_lexical`] over shard indexes built with global statistics.
/// The result equals searching the unsharded index.
pub fn search_lexical_sharded<S: AsRef<str>>(
    indexes: &[&InvertedIndex],
    query_terms: &[S],
    scorer: Scorer,
    rm3: bool,
    k: usize,
    params: &LexicalParams,
) -> Result<Vec<ScoredDoc>> {
    let query = WeightedBag::from_tokens(query_terms);
    check_query(&query, params, k)?;
    if !rm3 {
        return Ok(search_weighted(indexes, &query, scorer, params, k));
    }
    let first = search_weighted(indexes, &query, scorer, params, params.rm3_fb_docs.max(1));
    let expanded = rm3_from_feedback(indexes, &query, &first, params);
    Ok(search_weighted(indexes, &expanded, scorer, params, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::{bm25_score, build_index, hmm_score};

    fn bag(pairs: &[(&str, f64)]) -> WeightedBag {
        pairs.iter().map(|&(t, w)| (t, w)).collect()
    }

    fn two_docs() -> InvertedIndex {
        build_index([
            ("d1".to_string(), bag(&[("a", 2.0), ("b", 1.0)])),
            ("d2".to_string(), bag(&[("c", 3.0)])),
        ])
        .unwrap()
    }

    #[test]
    fn only_matching_doc_returned() {
        let idx = two_docs();
        let p = LexicalParams::default();
        for scorer in [Scorer::Bm25, Scorer::Hmm] {
            let hits = search_lexical(&idx, &["a"], scorer, false, 10, &p).unwrap();
            assert_eq!(hits.len(), 1);
            assert_eq!(hits[0].id, "d1");
        }
        let hits = search_lexical(&idx, &["a"], Scorer::Bm25, false, 10, &p).unwrap();
        assert_eq!(hits[0].score, bm25_score(&idx, &["a"], "d1", &p).unwrap());
        let hits = search_lexical(&idx, &["a", "c"], Scorer::Hmm, false, 10, &p).unwrap();
        assert_eq!(hits.len(), 2);
        for h in hits {
            assert_eq!(h.score, hmm_score(&idx, &["a", "c"], &h.id, &p).unwrap());
        }
    }

    #[test]
    fn k_larger_than_collection() {
        let idx = two_docs();
        let p = LexicalParams::default();
        let hits = search_lexical(&idx, &["a", "c"], Scorer::Bm25, true, 1000, &p).unwrap();
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn rejects_empty_query_and_zero_k() {
        let idx = two_docs();
        let p = LexicalParams::default();
        let empty: [&str; 0] = [];
        assert!(search_lexical(&idx, &empty, Scorer::Bm25, false, 10, &p).is_err());
        assert!(search_lexical(&idx, &["a"], Scorer::Bm25, false, 0, &p).is_err());
    }

    #[test]
    fn unseen_terms_do_not_sink_hmm() {
        let idx = two_docs();
        let p = LexicalParams::default();
        let hits = search_lexical(&idx, &["a", "unseen"], Scorer::Hmm, false, 10, &p).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].score, hmm_score(&idx, &["a"], "d1", &p).unwrap());
    }

    #[test]
    fn pure_document_model_filters_partial_matches() {
        let idx = two_docs();
        let p = LexicalParams { lambda: 1.0, ..Default::default() };
        let hits = search_lexical(&idx, &["a", "c"], Scorer::Hmm, false, 10, &p).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn ties_ordered_by_doc_id() {
        let idx = build_index([
            ("b".to_string(), bag(&[("x", 1.0)])),
            ("a".to_string(), bag(&[("x", 1.0)])),
            ("c".to_string(), bag(&[("x", 1.0)])),
        ])
        .unwrap();
        let hits = search_lexical(&idx, &["x"], Scorer::Bm25, false, 10, &LexicalParams::default()).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }
}
