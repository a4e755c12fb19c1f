use std::collections::BTreeMap;

use crate::error::Result;
use crate::psq::WeightedBag;
use crate::ranking::ScoredDoc;

use super::search::{check_query, search_weighted};
use super::{InvertedIndex, LexicalParams, Scorer};

/// Runs a first pass with `scorer` and expands the query from its top
/// documents. See [`rm3_from_feedback`].
pub fn rm3_expand<S: AsRef<str>>(
    index: &InvertedIndex,
    query_terms: &[S],
    scorer: Scorer,
    params: &LexicalParams,
) -> Result<WeightedBag> {
    let query = WeightedBag::from_tokens(query_terms);
    check_query(&query, params, 1)?;
    let first = search_weighted(&[index], &query, scorer, params, params.rm3_fb_docs.max(1));
    Ok(rm3_from_feedback(&[index], &query, &first, params))
}

/// RM3 expansion from an existing first-pass ranking.
///
/// The relevance model is `P_RM(t) = sum_D P(t|D) w(D)` over the top
/// `rm3_fb_docs` documents, with `w` the softmax of their scores. Its best
/// `rm3_fb_terms` terms are renormalized and mixed with the query's maximum
/// likelihood model as `alpha * P_MLE + (1 - alpha) * P_RM`. The result sums
/// to one. Feedback documents are looked up in whichever index holds them.
///
/// With no feedback documents the query is returned unchanged.
pub fn rm3_from_feedback(
    indexes: &[&InvertedIndex],
    query: &WeightedBag,
    feedback: &[ScoredDoc],
    params: &LexicalParams,
) -> WeightedBag {
    let fb: Vec<&ScoredDoc> = feedback
        .iter()
        .filter(|d| d.score.is_finite())
        .take(params.rm3_fb_docs)
        .collect();
    if fb.is_empty() {
        return query.clone();
    }

    let max = fb.iter().map(|d| d.score).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = fb.iter().map(|d| (d.score - max).exp()).collect();
    let z: f64 = exps.iter().sum();

    let mut relevance: BTreeMap<&str, f64> = BTreeMap::new();
    for (doc, e) in fb.iter().zip(&exps) {
        let doc_weight = e / z;
        let Some((index, ord)) = indexes
            .iter()
            .find_map(|ix| ix.doc_ordinal(&doc.id).map(|o| (*ix, o)))
        else {
            continue;
        };
        let dl = index.doc_length(ord);
        if dl <= 0.0 {
            continue;
        }
        for &(tid, w) in index.doc_terms(ord) {
            *relevance.entry(index.term(tid)).or_insert(0.0) += w as f64 / dl * doc_weight;
        }
    }

    let mut ranked: Vec<(&str, f64)> = relevance.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(params.rm3_fb_terms);
    let rm_mass: f64 = ranked.iter().map(|(_, p)| p).sum();

    let alpha = params.rm3_alpha;
    let q_mass = query.total();
    let mut mixed: BTreeMap<String, f64> = BTreeMap::new();
    for (t, w) in query {
        *mixed.entry(t.clone()).or_insert(0.0) += alpha * w / q_mass;
    }
    if rm_mass > 0.0 {
        for (t, p) in ranked {
            *mixed.entry(t.to_string()).or_insert(0.0) += (1.0 - alpha) * p / rm_mass;
        }
    }
    let total: f64 = mixed.values().sum();
    mixed
        .into_iter()
        .map(|(t, w)| (t, w / total))
        .filter(|(_, w)| *w > 0.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::build_index;
    use approx::assert_abs_diff_eq;

    fn bag(pairs: &[(&str, f64)]) -> WeightedBag {
        pairs.iter().map(|&(t, w)| (t, w)).collect()
    }

    #[test]
    fn single_feedback_doc_is_its_language_model() {
        let idx = build_index([
            ("d1".to_string(), bag(&[("a", 2.0), ("b", 1.0)])),
            ("d2".to_string(), bag(&[("c", 3.0)])),
        ])
        .unwrap();
        let p = LexicalParams::default();
        let expanded = rm3_expand(&idx, &["a"], Scorer::Hmm, &p).unwrap();
        assert_abs_diff_eq!(expanded.get("a"), 0.5 + 0.5 * 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expanded.get("b"), 0.5 / 3.0, epsilon = 1e-12);
        assert_eq!(expanded.len(), 2);
        // BM25 first pass retrieves the same single document
        let expanded = rm3_expand(&idx, &["a"], Scorer::Bm25, &p).unwrap();
        assert_abs_diff_eq!(expanded.get("a"), 0.8333333333, epsilon = 1e-9);
    }

    #[test]
    fn alpha_one_keeps_query_model() {
        let idx = build_index([
            ("d1".to_string(), bag(&[("a", 2.0), ("b", 1.0)])),
            ("d2".to_string(), bag(&[("a", 1.0), ("c", 3.0)])),
        ])
        .unwrap();
        let p = LexicalParams { rm3_alpha: 1.0, ..Default::default() };
        let expanded = rm3_expand(&idx, &["a", "a", "c"], Scorer::Hmm, &p).unwrap();
        assert_eq!(expanded.len(), 2);
        assert_abs_diff_eq!(expanded.get("a"), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expanded.get("c"), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn one_feedback_term() {
        let idx = build_index([
            ("d1".to_string(), bag(&[("a", 1.0), ("b", 5.0), ("c", 2.0)])),
            ("d2".to_string(), bag(&[("x", 3.0)])),
        ])
        .unwrap();
        let p = LexicalParams { rm3_fb_terms: 1, ..Default::default() };
        let expanded = rm3_expand(&idx, &["a"], Scorer::Bm25, &p).unwrap();
        assert_eq!(expanded.len(), 2);
        assert_abs_diff_eq!(expanded.get("b"), 0.5, epsilon = 1e-12);
        assert_eq!(expanded.get("c"), 0.0);
    }

    #[test]
    fn no_feedback_returns_query() {
        let idx = build_index([("d1".to_string(), bag(&[("a", 1.0)]))]).unwrap();
        let p = LexicalParams::default();
        let q = WeightedBag::from_tokens(&["zzz", "zzz"]);
        assert_eq!(rm3_from_feedback(&[&idx], &q, &[], &p), q);
        let expanded = rm3_expand(&idx, &["zzz"], Scorer::Hmm, &p).unwrap();
        assert_eq!(expanded.get("zzz"), 1.0);
    }
}
