use crate::error::{Error, Result};
use crate::psq::WeightedBag;

use super::{InvertedIndex, LexicalParams, Scorer};

/// A query term resolved against an index.
#[derive(Debug, Clone)]
pub(crate) struct ScoringTerm {
    pub tid: Option<u32>,
    pub weight: f64,
    pub idf: f64,
    /// Collection language model probability.
    pub p_coll: f64,
}

pub(crate) fn prepare(index: &InvertedIndex, query: &WeightedBag) -> Vec<ScoringTerm> {
    let stats = index.stats();
    let n = stats.num_docs as f64;
    query
        .iter()
        .map(|(term, &weight)| {
            let ts = stats.term(term);
            let df = ts.df as f64;
            let p_coll = if stats.total_weight > 0.0 {
                ts.cf / stats.total_weight
            } else {
                0.0
            };
            ScoringTerm {
                tid: index.term_id(term),
                weight,
                idf: (1.0 + (n - df + 0.5) / (df + 0.5)).ln(),
                p_coll,
            }
        })
        .collect()
}

pub(crate) fn score_prepared(
    index: &InvertedIndex,
    terms: &[ScoringTerm],
    ord: u32,
    scorer: Scorer,
    params: &LexicalParams,
) -> f64 {
    let dl = index.doc_length(ord);
    let tf = |t: &ScoringTerm| t.tid.map_or(0.0, |tid| index.term_weight_by_id(ord, tid));
    match scorer {
        Scorer::Bm25 => {
            let avgdl = index.stats().avg_doc_length();
            let len_norm = if avgdl > 0.0 {
                1.0 - params.b + params.b * dl / avgdl
            } else {
                1.0
            };
            let denom_k = params.k1 * len_norm;
            terms
                .iter()
                .map(|t| {
                    let f = tf(t);
                    if f > 0.0 {
                        t.weight * t.idf * f / (f + denom_k)
                    } else {
                        0.0
                    }
                })
                .sum()
        }
        Scorer::Hmm => {
            let lambda = params.lambda;
            terms
                .iter()
                .map(|t| {
                    let p_doc = if dl > 0.0 { tf(t) / dl } else { 0.0 };
                    t.weight * (lambda * p_doc + (1.0 - lambda) * t.p_coll).ln()
                })
                .sum()
        }
    }
}

fn score_tokens<S: AsRef<str>>(
    index: &InvertedIndex,
    query_terms: &[S],
    doc_id: &str,
    scorer: Scorer,
    params: &LexicalParams,
) -> Result<f64> {
    let ord = index
        .doc_ordinal(doc_id)
        .ok_or_else(|| Error::InvalidArgument(format!("document `{doc_id}` not in index")))?;
    let query = WeightedBag::from_tokens(query_terms);
    Ok(score_prepared(index, &prepare(index, &query), ord, scorer, params))
}

/// Okapi BM25 with `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`. Repeated
/// query terms count with multiplicity.
pub fn bm25_score<S: AsRef<str>>(
    index: &InvertedIndex,
    query_terms: &[S],
    doc_id: &str,
    params: &LexicalParams,
) -> Result<f64> {
    score_tokens(index, query_terms, doc_id, Scorer::Bm25, params)
}

/// Log query likelihood under a two-state mixture of the document and
/// collection language models:
/// `sum_t ln(lambda * P(t|D) + (1 - lambda) * P(t|C))`.
///
/// Returns negative infinity when some query term has zero probability
/// under the mixture.
pub fn hmm_score<S: AsRef<str>>(
    index: &InvertedIndex,
    query_terms: &[S],
    doc_id: &str,
    params: &LexicalParams,
) -> Result<f64> {
    if !(params.lambda > 0.0 && params.lambda <= 1.0) {
        return Err(Error::InvalidArgument("lambda must be in (0, 1]".into()));
    }
    score_tokens(index, query_terms, doc_id, Scorer::Hmm, params)
}

/// Scores one document against a weighted query.
pub fn score_weighted(
    index: &InvertedIndex,
    query: &WeightedBag,
    doc_id: &str,
    scorer: Scorer,
    params: &LexicalParams,
) -> Result<f64> {
    let ord = index
        .doc_ordinal(doc_id)
        .ok_or_else(|| Error::InvalidArgument(format!("document `{doc_id}` not in index")))?;
    Ok(score_prepared(index, &prepare(index, query), ord, scorer, params))
}
