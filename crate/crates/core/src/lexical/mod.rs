//! Sparse retrieval over real-valued term weights: BM25, HMM query
//! likelihood and RM3 pseudo-relevance feedback.

mod index;
mod rm3;
mod scoring;
mod search;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use index::{build_index, CollectionStats, InvertedIndex, TermStats};
pub use rm3::{rm3_expand, rm3_from_feedback};
pub use search::{search_lexical, search_lexical_sharded, search_weighted};
pub use scoring::{bm25_score, hmm_score, score_weighted};

pub(crate) use index::{read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexicalParams {
    pub k1: f64,
    pub b: f64,
    /// Weight of the document model in the HMM mixture.
    pub lambda: f64,
    pub rm3_fb_docs: usize,
    pub rm3_fb_terms: usize,
    /// Weight kept by the original query after expansion.
    pub rm3_alpha: f64,
}

impl Default for LexicalParams {
    fn default() -> Self {
        Self {
            k1: 0.9,
            b: 0.4,
            lambda: 0.5,
            rm3_fb_docs: 10,
            rm3_fb_terms: 10,
            rm3_alpha: 0.5,
        }
    }
}

impl LexicalParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.k1 >= 0.0) {
            return bad("k1 must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.b) {
            return bad("b must be in [0, 1]");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.rm3_alpha) {
            return bad("rm3_alpha must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Bm25,
    Hmm,
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bm25" => Ok(Scorer::Bm25),
            "hmm" => Ok(Scorer::Hmm),
            _ => Err(Error::InvalidArgument(format!("unknown lexical scorer `{s}`"))),
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scorer::Bm25 => "bm25",
            Scorer::Hmm => "hmm",
        })
    }
}
