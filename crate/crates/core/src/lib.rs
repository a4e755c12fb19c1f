//! Cross-language retrieval engine.
//!
//! - [`corpus`]: documents, topics, tokenization, passage windows.
//! - [`psq`]: translation tables and document-side probabilistic translation.
//! - [`lexical`]: inverted index with BM25, HMM query likelihood and RM3.
//! - [`dense`]: late-interaction index with centroid + residual compression.
//! - [`shards`]: date-windowed shards, shard merging and multilingual fusion.
//! - [`distill`]: hard-passage mining and KL distillation loss.
//! - [`eval`]: TREC run/qrels I/O, nDCG and recall.
//! - [`synthetic`]: seeded multilingual test collection.

pub mod corpus;
pub mod dense;
pub mod distill;
pub mod error;
pub mod eval;
pub mod lexical;
pub mod psq;
pub mod ranking;
pub mod shards;
pub mod synthetic;

pub use error::{Error, Result};
pub use ranking::ScoredDoc;
