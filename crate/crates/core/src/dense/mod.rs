//! Late-interaction dense retrieval over ingested token embeddings.
//!
//! Token vectors are compressed to a centroid id plus `b` bits per
//! dimension. Search runs in three stages: centroid probing to collect
//! candidate passages, a centroid-only MaxSim pass that keeps the best
//! `candidate_cap`, and exact MaxSim over decompressed vectors.

mod codebook;
mod codec;
mod embeddings;
mod index;
mod kmeans;
mod maxsim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use codebook::{default_num_centroids, fit_residual_buckets, train_codebook, CentroidCodebook};
pub use codec::{compress, decompress, CompressedPassage};
pub use embeddings::{
    load_embeddings, write_embeddings, TokenEmbeddings, TokenMatrix, EMBEDDING_MAGIC, EMBEDDING_VERSION,
    NORM_TOLERANCE,
};
pub use index::{maxp_aggregate, search_dense, DenseIndex, DenseSearch, PassageHit, StageTimings};
pub use kmeans::{nearest_centroid, normalize, spherical_kmeans};
pub use maxsim::{dot, maxsim};

/// Number of passages fully scored per query by default.
pub const DEFAULT_CANDIDATE_CAP: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenseIndexParams {
    /// Residual bits per dimension.
    pub bits: u8,
    /// Centroid count; `None` picks [`default_num_centroids`].
    pub num_centroids: Option<usize>,
    /// Centroids probed per query token.
    pub nprobe: usize,
    /// Passages that survive the centroid-only pass.
    pub candidate_cap: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for DenseIndexParams {
    fn default() -> Self {
        Self {
            bits: 1,
            num_centroids: None,
            nprobe: 4,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            kmeans_iters: 20,
            seed: 0,
        }
    }
}

impl DenseIndexParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.bits) {
            return Err(Error::InvalidArgument(format!("bits must be in 1..=8, got {}", self.bits)));
        }
        if self.nprobe == 0 {
            return Err(Error::InvalidArgument("nprobe must be at least 1".into()));
        }
        if self.candidate_cap == 0 {
            return Err(Error::InvalidArgument("candidate_cap must be at least 1".into()));
        }
        if self.num_centroids == Some(0) {
            return Err(Error::InvalidArgument("centroid count must be positive".into()));
        }
        Ok(())
    }
}
