//! Centroid codebook and per-dimension residual buckets.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::kmeans::{nearest_centroid, spherical_kmeans};
use super::{DenseIndexParams, TokenEmbeddings};

/// Tokens sampled per centroid for k-means.
pub const SAMPLE_PER_CENTROID: usize = 256;

/// `2^ceil(log2(16 * sqrt(T)))`, capped at the largest power of two not
/// exceeding `T` so small collections still train.
pub fn default_num_centroids(total_tokens: usize) -> usize {
    if total_tokens == 0 {
        return 1;
    }
    let target = 16.0 * (total_tokens as f64).sqrt();
    let heuristic = 1usize << (target.log2().ceil() as u32);
    let cap = 1usize << (usize::BITS - 1 - total_tokens.leading_zeros());
    heuristic.min(cap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidCodebook {
    dim: usize,
    bits: u8,
    /// `K x dim`, unit rows.
    centroids: Vec<f32>,
    /// `dim x (levels - 1)` ascending cut points.
    boundaries: Vec<f32>,
    /// `dim x levels` strictly increasing reconstruction values.
    values: Vec<f32>,
    /// Largest per-dimension reconstruction error seen on the training sample.
    error_bound: Vec<f32>,
}

impl CentroidCodebook {
    /// Assembles a codebook from raw parts, checking shapes and ordering.
    pub fn from_parts(
        dim: usize,
        bits: u8,
        centroids: Vec<f32>,
        boundaries: Vec<f32>,
        values: Vec<f32>,
        error_bound: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 || !(1..=8).contains(&bits) {
            return Err(Error::InvalidArgument(format!("bad codebook shape dim={dim} bits={bits}")));
        }
        let levels = 1usize << bits;
        if centroids.is_empty()
            || centroids.len() % dim != 0
            || boundaries.len() != dim * (levels - 1)
            || values.len() != dim * levels
            || error_bound.len() != dim
        {
            return Err(Error::Corrupt("codebook arrays have inconsistent lengths".into()));
        }
        for d in 0..dim {
            let v = &values[d * levels..(d + 1) * levels];
            if v.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Corrupt(format!("reconstruction values of dimension {d} not increasing")));
            }
            let b = &boundaries[d * (levels - 1)..(d + 1) * (levels - 1)];
            if b.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(Error::Corrupt(format!("boundaries of dimension {d} not sorted")));
            }
        }
        Ok(Self {
            dim,
            bits,
            centroids,
            boundaries,
            values,
            error_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn levels(&self) -> usize {
        1 << self.bits
    }

    pub fn num_centroids(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, id: usize) -> &[f32] {
        &self.centroids[id * self.dim..(id + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn boundaries(&self, d: usize) -> &[f32] {
        let n = self.levels() - 1;
        &self.boundaries[d * n..(d + 1) * n]
    }

    pub fn values(&self, d: usize) -> &[f32] {
        let n = self.levels();
        &self.values[d * n..(d + 1) * n]
    }

    pub fn error_bound(&self) -> &[f32] {
        &self.error_bound
    }

    pub fn nearest(&self, v: &[f32]) -> usize {
        nearest_centroid(v, &self.centroids, self.dim)
    }

    /// Bucket of residual `x` in dimension `d`: the number of boundaries
    /// that are `<= x`.
    #[inline]
    pub fn bucket(&self, d: usize, x: f32) -> u32 {
        self.boundaries(d).partition_point(|b| *b <= x) as u32
    }

    #[inline]
    pub fn value(&self, d: usize, code: u32) -> f32 {
        self.values[d * self.levels() + code as usize]
    }
}

/// Cut points and reconstruction values for residuals, one dimension at a
/// time. `residuals` is row-major with `dim` columns.
///
/// With one bit the cut is at zero; with more bits the cuts are empirical
/// quantiles. Each value is the mean residual in its bucket. An empty
/// bucket takes its nearest cut point, and values are then nudged up by one
/// ulp where needed to stay strictly increasing.
pub fn fit_residual_buckets(residuals: &[f32], dim: usize, bits: u8) -> (Vec<f32>, Vec<f32>) {
    let levels = 1usize << bits;
    let n = residuals.len() / dim;
    let mut boundaries = Vec::with_capacity(dim * (levels - 1));
    let mut values = Vec::with_capacity(dim * levels);
    let mut column = Vec::with_capacity(n);
    for d in 0..dim {
        column.clear();
        column.extend(residuals.iter().skip(d).step_by(dim).copied());
        column.sort_by(f32::total_cmp);

        let cuts: Vec<f32> = if bits == 1 {
            vec![0.0]
        } else if column.is_empty() {
            vec![0.0; levels - 1]
        } else {
            (1..levels)
                .map(|i| column[(i * n / levels).min(n - 1)])
                .collect()
        };

        let mut sums = vec![0.0f64; levels];
        let mut counts = vec![0usize; levels];
        for &x in &column {
            let b = cuts.partition_point(|c| *c <= x);
            sums[b] += x as f64;
            counts[b] += 1;
        }
        let mut vals: Vec<f32> = (0..levels)
            .map(|b| {
                if counts[b] > 0 {
                    (sums[b] / counts[b] as f64) as f32
                } else if b == 0 {
                    cuts[0]
                } else {
                    cuts[b - 1]
                }
            })
            .collect();
        for i in 1..levels {
            if vals[i] <= vals[i - 1] {
                vals[i] = vals[i - 1].next_up();
            }
        }
        boundaries.extend(cuts);
        values.extend(vals);
    }
    (boundaries, values)
}

/// Trains centroids with spherical k-means on a seeded token sample and fits
/// residual buckets on the same sample.
pub fn train_codebook(embeddings: &TokenEmbeddings, params: &DenseIndexParams) -> Result<CentroidCodebook> {
    params.validate()?;
    let dim = embeddings.dim();
    let total = embeddings.total_tokens();
    let k = params.num_centroids.unwrap_or_else(|| default_num_centroids(total));
    if k == 0 {
        return Err(Error::InvalidArgument("centroid count must be positive".into()));
    }
    if total < k {
        return Err(Error::InvalidArgument(format!(
            "{total} tokens cannot train {k} centroids; use at most {} centroids",
            default_num_centroids(total).min(total.max(1))
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let all: Vec<&[f32]> = embeddings.iter().flat_map(|(_, m)| m.rows()).collect();
    let sample_size = total.min(SAMPLE_PER_CENTROID.saturating_mul(k));
    let sample: Vec<f32> = if sample_size == total {
        all.concat()
    } else {
        let mut picks = index::sample(&mut rng, total, sample_size).into_vec();
        picks.sort_unstable();
        picks.into_iter().flat_map(|i| all[i].iter().copied()).collect()
    };

    let centroids = spherical_kmeans(&sample, dim, k, params.kmeans_iters, &mut rng);

    let assign: Vec<usize> = sample
        .chunks_exact(dim)
        .map(|v| nearest_centroid(v, &centroids, dim))
        .collect();
    let mut residuals = Vec::with_capacity(sample.len());
    for (v, &a) in sample.chunks_exact(dim).zip(&assign) {
        let c = &centroids[a * dim..(a + 1) * dim];
        residuals.extend(v.iter().zip(c).map(|(x, y)| x - y));
    }
    let (boundaries, values) = fit_residual_buckets(&residuals, dim, params.bits);

    let mut book = CentroidCodebook::from_parts(
        dim,
        params.bits,
        centroids,
        boundaries,
        values,
        vec![0.0; dim],
    )?;
    // Measured with the same arithmetic as decompression.
    let mut bound = vec![0.0f32; dim];
    for ((v, r), &a) in sample.chunks_exact(dim).zip(residuals.chunks_exact(dim)).zip(&assign) {
        let c = book.centroid(a);
        for d in 0..dim {
            let recon = c[d] + book.value(d, book.bucket(d, r[d]));
            bound[d] = bound[d].max((v[d] - recon).abs());
        }
    }
    book.error_bound = bound;
    Ok(book)
}
