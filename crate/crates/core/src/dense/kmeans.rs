//! Spherical k-means: assignment by maximal dot product, centroids
//! renormalized to unit length after every update.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::maxsim::dot;

/// Index of the centroid with the largest dot product, lowest index on ties.
pub fn nearest_centroid(v: &[f32], centroids: &[f32], dim: usize) -> usize {
    let mut best = 0;
    let mut best_score = f32::NEG_INFINITY;
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let s = dot(v, c);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

pub fn normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
        true
    } else {
        false
    }
}

/// Clusters `data` (row-major, `dim` columns) into `k` unit centroids.
///
/// Initial centroids are `k` distinct rows drawn with `rng`. A cluster that
/// loses all its points keeps its previous centroid. Sums are reduced in a
/// fixed order so the result does not depend on thread count.
pub fn spherical_kmeans<R: Rng>(data: &[f32], dim: usize, k: usize, iters: usize, rng: &mut R) -> Vec<f32> {
    let n = data.len() / dim;
    assert!(k >= 1 && k <= n, "k must be in 1..=n");
    let mut centroids: Vec<f32> = index::sample(rng, n, k)
        .into_iter()
        .flat_map(|i| data[i * dim..(i + 1) * dim].iter().copied())
        .collect();
    for c in centroids.chunks_exact_mut(dim) {
        normalize(c);
    }

    for _ in 0..iters {
        let assign: Vec<usize> = data
            .par_chunks_exact(dim)
            .map(|v| nearest_centroid(v, &centroids, dim))
            .collect();
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (v, &a) in data.chunks_exact(dim).zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(v) {
                *s += *x as f64;
            }
        }
        let mut changed = false;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut next: Vec<f32> = sums[c * dim..(c + 1) * dim].iter().map(|&s| s as f32).collect();
            if normalize(&mut next) {
                let slot = &mut centroids[c * dim..(c + 1) * dim];
                if slot != next.as_slice() {
                    changed = true;
                    slot.copy_from_slice(&next);
                }
            }
        }
        if !changed {
            break;
        }
    }
    centroids
}
