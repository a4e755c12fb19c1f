//! Residual compression: nearest centroid id plus `b` bits per dimension.

use crate::error::{Error, Result};

use super::{CentroidCodebook, TokenMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedPassage {
    pub key: String,
    pub centroid_ids: Vec<u32>,
    /// `num_tokens * dim * bits` bits, least significant bit first.
    pub codes: Vec<u8>,
}

impl CompressedPassage {
    pub fn num_tokens(&self) -> usize {
        self.centroid_ids.len()
    }
}

pub(crate) fn packed_len(num_tokens: usize, dim: usize, bits: u8) -> usize {
    (num_tokens * dim * bits as usize).div_ceil(8)
}

fn put_bits(buf: &mut [u8], offset: usize, bits: u8, value: u32) {
    for i in 0..bits as usize {
        if value >> i & 1 == 1 {
            let pos = offset + i;
            buf[pos / 8] |= 1 << (pos % 8);
        }
    }
}

fn get_bits(buf: &[u8], offset: usize, bits: u8) -> u32 {
    let mut v = 0;
    for i in 0..bits as usize {
        let pos = offset + i;
        v |= ((buf[pos / 8] >> (pos % 8) & 1) as u32) << i;
    }
    v
}

/// Encodes each token as its nearest centroid (maximal dot product) and the
/// bucket of every residual coordinate.
pub fn compress(key: &str, vectors: &TokenMatrix, codebook: &CentroidCodebook) -> Result<CompressedPassage> {
    let dim = codebook.dim();
    if vectors.dim() != dim {
        return Err(Error::InvalidArgument(format!(
            "`{key}` has dimension {}, codebook has {dim}",
            vectors.dim()
        )));
    }
    let bits = codebook.bits();
    let mut codes = vec![0u8; packed_len(vectors.num_rows(), dim, bits)];
    let mut centroid_ids = Vec::with_capacity(vectors.num_rows());
    for (t, v) in vectors.rows().enumerate() {
        let cid = codebook.nearest(v);
        let c = codebook.centroid(cid);
        for d in 0..dim {
            let code = codebook.bucket(d, v[d] - c[d]);
            put_bits(&mut codes, (t * dim + d) * bits as usize, bits, code);
        }
        centroid_ids.push(cid as u32);
    }
    Ok(CompressedPassage {
        key: key.to_string(),
        centroid_ids,
        codes,
    })
}

/// Rebuilds token vectors as centroid plus bucket reconstruction values.
/// The result is not renormalized.
pub fn decompress(passage: &CompressedPassage, codebook: &CentroidCodebook) -> Result<TokenMatrix> {
    let dim = codebook.dim();
    let bits = codebook.bits();
    let k = codebook.num_centroids();
    if passage.codes.len() != packed_len(passage.num_tokens(), dim, bits) {
        return Err(Error::Corrupt(format!(
            "`{}` has {} code bytes for {} tokens",
            passage.key,
            passage.codes.len(),
            passage.num_tokens()
        )));
    }
    let mut data = Vec::with_capacity(passage.num_tokens() * dim);
    for (t, &cid) in passage.centroid_ids.iter().enumerate() {
        if cid as usize >= k {
            return Err(Error::Corrupt(format!(
                "`{}` references centroid {cid} of {k}",
                passage.key
            )));
        }
        let c = codebook.centroid(cid as usize);
        for d in 0..dim {
            let code = get_bits(&passage.codes, (t * dim + d) * bits as usize, bits);
            data.push(c[d] + codebook.value(d, code));
        }
    }
    TokenMatrix::new(dim, data)
}
