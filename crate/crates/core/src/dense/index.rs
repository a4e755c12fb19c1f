use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::doc_id_of_passage;
use crate::error::{Error, Result};
use crate::lexical::{read_json, write_json};
use crate::ranking::{sort_ranked, ScoredDoc};

use super::codec::packed_len;
use super::maxsim::{dot, maxsim_unchecked};
use super::{compress, decompress, train_codebook, CentroidCodebook, CompressedPassage, DenseIndexParams};
use super::{TokenEmbeddings, TokenMatrix};

const FORMAT_NAME: &str = "xlir-dense";
const FORMAT_VERSION: u32 = 1;
const CODEBOOK_MAGIC: &[u8; 4] = b"XLCB";
const CODES_MAGIC: &[u8; 4] = b"XLCD";

/// Compressed late-interaction index. Passages are kept in key order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    codebook: Option<CentroidCodebook>,
    passages: Vec<CompressedPassage>,
    /// Distinct centroid ids per passage, ascending.
    passage_centroids: Vec<Vec<u32>>,
    /// Centroid id -> passage ordinals, ascending.
    ivf: Vec<Vec<u32>>,
}

impl DenseIndex {
    /// Trains a codebook on `embeddings` and compresses every passage.
    /// An empty collection yields an empty index.
    pub fn build(embeddings: &TokenEmbeddings, params: &DenseIndexParams) -> Result<Self> {
        params.validate()?;
        if embeddings.is_empty() {
            return Ok(Self::from_parts(embeddings.dim(), None, Vec::new())?);
        }
        let codebook = train_codebook(embeddings, params)?;
        let entries: Vec<(&str, &TokenMatrix)> = embeddings.iter().collect();
        let passages = entries
            .par_iter()
            .map(|(key, m)| compress(key, m, &codebook))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(embeddings.dim(), Some(codebook), passages)
    }

    pub fn from_parts(
        dim: usize,
        codebook: Option<CentroidCodebook>,
        mut passages: Vec<CompressedPassage>,
    ) -> Result<Self> {
        passages.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = passages.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(Error::DuplicateId(w[0].key.clone()));
        }
        let k = codebook.as_ref().map_or(0, |c| c.num_centroids());
        if let Some(c) = &codebook {
            if c.dim() != dim {
                return Err(Error::Corrupt(format!("codebook dimension {} != {dim}", c.dim())));
            }
        } else if !passages.is_empty() {
            return Err(Error::Corrupt("passages without a codebook".into()));
        }
        let mut ivf = vec![Vec::new(); k];
        let mut passage_centroids = Vec::with_capacity(passages.len());
        for (ord, p) in passages.iter().enumerate() {
            if p.num_tokens() == 0 {
                return Err(Error::Corrupt(format!("`{}` has no tokens", p.key)));
            }
            let mut ids = p.centroid_ids.clone();
            ids.sort_unstable();
            ids.dedup();
            if let Some(&bad) = ids.iter().find(|&&c| c as usize >= k) {
                return Err(Error::Corrupt(format!("`{}` references centroid {bad} of {k}", p.key)));
            }
            for &c in &ids {
                ivf[c as usize].push(ord as u32);
            }
            passage_centroids.push(ids);
        }
        Ok(Self {
            dim,
            codebook,
            passages,
            passage_centroids,
            ivf,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn codebook(&self) -> Option<&CentroidCodebook> {
        self.codebook.as_ref()
    }

    pub fn num_centroids(&self) -> usize {
        self.codebook.as_ref().map_or(0, |c| c.num_centroids())
    }

    pub fn passages(&self) -> &[CompressedPassage] {
        &self.passages
    }

    pub fn decompress_passage(&self, ord: usize) -> Result<TokenMatrix> {
        let book = self
            .codebook
            .as_ref()
            .ok_or_else(|| Error::Corrupt("index has no codebook".into()))?;
        decompress(&self.passages[ord], book)
    }

    /// Writes `meta.json`, `codebook.bin`, `codes.bin` and `passages.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = DenseMeta {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            dim: self.dim,
            bits: self.codebook.as_ref().map_or(0, |c| c.bits()),
            num_centroids: self.num_centroids(),
            num_passages: self.passages.len(),
        };
        write_json(&dir.join("meta.json"), &meta)?;
        let keys: Vec<&str> = self.passages.iter().map(|p| p.key.as_str()).collect();
        write_json(&dir.join("passages.json"), &keys)?;

        if let Some(book) = &self.codebook {
            let mut buf = Vec::new();
            buf.extend_from_slice(CODEBOOK_MAGIC);
            buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
            buf.extend_from_slice(&(book.dim() as u32).to_le_bytes());
            buf.push(book.bits());
            buf.extend_from_slice(&(book.num_centroids() as u32).to_le_bytes());
            let mut put = |xs: &[f32]| xs.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
            put(book.centroids());
            for d in 0..book.dim() {
                put(book.boundaries(d));
            }
            for d in 0..book.dim() {
                put(book.values(d));
            }
            put(book.error_bound());
            let path = dir.join("codebook.bin");
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        }

        let path = dir.join("codes.bin");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        w.write_all(CODES_MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.passages.len() as u64).to_le_bytes()).map_err(io)?;
        for p in &self.passages {
            w.write_all(&(p.num_tokens() as u32).to_le_bytes()).map_err(io)?;
            for c in &p.centroid_ids {
                w.write_all(&c.to_le_bytes()).map_err(io)?;
            }
            w.write_all(&p.codes).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DenseMeta = read_json(&dir.join("meta.json"))?;
        if meta.format != FORMAT_NAME || meta.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT_NAME} v{FORMAT_VERSION}, found {} v{}",
                dir.display(),
                meta.format,
                meta.version
            )));
        }
        let keys: Vec<String> = read_json(&dir.join("passages.json"))?;
        if keys.len() != meta.num_passages {
            return Err(Error::Corrupt("passage table length disagrees with metadata".into()));
        }

        let codebook = if meta.num_centroids > 0 {
            let path = dir.join("codebook.bin");
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            Some(parse_codebook(&bytes)?)
        } else {
            None
        };
        let bits = codebook.as_ref().map_or(1, |c| c.bits());

        let path = dir.join("codes.bin");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut cur = Cursor::new(&bytes);
        if cur.take(4)? != CODES_MAGIC || cur.u32()? != FORMAT_VERSION {
            return Err(Error::Format("codes.bin: bad header".into()));
        }
        let count = cur.u64()? as usize;
        if count != keys.len() {
            return Err(Error::Corrupt("codes.bin passage count disagrees with metadata".into()));
        }
        let mut passages = Vec::with_capacity(count);
        for key in keys {
            let n = cur.u32()? as usize;
            let centroid_ids = (0..n).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
            let codes = cur.take(packed_len(n, meta.dim, bits))?.to_vec();
            passages.push(CompressedPassage {
                key,
                centroid_ids,
                codes,
            });
        }
        if !cur.at_end() {
            return Err(Error::Corrupt("trailing bytes in codes.bin".into()));
        }
        Self::from_parts(meta.dim, codebook, passages)
    }
}

#[derive(Serialize, Deserialize)]
struct DenseMeta {
    format: String,
    version: u32,
    dim: usize,
    bits: u8,
    num_centroids: usize,
    num_passages: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt("unexpected end of index file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn parse_codebook(bytes: &[u8]) -> Result<CentroidCodebook> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4)? != CODEBOOK_MAGIC || cur.u32()? != FORMAT_VERSION {
        return Err(Error::Format("codebook.bin: bad header".into()));
    }
    let dim = cur.u32()? as usize;
    let bits = cur.u8()?;
    let k = cur.u32()? as usize;
    if !(1..=8).contains(&bits) {
        return Err(Error::Corrupt(format!("codebook.bin: {bits} residual bits")));
    }
    let levels = 1usize << bits;
    let centroids = cur.f32s(k * dim)?;
    let boundaries = cur.f32s(dim * (levels - 1))?;
    let values = cur.f32s(dim * levels)?;
    let error_bound = cur.f32s(dim)?;
    if !cur.at_end() {
        return Err(Error::Corrupt("trailing bytes in codebook.bin".into()));
    }
    CentroidCodebook::from_parts(dim, bits, centroids, boundaries, values, error_bound)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassageHit {
    pub key: String,
    pub score: f32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub probe: Duration,
    pub approximate: Duration,
    pub exact: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenseSearch {
    /// Every exactly scored passage, best first, ties by key.
    pub hits: Vec<PassageHit>,
    /// Passages reached by centroid probing.
    pub candidates: usize,
    pub timings: StageTimings,
}

impl DenseSearch {
    /// Document ranking by best passage score.
    pub fn documents(&self) -> Vec<ScoredDoc> {
        maxp_aggregate(
            self.hits
                .iter()
                .map(|h| (doc_id_of_passage(&h.key), h.score as f64)),
        )
    }
}

fn by_score_then_ord(a: &(u32, f32), b: &(u32, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Three-stage late-interaction search.
///
/// 1. Each query token probes its `nprobe` best centroids (clamped to the
///    centroid count); passages holding any probed centroid are candidates.
/// 2. Candidates are ranked by MaxSim against their centroid vectors alone
///    and the best `candidate_cap` are kept.
/// 3. Kept passages are decompressed and scored with exact MaxSim.
pub fn search_dense(index: &DenseIndex, query: &TokenMatrix, params: &DenseIndexParams) -> Result<DenseSearch> {
    params.validate()?;
    if query.is_empty() {
        return Err(Error::InvalidArgument("query has no token vectors".into()));
    }
    let Some(book) = index.codebook.as_ref().filter(|_| !index.is_empty()) else {
        return Ok(DenseSearch::default());
    };
    if query.dim() != index.dim {
        return Err(Error::InvalidArgument(format!(
            "query dimension {} does not match index dimension {}",
            query.dim(),
            index.dim
        )));
    }
    let k = book.num_centroids();
    let nprobe = params.nprobe.min(k);

    let started = Instant::now();
    let centroid_scores: Vec<Vec<f32>> = query
        .rows()
        .map(|q| (0..k).map(|c| dot(q, book.centroid(c))).collect())
        .collect();
    let mut is_candidate = vec![false; index.len()];
    for row in &centroid_scores {
        let mut order: Vec<(u32, f32)> = row.iter().enumerate().map(|(c, s)| (c as u32, *s)).collect();
        if nprobe < k {
            order.select_nth_unstable_by(nprobe - 1, by_score_then_ord);
            order.truncate(nprobe);
        }
        for (c, _) in order {
            for &p in &index.ivf[c as usize] {
                is_candidate[p as usize] = true;
            }
        }
    }
    let candidates: Vec<u32> = (0..index.len() as u32).filter(|&p| is_candidate[p as usize]).collect();
    let probe = started.elapsed();

    let started = Instant::now();
    let mut approx: Vec<(u32, f32)> = candidates
        .par_iter()
        .map(|&p| {
            let ids = &index.passage_centroids[p as usize];
            let s: f32 = centroid_scores
                .iter()
                .map(|row| ids.iter().map(|&c| row[c as usize]).fold(f32::NEG_INFINITY, f32::max))
                .sum();
            (p, s)
        })
        .collect();
    if approx.len() > params.candidate_cap {
        approx.select_nth_unstable_by(params.candidate_cap - 1, by_score_then_ord);
        approx.truncate(params.candidate_cap);
    }
    let approximate = started.elapsed();

    let started = Instant::now();
    let mut exact: Vec<(u32, f32)> = approx
        .par_iter()
        .map(|&(p, _)| {
            let doc = decompress(&index.passages[p as usize], book)?;
            Ok((p, maxsim_unchecked(query, &doc)))
        })
        .collect::<Result<_>>()?;
    // ordinals follow key order, so this breaks ties by key
    exact.sort_by(by_score_then_ord);
    let hits = exact
        .into_iter()
        .map(|(p, score)| PassageHit {
            key: index.passages[p as usize].key.clone(),
            score,
        })
        .collect();
    Ok(DenseSearch {
        hits,
        candidates: candidates.len(),
        timings: StageTimings {
            probe,
            approximate,
            exact: started.elapsed(),
        },
    })
}

/// Document score is the maximum over its passages; descending, ties by id.
pub fn maxp_aggregate<I, S>(passage_scores: I) -> Vec<ScoredDoc>
where
    I: IntoIterator<Item = (S, f64)>,
    S: AsRef<str>,
{
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for (doc, score) in passage_scores {
        match best.get_mut(doc.as_ref()) {
            Some(s) => *s = s.max(score),
            None => {
                best.insert(doc.as_ref().to_string(), score);
            }
        }
    }
    let mut out: Vec<ScoredDoc> = best.into_iter().map(|(id, s)| ScoredDoc::new(id, s)).collect();
    sort_ranked(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::normalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_corpus(n: usize, dim: usize, seed: u64) -> TokenEmbeddings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = TokenEmbeddings::new(dim);
        for p in 0..n {
            let tokens = rng.gen_range(1..6);
            let mut data = Vec::new();
            for _ in 0..tokens {
                let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                normalize(&mut v);
                data.extend(v);
            }
            e.push(format!("d{}#{}", p / 2, p % 2), TokenMatrix::new(dim, data).unwrap()).unwrap();
        }
        e
    }

    #[test]
    fn single_centroid_scores_every_passage() {
        let e = random_corpus(30, 8, 1);
        let params = DenseIndexParams { num_centroids: Some(1), ..Default::default() };
        let index = DenseIndex::build(&e, &params).unwrap();
        let q = e.get("d3#1").unwrap();
        let res = search_dense(&index, q, &params).unwrap();
        assert_eq!(res.hits.len(), 30);
        assert_eq!(res.candidates, 30);
        let mut brute: Vec<(String, f32)> = (0..index.len())
            .map(|p| {
                let d = index.decompress_passage(p).unwrap();
                (index.passages()[p].key.clone(), maxsim_unchecked(q, &d))
            })
            .collect();
        brute.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let got: Vec<_> = res.hits.iter().map(|h| (h.key.clone(), h.score)).collect();
        assert_eq!(got, brute);
    }

    #[test]
    fn one_passage_corpus() {
        let e = random_corpus(1, 4, 2);
        let index = DenseIndex::build(&e, &DenseIndexParams::default()).unwrap();
        let q = e.get("d0#0").unwrap();
        let res = search_dense(&index, q, &DenseIndexParams::default()).unwrap();
        assert_eq!(res.hits.len(), 1);
        let exact = maxsim_unchecked(q, &index.decompress_passage(0).unwrap());
        assert_eq!(res.hits[0].score, exact);
    }

    #[test]
    fn empty_index_returns_nothing() {
        let e = TokenEmbeddings::new(4);
        let index = DenseIndex::build(&e, &DenseIndexParams::default()).unwrap();
        let q = TokenMatrix::new(4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(search_dense(&index, &q, &DenseIndexParams::default()).unwrap().hits.is_empty());
        assert!(search_dense(&index, &TokenMatrix::new(4, vec![]).unwrap(), &DenseIndexParams::default()).is_err());
    }

    #[test]
    fn candidate_cap_limits_exact_scoring() {
        let e = random_corpus(40, 8, 3);
        let params = DenseIndexParams { num_centroids: Some(4), nprobe: 4, candidate_cap: 7, ..Default::default() };
        let index = DenseIndex::build(&e, &params).unwrap();
        let res = search_dense(&index, e.get("d0#0").unwrap(), &params).unwrap();
        assert_eq!(res.hits.len(), 7);
        assert_eq!(res.candidates, 40);
    }

    #[test]
    fn save_load_is_byte_stable() {
        let e = random_corpus(25, 6, 4);
        let params = DenseIndexParams { num_centroids: Some(4), bits: 2, seed: 9, ..Default::default() };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let index = DenseIndex::build(&e, &params).unwrap();
        index.save(a.path()).unwrap();
        DenseIndex::build(&e, &params).unwrap().save(b.path()).unwrap();
        for f in ["meta.json", "passages.json", "codebook.bin", "codes.bin"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        assert_eq!(DenseIndex::load(a.path()).unwrap(), index);

        let mut codes = fs::read(a.path().join("codes.bin")).unwrap();
        codes.pop();
        fs::write(a.path().join("codes.bin"), codes).unwrap();
        assert!(DenseIndex::load(a.path()).is_err());
    }

    #[test]
    fn maxp_examples() {
        let ranked = maxp_aggregate([("d1", 0.2), ("d1", 0.9), ("d1", 0.5)]);
        assert_eq!(ranked, [ScoredDoc::new("d1", 0.9)]);
        let ranked = maxp_aggregate([("d2", 0.4), ("d1", 0.4)]);
        let ids: Vec<_> = ranked.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["d1", "d2"]);
        assert!(maxp_aggregate(Vec::<(&str, f64)>::new()).is_empty());
        let a = maxp_aggregate([("x", 0.1), ("y", 0.7), ("x", 0.8), ("y", 0.3)]);
        let b = maxp_aggregate([("y", 0.3), ("x", 0.8), ("y", 0.7), ("x", 0.1)]);
        assert_eq!(a, b);
    }
}
