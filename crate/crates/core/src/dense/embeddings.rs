//! Token embedding matrices and the binary embedding file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "LIEMB" | version: u32 | dim: u32 | count: u64
//! count x { key_len: u16 | key: utf-8 | tokens: u32 | tokens*dim f32 }
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 5] = b"LIEMB";
pub const EMBEDDING_VERSION: u32 = 1;
/// Allowed deviation of a token vector's L2 norm from 1.
pub const NORM_TOLERANCE: f32 = 1e-4;

/// Row-major `rows x dim` matrix of token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl TokenMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::InvalidArgument(format!("row of length {} in a {dim}-d matrix", r.len())));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Index of the first row whose norm is off by more than `tol`.
    pub fn first_non_unit_row(&self, tol: f32) -> Option<(usize, f32)> {
        self.rows()
            .map(|r| r.iter().map(|x| x * x).sum::<f32>().sqrt())
            .enumerate()
            .find(|(_, n)| (n - 1.0).abs() > tol)
    }
}

/// Keyed token matrices sharing one dimension, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    dim: usize,
    entries: Vec<(String, TokenMatrix)>,
    positions: HashMap<String, usize>,
}

impl TokenEmbeddings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            positions: HashMap::new(),
        }
    }

    /// Appends a matrix, checking dimension, key uniqueness, token count
    /// and unit norms.
    pub fn push(&mut self, key: impl Into<String>, matrix: TokenMatrix) -> Result<()> {
        let key = key.into();
        if matrix.dim() != self.dim {
            return Err(Error::Validation(format!(
                "`{key}` has dimension {}, expected {}",
                matrix.dim(),
                self.dim
            )));
        }
        if matrix.is_empty() {
            return Err(Error::Validation(format!("`{key}` has no token vectors")));
        }
        if let Some((row, norm)) = matrix.first_non_unit_row(NORM_TOLERANCE) {
            return Err(Error::Validation(format!(
                "`{key}` token {row} has norm {norm}, expected unit length"
            )));
        }
        if self.positions.contains_key(&key) {
            return Err(Error::DuplicateId(key));
        }
        self.positions.insert(key.clone(), self.entries.len());
        self.entries.push((key, matrix));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.num_rows()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TokenMatrix)> {
        self.entries.iter().map(|(k, m)| (k.as_str(), m))
    }

    pub fn get(&self, key: &str) -> Option<&TokenMatrix> {
        self.positions.get(key).map(|&i| &self.entries[i].1)
    }

    /// Entries whose key satisfies `keep`, in the same order.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut out = Self::new(self.dim);
        for (k, m) in self.entries.iter().filter(|(k, _)| keep(k)) {
            out.positions.insert(k.clone(), out.entries.len());
            out.entries.push((k.clone(), m.clone()));
        }
        out
    }
}

pub fn write_embeddings(embeddings: &TokenEmbeddings, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(EMBEDDING_MAGIC).map_err(io)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(embeddings.dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(embeddings.len() as u64).to_le_bytes()).map_err(io)?;
    for (key, m) in embeddings.iter() {
        let len = u16::try_from(key.len())
            .map_err(|_| Error::InvalidArgument(format!("key `{key}` longer than 65535 bytes")))?;
        w.write_all(&len.to_le_bytes()).map_err(io)?;
        w.write_all(key.as_bytes()).map_err(io)?;
        w.write_all(&(m.num_rows() as u32).to_le_bytes()).map_err(io)?;
        for x in m.as_slice() {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated embedding file reading {what}: {e}")))?;
        Ok(buf)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        self.bytes::<2>(what).map(u16::from_le_bytes)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.bytes::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.bytes::<8>(what).map(u64::from_le_bytes)
    }

    fn vec(&mut self, len: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated embedding file reading {what}: {e}")))?;
        Ok(buf)
    }
}

/// Reads and validates an embedding file.
pub fn load_embeddings(path: &Path) -> Result<TokenEmbeddings> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    let magic = r.bytes::<5>("magic")?;
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::Format(format!("{}: bad magic {magic:?}", path.display())));
    }
    let version = r.u32("version")?;
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let dim = r.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::Format("embedding dimension is zero".into()));
    }
    let count = r.u64("count")?;
    let mut out = TokenEmbeddings::new(dim);
    for _ in 0..count {
        let key_len = r.u16("key length")? as usize;
        let key = String::from_utf8(r.vec(key_len, "key")?)
            .map_err(|_| Error::Format("passage key is not utf-8".into()))?;
        let tokens = r.u32("token count")? as usize;
        let raw = r.vec(tokens * dim * 4, "vectors")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(key, TokenMatrix::new(dim, data)?)?;
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format(format!("{}: trailing bytes after {count} records", path.display())));
    }
    Ok(out)
}
