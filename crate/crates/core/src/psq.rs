//! Probabilistic structured queries applied on the document side.
//!
//! Each document-language token count is spread over query-language tokens
//! according to a translation table, giving a bag of expected counts that is
//! then indexed like an ordinary document.

use std::collections::btree_map::{self, BTreeMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on per-source probability mass.
pub const MASS_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_PRUNE_MASS: f64 = 0.99;
pub const DEFAULT_PRUNE_ALTERNATIVES: usize = 64;

/// Source token -> target alternatives sorted by descending probability.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranslationTable {
    rows: BTreeMap<String, Vec<(String, f64)>>,
}

impl TranslationTable {
    /// Builds a table from `(source, target, prob)` triples, enforcing the
    /// probability range, per-source mass and target uniqueness.
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: Into<String>,
    {
        let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (src, tgt, p) in rows {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Validation(format!("probability {p} outside (0, 1]")));
            }
            grouped.entry(src.into()).or_default().push((tgt.into(), p));
        }
        for (src, targets) in grouped.iter_mut() {
            validate_row(src, targets)?;
        }
        Ok(Self { rows: grouped })
    }

    pub fn get(&self, source: &str) -> Option<&[(String, f64)]> {
        self.rows.get(source).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.rows.iter().map(|(s, t)| (s.as_str(), t.as_slice()))
    }

    /// Identity translation over the given vocabulary.
    pub fn identity<'a>(vocab: impl IntoIterator<Item = &'a str>) -> Self {
        let rows = vocab
            .into_iter()
            .map(|t| (t.to_string(), vec![(t.to_string(), 1.0)]))
            .collect();
        Self { rows }
    }
}

fn validate_row(src: &str, targets: &mut [(String, f64)]) -> Result<()> {
    targets.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut names: Vec<&str> = targets.iter().map(|(t, _)| t.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Validation(format!(
            "source `{src}` lists target `{}` twice",
            w[0]
        )));
    }
    let mass: f64 = targets.iter().map(|(_, p)| p).sum();
    if mass > 1.0 + MASS_TOLERANCE {
        return Err(Error::Validation(format!(
            "source `{src}` has probability mass {mass} > 1"
        )));
    }
    Ok(())
}

/// Reads a `source<TAB>target<TAB>prob` table.
pub fn load_table(path: &Path) -> Result<TranslationTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [src, tgt, prob] = fields[..] else {
            return Err(Error::parse(path, i + 1, format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let p: f64 = prob
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad probability `{prob}`")))?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::parse(path, i + 1, format!("probability {p} outside (0, 1]")));
        }
        rows.push((src.to_string(), tgt.to_string(), p));
    }
    TranslationTable::from_rows(rows)
}

/// Writes a table in the TSV format read by [`load_table`].
pub fn write_table(table: &TranslationTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (src, targets) in table.iter() {
        for (tgt, p) in targets {
            out.push_str(&format!("{src}\t{tgt}\t{p}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Keeps, per source, the most probable targets until their cumulative mass
/// reaches `cum_mass` or `max_alts` are kept, then renormalizes to 1.
pub fn prune_table(table: &TranslationTable, cum_mass: f64, max_alts: usize) -> Result<TranslationTable> {
    if !(cum_mass > 0.0 && cum_mass <= 1.0) {
        return Err(Error::InvalidArgument(format!("cum_mass {cum_mass} outside (0, 1]")));
    }
    if max_alts == 0 {
        return Err(Error::InvalidArgument("max_alts must be at least 1".into()));
    }
    let mut rows = BTreeMap::new();
    for (src, targets) in table.iter() {
        let mut kept = Vec::new();
        let mut mass = 0.0;
        for (tgt, p) in targets {
            kept.push((tgt.clone(), *p));
            mass += p;
            if mass >= cum_mass || kept.len() == max_alts {
                break;
            }
        }
        if kept.is_empty() || mass <= 0.0 {
            continue;
        }
        for (_, p) in kept.iter_mut() {
            *p /= mass;
        }
        rows.insert(src.to_string(), kept);
    }
    Ok(TranslationTable { rows })
}

/// Term -> positive weight. Zero weights are never stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightedBag(BTreeMap<String, f64>);

impl WeightedBag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `weight` to `term`; non-positive amounts are ignored.
    pub fn add(&mut self, term: &str, weight: f64) {
        if weight > 0.0 {
            match self.0.get_mut(term) {
                Some(w) => *w += weight,
                None => {
                    self.0.insert(term.to_string(), weight);
                }
            }
        }
    }

    pub fn get(&self, term: &str) -> f64 {
        self.0.get(term).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> btree_map::Iter<'_, String, f64> {
        self.0.iter()
    }

    /// Raw counts of a token sequence.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut bag = Self::new();
        for t in tokens {
            bag.add(t.as_ref(), 1.0);
        }
        bag
    }

    /// Weight-wise sum.
    pub fn merge(&mut self, other: &WeightedBag) {
        for (t, w) in other.iter() {
            self.add(t, *w);
        }
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for WeightedBag {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut bag = Self::new();
        for (t, w) in iter {
            bag.add(&t.into(), w);
        }
        bag
    }
}

impl<'a> IntoIterator for &'a WeightedBag {
    type Item = (&'a String, &'a f64);
    type IntoIter = btree_map::Iter<'a, String, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Maps document-language counts to expected query-language counts:
/// `weight(t) = sum_s count(s) * P(t | s)`. Tokens missing from the table
/// contribute nothing.
pub fn translate_doc(counts: &WeightedBag, table: &TranslationTable) -> WeightedBag {
    let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
    for (src, count) in counts {
        if let Some(targets) = table.get(src) {
            for (tgt, p) in targets {
                *acc.entry(tgt.as_str()).or_insert(0.0) += count * p;
            }
        }
    }
    acc.into_iter().collect()
}
