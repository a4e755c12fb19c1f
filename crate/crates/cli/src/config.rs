//! Experiment configuration file.
//!
//! TOML with one table per stage. Unknown keys are rejected. Command-line
//! flags override values from the file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use xlir_core::corpus::{QueryVariant, DEFAULT_PASSAGE_LEN, DEFAULT_PASSAGE_STRIDE};
use xlir_core::dense::DenseIndexParams;
use xlir_core::lexical::{LexicalParams, Scorer};
use xlir_core::psq::{DEFAULT_PRUNE_ALTERNATIVES, DEFAULT_PRUNE_MASS};
use xlir_core::shards::{FusionNorm, DEFAULT_WINDOW_MONTHS};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub tokenizer: TokenizerConfig,
    pub psq: PsqConfig,
    pub passages: PassageConfig,
    pub lexical: LexicalParams,
    pub dense: DenseIndexParams,
    pub shards: ShardConfig,
    pub search: SearchConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    /// Only `identity` is built in.
    pub stemmer: String,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { stemmer: "identity".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsqConfig {
    pub prune: bool,
    pub cum_mass: f64,
    pub max_alternatives: usize,
}

impl Default for PsqConfig {
    fn default() -> Self {
        Self {
            prune: true,
            cum_mass: DEFAULT_PRUNE_MASS,
            max_alternatives: DEFAULT_PRUNE_ALTERNATIVES,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassageConfig {
    pub length: usize,
    pub stride: usize,
}

impl Default for PassageConfig {
    fn default() -> Self {
        Self {
            length: DEFAULT_PASSAGE_LEN,
            stride: DEFAULT_PASSAGE_STRIDE,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShardConfig {
    pub window_months: u32,
}

impl Default for ShardConfig {
    fn default() -> Self {
        Self {
            window_months: DEFAULT_WINDOW_MONTHS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub variant: QueryVariant,
    pub scorer: Scorer,
    pub rm3: bool,
    pub k: usize,
    pub run_tag: String,
    pub date_filter: bool,
    pub fusion: FusionNorm,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            variant: QueryVariant::TitleDescription,
            scorer: Scorer::Hmm,
            rm3: false,
            k: 1000,
            run_tag: "xlir".into(),
            date_filter: false,
            fusion: FusionNorm::Raw,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokenizer.stemmer != "identity" {
            bail!("unsupported stemmer `{}` (only `identity` is available)", self.tokenizer.stemmer);
        }
        if !(self.psq.cum_mass > 0.0 && self.psq.cum_mass <= 1.0) {
            bail!("psq.cum_mass must be in (0, 1]");
        }
        if self.psq.max_alternatives == 0 {
            bail!("psq.max_alternatives must be at least 1");
        }
        if self.passages.length == 0 || self.passages.stride == 0 || self.passages.stride > self.passages.length {
            bail!("passages.stride must be in 1..=passages.length");
        }
        if self.shards.window_months == 0 {
            bail!("shards.window_months must be at least 1");
        }
        if self.search.k == 0 {
            bail!("search.k must be at least 1");
        }
        self.lexical.validate()?;
        self.dense.validate()?;
        Ok(())
    }
}
