use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use xlir_core::corpus::QueryVariant;
use xlir_core::lexical::Scorer;
use xlir_core::shards::FusionNorm;

mod commands;
mod config;

use config::ExperimentConfig;

/// Cross-language retrieval experiments: PSQ lexical indexes, compressed
/// late-interaction indexes, date shards, fusion and evaluation.
#[derive(Parser, Debug)]
#[command(name = "xlir", version)]
struct Cli {
    /// TOML experiment config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the seeded synthetic tri-lingual collection.
    Synth(SynthArgs),
    /// Translate documents into query-language weighted bags.
    PsqTranslate(PsqTranslateArgs),
    /// Build a lexical index from raw documents or translated bags.
    IndexLexical(IndexLexicalArgs),
    /// Build a compressed late-interaction index from passage embeddings.
    IndexDense(IndexDenseArgs),
    /// Assign documents to date-windowed shards.
    ShardPlan(ShardPlanArgs),
    /// Rank documents for every topic and write a TREC run.
    Search(SearchArgs),
    /// Merge per-language runs into one multilingual run.
    Fuse(FuseArgs),
    /// Mine top passages per query as distillation training data.
    MineDistill(MineDistillArgs),
    /// Score a run against qrels with nDCG@20 and R@1000.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub docs: usize,
    #[arg(long, default_value_t = 10)]
    pub topics: usize,
}

#[derive(Args, Debug)]
pub struct PsqTranslateArgs {
    /// Document collection (JSON lines).
    #[arg(long)]
    pub collection: PathBuf,
    /// Translation table (source, target, probability TSV).
    #[arg(long)]
    pub table: PathBuf,
    /// Keep only documents in this language.
    #[arg(long)]
    pub lang: Option<String>,
    /// Use the table as is.
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long)]
    pub cum_mass: Option<f64>,
    #[arg(long)]
    pub max_alternatives: Option<usize>,
    /// Output bags (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[group(id = "input", required = true, multiple = false)]
pub struct IndexInput {
    /// Raw documents, indexed by token counts.
    #[arg(long, group = "input")]
    pub collection: Option<PathBuf>,
    /// Bags written by `psq-translate`.
    #[arg(long, group = "input")]
    pub bags: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IndexLexicalArgs {
    #[command(flatten)]
    pub input: IndexInput,
    /// Keep only documents in this language.
    #[arg(long)]
    pub lang: Option<String>,
    /// Build one shard per window of this plan.
    #[arg(long)]
    pub shard_plan: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IndexDenseArgs {
    /// Passage token embeddings.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub shard_plan: Option<PathBuf>,
    #[arg(long)]
    pub bits: Option<u8>,
    #[arg(long)]
    pub centroids: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ShardPlanArgs {
    #[arg(long)]
    pub collection: PathBuf,
    #[arg(long)]
    pub window_months: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Lexical or dense index directory, sharded or not.
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    /// Query token embeddings keyed by topic id; required for dense indexes.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// T, D or TD.
    #[arg(long)]
    pub variant: Option<QueryVariant>,
    /// bm25 or hmm.
    #[arg(long)]
    pub scorer: Option<Scorer>,
    #[arg(long)]
    pub rm3: bool,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub nprobe: Option<usize>,
    #[arg(long)]
    pub candidate_cap: Option<usize>,
    /// Search only shards overlapping each topic's date range.
    #[arg(long)]
    pub date_filter: bool,
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// One run per language; document ids must not overlap.
    #[arg(required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// raw or minmax.
    #[arg(long)]
    pub norm: Option<FusionNorm>,
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MineDistillArgs {
    /// Dense index directory (not sharded).
    #[arg(long)]
    pub index: PathBuf,
    /// Query token embeddings keyed by query id.
    #[arg(long)]
    pub queries: PathBuf,
    /// Teacher scores as `query<TAB>passage<TAB>score`; without it the
    /// engine's scores are used.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long, default_value_t = xlir_core::distill::DEFAULT_MINE_DEPTH)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Also write the report here (JSON when the name ends in .json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| writeln!(buf, "level={} {}", record.level().as_str().to_lowercase(), record.args()))
        .init();
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.dense.seed = seed;
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring worker threads")?;
    }
    let seed = cli.seed.unwrap_or(config.dense.seed);
    match cli.command {
        Command::Synth(a) => commands::synth(&a, &config, seed),
        Command::PsqTranslate(a) => commands::psq_translate(&a, &config),
        Command::IndexLexical(a) => commands::index_lexical(&a, &config),
        Command::IndexDense(a) => commands::index_dense(&a, &config),
        Command::ShardPlan(a) => commands::shard_plan(&a, &config),
        Command::Search(a) => commands::search(&a, &config),
        Command::Fuse(a) => commands::fuse(&a, &config),
        Command::MineDistill(a) => commands::mine_distill(&a, &config),
        Command::Evaluate(a) => commands::evaluate(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
