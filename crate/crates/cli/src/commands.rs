//! Subcommand implementations. Every command loads and validates all of its
//! inputs before it writes anything.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use xlir_core::corpus::{form_query, ingest_collection, read_topics, DefaultTokenizer, Document, Tokenizer};
use xlir_core::dense::{load_embeddings, search_dense, DenseIndex, DenseIndexParams, TokenEmbeddings};
use xlir_core::distill::{mine_hard_passages, write_distill, DistillPair, TeacherScore};
use xlir_core::eval::{evaluate as evaluate_files, read_run, run_by_topic, run_entries, write_run, RunEntry};
use xlir_core::lexical::{search_lexical_sharded, InvertedIndex};
use xlir_core::psq::{load_table, prune_table, translate_doc, WeightedBag};
use xlir_core::shards::{
    build_dense_shards, build_lexical_shards, fuse_multilingual, merge_shard_results, plan_shards, select_shards,
    DateFilter, ShardPlan,
};
use xlir_core::synthetic::{generate, write_collection, SyntheticConfig};
use xlir_core::ScoredDoc;

use crate::config::ExperimentConfig;
use crate::{
    EvaluateArgs, FuseArgs, IndexDenseArgs, IndexLexicalArgs, MineDistillArgs, PsqTranslateArgs, SearchArgs,
    ShardPlanArgs, SynthArgs,
};

const PLAN_FILE: &str = "plan.json";

fn ms(started: Instant) -> String {
    format!("{:.3}", started.elapsed().as_secs_f64() * 1e3)
}

fn shard_dir(dir: &Path, shard: usize) -> PathBuf {
    dir.join(format!("shard-{shard:03}"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure!(parent.is_dir(), "output directory {} does not exist", parent.display());
    }
    Ok(())
}

fn ensure_input(path: &Path) -> Result<()> {
    ensure!(path.exists(), "input {} does not exist", path.display());
    Ok(())
}

fn load_documents(path: &Path, lang: Option<&str>) -> Result<Vec<Document>> {
    let mut docs = ingest_collection(path).with_context(|| format!("reading collection {}", path.display()))?;
    if let Some(lang) = lang {
        docs.retain(|d| d.lang == lang);
        ensure!(!docs.is_empty(), "no documents in language `{lang}`");
    }
    Ok(docs)
}

fn token_counts(doc: &Document, tokenizer: &impl Tokenizer) -> WeightedBag {
    WeightedBag::from_tokens(&tokenizer.tokenize(&doc.full_text()))
}

pub fn synth(args: &SynthArgs, _config: &ExperimentConfig, seed: u64) -> Result<()> {
    let cfg = SyntheticConfig {
        num_docs: args.docs,
        num_topics: args.topics,
        seed,
        ..Default::default()
    };
    let started = Instant::now();
    let collection = generate(&cfg)?;
    write_collection(&collection, &args.out)?;
    info!(
        "stage=synth docs={} topics={} passages={} elapsed_ms={}",
        collection.documents.len(),
        collection.topics.len(),
        collection.passage_embeddings.len(),
        ms(started)
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct BagRecord {
    id: String,
    lang: String,
    bag: WeightedBag,
}

pub fn psq_translate(args: &PsqTranslateArgs, config: &ExperimentConfig) -> Result<()> {
    ensure_input(&args.collection)?;
    ensure_input(&args.table)?;
    ensure_parent(&args.out)?;
    let started = Instant::now();
    let docs = load_documents(&args.collection, args.lang.as_deref())?;
    let mut table = load_table(&args.table).with_context(|| format!("reading table {}", args.table.display()))?;
    if config.psq.prune && !args.no_prune {
        let mass = args.cum_mass.unwrap_or(config.psq.cum_mass);
        let alts = args.max_alternatives.unwrap_or(config.psq.max_alternatives);
        ensure!(mass > 0.0 && mass <= 1.0, "--cum-mass must be in (0, 1]");
        ensure!(alts >= 1, "--max-alternatives must be at least 1");
        table = prune_table(&table, mass, alts)?;
    }
    let tokenizer = DefaultTokenizer::new();
    let records: Vec<String> = {
        use rayon::prelude::*;
        docs.par_iter()
            .map(|d| {
                let rec = BagRecord {
                    id: d.doc_id.clone(),
                    lang: d.lang.clone(),
                    bag: translate_doc(&token_counts(d, &tokenizer), &table),
                };
                serde_json::to_string(&rec).expect("bag record is serializable")
            })
            .collect()
    };
    let mut w = BufWriter::new(File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?);
    for line in &records {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    info!("stage=psq_translate docs={} sources={} elapsed_ms={}", docs.len(), table.len(), ms(started));
    Ok(())
}

fn read_bags(path: &Path, lang: Option<&str>) -> Result<Vec<(String, WeightedBag)>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BagRecord =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed bag record", path.display(), i + 1))?;
        if lang.is_none_or(|l| l == rec.lang) {
            out.push((rec.id, rec.bag));
        }
    }
    ensure!(!out.is_empty(), "no bags selected from {}", path.display());
    Ok(out)
}

fn prepare_output_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        ensure!(dir.is_dir(), "{} is not a directory", dir.display());
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn index_lexical(args: &IndexLexicalArgs, _config: &ExperimentConfig) -> Result<()> {
    let started = Instant::now();
    let bags = match (&args.input.collection, &args.input.bags) {
        (Some(collection), None) => {
            ensure_input(collection)?;
            let tokenizer = DefaultTokenizer::new();
            load_documents(collection, args.lang.as_deref())?
                .iter()
                .map(|d| (d.doc_id.clone(), token_counts(d, &tokenizer)))
                .collect()
        }
        (None, Some(bags)) => {
            ensure_input(bags)?;
            read_bags(bags, args.lang.as_deref())?
        }
        _ => bail!("give exactly one of --collection or --bags"),
    };
    let num_docs = bags.len();
    match &args.shard_plan {
        None => {
            let index = InvertedIndex::build(bags)?;
            prepare_output_dir(&args.out)?;
            index.save(&args.out)?;
            info!("stage=index_lexical docs={num_docs} terms={} shards=1 elapsed_ms={}", index.stats().terms.len(), ms(started));
        }
        Some(plan_path) => {
            ensure_input(plan_path)?;
            let plan = ShardPlan::load(plan_path)?;
            let shards = build_lexical_shards(bags, &plan)?;
            prepare_output_dir(&args.out)?;
            plan.save(&args.out.join(PLAN_FILE))?;
            for (i, shard) in shards.iter().enumerate() {
                let dir = shard_dir(&args.out, i);
                prepare_output_dir(&dir)?;
                shard.save(&dir)?;
            }
            info!("stage=index_lexical docs={num_docs} shards={} elapsed_ms={}", shards.len(), ms(started));
        }
    }
    Ok(())
}

fn dense_params(config: &ExperimentConfig, bits: Option<u8>, centroids: Option<usize>) -> Result<DenseIndexParams> {
    let mut p = config.dense;
    if let Some(b) = bits {
        p.bits = b;
    }
    if centroids.is_some() {
        p.num_centroids = centroids;
    }
    p.validate()?;
    Ok(p)
}

pub fn index_dense(args: &IndexDenseArgs, config: &ExperimentConfig) -> Result<()> {
    ensure_input(&args.embeddings)?;
    let params = dense_params(config, args.bits, args.centroids)?;
    let started = Instant::now();
    let embeddings = load_embeddings(&args.embeddings).with_context(|| format!("reading {}", args.embeddings.display()))?;
    match &args.shard_plan {
        None => {
            let index = DenseIndex::build(&embeddings, &params)?;
            prepare_output_dir(&args.out)?;
            index.save(&args.out)?;
            info!(
                "stage=index_dense passages={} tokens={} centroids={} bits={} elapsed_ms={}",
                index.len(),
                embeddings.total_tokens(),
                index.num_centroids(),
                params.bits,
                ms(started)
            );
        }
        Some(plan_path) => {
            ensure_input(plan_path)?;
            let plan = ShardPlan::load(plan_path)?;
            let shards = build_dense_shards(&embeddings, &plan, &params)?;
            prepare_output_dir(&args.out)?;
            plan.save(&args.out.join(PLAN_FILE))?;
            for (i, shard) in shards.iter().enumerate() {
                let dir = shard_dir(&args.out, i);
                prepare_output_dir(&dir)?;
                shard.save(&dir)?;
            }
            info!(
                "stage=index_dense passages={} shards={} bits={} elapsed_ms={}",
                embeddings.len(),
                shards.len(),
                params.bits,
                ms(started)
            );
        }
    }
    Ok(())
}

pub fn shard_plan(args: &ShardPlanArgs, config: &ExperimentConfig) -> Result<()> {
    ensure_input(&args.collection)?;
    ensure_parent(&args.out)?;
    let months = args.window_months.unwrap_or(config.shards.window_months);
    let docs = load_documents(&args.collection, None)?;
    let plan = plan_shards(&docs, months)?;
    plan.save(&args.out)?;
    let undated = docs.iter().filter(|d| d.date.is_none()).count();
    info!("stage=shard_plan docs={} shards={} undated={undated}", docs.len(), plan.num_shards());
    Ok(())
}

enum Engine {
    Lexical(Vec<InvertedIndex>),
    Dense(Vec<DenseIndex>),
}

struct LoadedIndex {
    engine: Engine,
    plan: Option<ShardPlan>,
}

fn index_format(dir: &Path) -> Result<String> {
    #[derive(Deserialize)]
    struct Meta {
        format: String,
    }
    let path = dir.join("meta.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let meta: Meta = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(meta.format)
}

fn load_index(dir: &Path) -> Result<LoadedIndex> {
    ensure_input(dir)?;
    let plan_path = dir.join(PLAN_FILE);
    let (plan, dirs) = if plan_path.exists() {
        let plan = ShardPlan::load(&plan_path)?;
        let dirs: Vec<PathBuf> = (0..plan.num_shards()).map(|i| shard_dir(dir, i)).collect();
        (Some(plan), dirs)
    } else {
        (None, vec![dir.to_path_buf()])
    };
    let format = index_format(&dirs[0])?;
    let engine = match format.as_str() {
        "xlir-lexical" => Engine::Lexical(dirs.iter().map(|d| InvertedIndex::load(d)).collect::<Result<_, _>>()?),
        "xlir-dense" => Engine::Dense(dirs.iter().map(|d| DenseIndex::load(d)).collect::<Result<_, _>>()?),
        other => bail!("{}: unknown index format `{other}`", dir.display()),
    };
    Ok(LoadedIndex { engine, plan })
}

pub fn search(args: &SearchArgs, config: &ExperimentConfig) -> Result<()> {
    ensure_input(&args.topics)?;
    ensure_parent(&args.out)?;
    let s = &config.search;
    let variant = args.variant.unwrap_or(s.variant);
    let scorer = args.scorer.unwrap_or(s.scorer);
    let rm3 = args.rm3 || s.rm3;
    let k = args.k.unwrap_or(s.k);
    let date_filter = args.date_filter || s.date_filter;
    let tag = args.tag.clone().unwrap_or_else(|| s.run_tag.clone());
    ensure!(k >= 1, "--k must be at least 1");
    let mut dense = config.dense;
    if let Some(n) = args.nprobe {
        dense.nprobe = n;
    }
    if let Some(c) = args.candidate_cap {
        dense.candidate_cap = c;
    }
    dense.validate()?;
    config.lexical.validate()?;

    let started = Instant::now();
    let topics = read_topics(&args.topics).with_context(|| format!("reading topics {}", args.topics.display()))?;
    let loaded = load_index(&args.index)?;
    ensure!(
        !date_filter || loaded.plan.is_some(),
        "--date-filter needs a sharded index (built with --shard-plan)"
    );
    let queries: Option<TokenEmbeddings> = match (&loaded.engine, &args.queries) {
        (Engine::Dense(_), None) => bail!("dense search needs --queries"),
        (Engine::Dense(_), Some(q)) => {
            ensure_input(q)?;
            let q = load_embeddings(q).with_context(|| format!("reading {}", q.display()))?;
            if let Some(t) = topics.iter().find(|t| q.get(&t.topic_id).is_none()) {
                bail!("no query embeddings for topic `{}`", t.topic_id);
            }
            Some(q)
        }
        (Engine::Lexical(_), Some(_)) => bail!("--queries applies only to dense indexes"),
        (Engine::Lexical(_), None) => None,
    };
    info!("stage=load_index topics={} elapsed_ms={}", topics.len(), ms(started));

    let tokenizer = DefaultTokenizer::new();
    let mut entries: Vec<RunEntry> = Vec::new();
    let (mut probe, mut approx, mut exact) = (0.0, 0.0, 0.0);
    let search_started = Instant::now();
    for topic in &topics {
        let shards: Vec<usize> = match (&loaded.plan, date_filter) {
            (Some(plan), true) => select_shards(plan, &DateFilter::from_topic(topic)),
            (Some(plan), false) => (0..plan.num_shards()).collect(),
            (None, _) => vec![0],
        };
        let ranked: Vec<ScoredDoc> = match &loaded.engine {
            Engine::Lexical(indexes) => {
                let terms = tokenizer.tokenize(&form_query(topic, variant)?);
                let selected: Vec<&InvertedIndex> = shards.iter().map(|&i| &indexes[i]).collect();
                if selected.is_empty() {
                    Vec::new()
                } else {
                    search_lexical_sharded(&selected, &terms, scorer, rm3, k, &config.lexical)
                        .with_context(|| format!("topic {}", topic.topic_id))?
                }
            }
            Engine::Dense(indexes) => {
                let q = queries.as_ref().and_then(|q| q.get(&topic.topic_id)).expect("checked above");
                let mut per_shard = Vec::with_capacity(shards.len());
                for &i in &shards {
                    let r = search_dense(&indexes[i], q, &dense)?;
                    probe += r.timings.probe.as_secs_f64();
                    approx += r.timings.approximate.as_secs_f64();
                    exact += r.timings.exact.as_secs_f64();
                    per_shard.push(r.documents());
                }
                merge_shard_results(per_shard, k)
            }
        };
        entries.extend(run_entries(&topic.topic_id, &ranked, &tag));
    }
    match loaded.engine {
        Engine::Lexical(_) => info!(
            "stage=search engine=lexical scorer={scorer} rm3={rm3} variant={variant} topics={} elapsed_ms={}",
            topics.len(),
            ms(search_started)
        ),
        Engine::Dense(_) => info!(
            "stage=search engine=dense nprobe={} candidate_cap={} topics={} stage1_ms={:.3} stage2_ms={:.3} stage3_ms={:.3} elapsed_ms={}",
            dense.nprobe,
            dense.candidate_cap,
            topics.len(),
            probe * 1e3,
            approx * 1e3,
            exact * 1e3,
            ms(search_started)
        ),
    }
    write_run(&args.out, &entries)?;
    info!("stage=write_run entries={} path={}", entries.len(), args.out.display());
    Ok(())
}

pub fn fuse(args: &FuseArgs, config: &ExperimentConfig) -> Result<()> {
    ensure_parent(&args.out)?;
    let k = args.k.unwrap_or(config.search.k);
    ensure!(k >= 1, "--k must be at least 1");
    let norm = args.norm.unwrap_or(config.search.fusion);
    let tag = args.tag.clone().unwrap_or_else(|| config.search.run_tag.clone());
    let started = Instant::now();
    let mut runs = Vec::with_capacity(args.runs.len());
    for path in &args.runs {
        ensure_input(path)?;
        let entries = read_run(path).with_context(|| format!("reading run {}", path.display()))?;
        runs.push(run_by_topic(&entries));
    }
    let mut topics: Vec<&String> = runs.iter().flat_map(|r| r.keys()).collect();
    topics.sort();
    topics.dedup();
    let mut entries = Vec::new();
    for topic in topics {
        let per_lang: Vec<Vec<ScoredDoc>> = runs.iter().filter_map(|r| r.get(topic).cloned()).collect();
        let fused = fuse_multilingual(&per_lang, k, norm).with_context(|| format!("topic {topic}"))?;
        entries.extend(run_entries(topic, &fused, &tag));
    }
    write_run(&args.out, &entries)?;
    info!("stage=fuse runs={} entries={} elapsed_ms={}", args.runs.len(), entries.len(), ms(started));
    Ok(())
}

fn read_teacher(path: &Path) -> Result<HashMap<(String, String), f64>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [q, p, s] = fields[..] else {
            bail!("{}:{}: expected 3 tab-separated fields", path.display(), i + 1);
        };
        let score: f64 = s.trim().parse().map_err(|_| anyhow!("{}:{}: bad score `{s}`", path.display(), i + 1))?;
        ensure!(score.is_finite(), "{}:{}: non-finite score", path.display(), i + 1);
        out.insert((q.to_string(), p.to_string()), score);
    }
    Ok(out)
}

pub fn mine_distill(args: &MineDistillArgs, config: &ExperimentConfig) -> Result<()> {
    ensure_input(&args.index)?;
    ensure_input(&args.queries)?;
    ensure_parent(&args.out)?;
    ensure!(args.k >= 2, "--k must be at least 2");
    let started = Instant::now();
    let loaded = load_index(&args.index)?;
    let Engine::Dense(indexes) = loaded.engine else {
        bail!("{} is not a dense index", args.index.display());
    };
    ensure!(loaded.plan.is_none(), "mining needs an unsharded dense index");
    let index = &indexes[0];
    let queries = load_embeddings(&args.queries)?;
    let teacher = match &args.teacher {
        Some(p) => {
            ensure_input(p)?;
            Some(read_teacher(p)?)
        }
        None => None,
    };
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for (qid, q) in queries.iter() {
        let hits = mine_hard_passages(index, q, args.k, &config.dense)?;
        let mut passages = Vec::with_capacity(hits.len());
        for h in hits {
            let score = match &teacher {
                Some(t) => match t.get(&(qid.to_string(), h.key.clone())) {
                    Some(&s) => s,
                    None => continue,
                },
                None => h.score as f64,
            };
            passages.push(TeacherScore { pid: h.key, teacher: score });
        }
        if passages.len() < 2 {
            skipped += 1;
            warn!("stage=mine_distill query={qid} passages={} skipped=true", passages.len());
            continue;
        }
        pairs.push(DistillPair {
            query_id: qid.to_string(),
            passages,
            student: None,
        });
    }
    pairs.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    write_distill(&pairs, &args.out)?;
    info!(
        "stage=mine_distill queries={} skipped={skipped} k={} elapsed_ms={}",
        pairs.len(),
        args.k,
        ms(started)
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    ensure_input(&args.run)?;
    ensure_input(&args.qrels)?;
    if let Some(out) = &args.out {
        ensure_parent(out)?;
    }
    let report = evaluate_files(&args.run, &args.qrels)
        .with_context(|| format!("evaluating {} against {}", args.run.display(), args.qrels.display()))?;
    let table = report.to_table();
    print!("{table}");
    for t in &report.unjudged_topics {
        warn!("stage=evaluate unjudged_topic={t}");
    }
    info!(
        "stage=evaluate topics={} ndcg@{}={:.4} recall@{}={:.4}",
        report.topics.len(),
        report.ndcg_depth,
        report.mean_ndcg,
        report.recall_depth,
        report.mean_recall
    );
    if let Some(out) = &args.out {
        let text = if out.extension().is_some_and(|e| e == "json") {
            serde_json::to_string_pretty(&report)? + "\n"
        } else {
            table
        };
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
