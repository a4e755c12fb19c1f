//! Seeded synthetic multilingual collection for tests, benchmarks and the
//! end-to-end pipeline.
//!
//! Every language shares one concept inventory. Concept `i` is written
//! `en{i}` in topics and `{prefix}{i}` in a document language, and the
//! translation table maps each document word mostly to its own concept with
//! some mass on two confusable ones. Token embeddings are the concept vector
//! plus uniform noise, normalized.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{document_to_json, form_query, split_passages, topic_to_json, DefaultTokenizer, Document, QueryVariant, Tokenizer, Topic};
use crate::dense::{normalize, write_embeddings, TokenEmbeddings, TokenMatrix};
use crate::error::{Error, Result};
use crate::eval::{write_qrels, Qrels};
use crate::psq::{write_table, TranslationTable};

/// Document-language codes and the word prefix used for each.
pub const LANGUAGES: [(&str, &str); 3] = [("fas", "fa"), ("rus", "ru"), ("zho", "zh")];

pub const QUERY_WORD_PREFIX: &str = "en";

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub num_docs: usize,
    pub num_topics: usize,
    pub num_concepts: usize,
    pub dim: usize,
    /// Token vectors kept per passage, most frequent words first.
    pub vectors_per_passage: usize,
    pub passage_len: usize,
    pub passage_stride: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_docs: 500,
            num_topics: 10,
            num_concepts: 400,
            dim: 32,
            vectors_per_passage: 12,
            passage_len: crate::corpus::DEFAULT_PASSAGE_LEN,
            passage_stride: crate::corpus::DEFAULT_PASSAGE_STRIDE,
            seed: 0,
        }
    }
}

pub struct SyntheticCollection {
    pub documents: Vec<Document>,
    pub topics: Vec<Topic>,
    pub table: TranslationTable,
    pub qrels: Qrels,
    /// Keyed by passage key.
    pub passage_embeddings: TokenEmbeddings,
    /// Keyed by topic id, built from the title+description query.
    pub query_embeddings: TokenEmbeddings,
}

const TOPIC_CONCEPTS: usize = 6;
const NOISE: f32 = 0.35;

fn concept_of(word: &str) -> Option<usize> {
    let digits = word.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    if digits.len() == word.len() || digits.is_empty() {
        return None;
    }
    digits.parse().ok()
}

struct Generator {
    cfg: SyntheticConfig,
    rng: ChaCha8Rng,
    concept_vectors: Vec<Vec<f32>>,
}

impl Generator {
    fn embed(&mut self, concept: usize) -> Vec<f32> {
        let mut v: Vec<f32> = self.concept_vectors[concept]
            .iter()
            .map(|x| x + NOISE * self.rng.gen_range(-1.0f32..1.0))
            .collect();
        normalize(&mut v);
        v
    }

    fn unit_vector(&mut self) -> Vec<f32> {
        loop {
            let mut v: Vec<f32> = (0..self.cfg.dim).map(|_| self.rng.gen_range(-1.0f32..1.0)).collect();
            if normalize(&mut v) {
                return v;
            }
        }
    }

    /// Distinct words by descending count, then name.
    fn salient_words(tokens: &[String], limit: usize) -> Vec<usize> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokens {
            if let Some(c) = concept_of(t) {
                *counts.entry(c).or_default() += 1;
            }
        }
        let mut ranked: Vec<(usize, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.into_iter().take(limit).map(|(c, _)| c).collect()
    }

    fn matrix(&mut self, concepts: &[usize]) -> Result<TokenMatrix> {
        let rows: Vec<Vec<f32>> = concepts.iter().map(|&c| self.embed(c)).collect();
        TokenMatrix::from_rows(self.cfg.dim, &rows)
    }
}

/// Generates a collection deterministically from `cfg.seed`.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCollection> {
    let min_concepts = cfg.num_topics * TOPIC_CONCEPTS + 20;
    if cfg.num_concepts < min_concepts {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_concepts} concepts for {} topics",
            cfg.num_topics
        )));
    }
    if cfg.num_docs == 0 || cfg.dim == 0 || cfg.vectors_per_passage == 0 {
        return Err(Error::InvalidArgument("document count, dimension and vectors per passage must be positive".into()));
    }
    let mut g = Generator {
        cfg: cfg.clone(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        concept_vectors: Vec::new(),
    };
    g.concept_vectors = (0..cfg.num_concepts).map(|_| g.unit_vector()).collect();

    let table = translation_table(&mut g)?;

    let first_day = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    let last_day = NaiveDate::from_ymd_opt(2022, 12, 31).expect("valid date");
    let span_days = (last_day - first_day).num_days();

    // Topic concepts are disjoint and drawn from the less frequent tail.
    let mut pool: Vec<usize> = (20..cfg.num_concepts).collect();
    pool.shuffle(&mut g.rng);
    let topics_concepts: Vec<Vec<usize>> = (0..cfg.num_topics)
        .map(|t| pool[t * TOPIC_CONCEPTS..(t + 1) * TOPIC_CONCEPTS].to_vec())
        .collect();

    let mut topics = Vec::with_capacity(cfg.num_topics);
    for (t, concepts) in topics_concepts.iter().enumerate() {
        let word = |c: &usize| format!("{QUERY_WORD_PREFIX}{c}");
        let title: Vec<String> = concepts[..2].iter().map(word).collect();
        let desc: Vec<String> = concepts[2..].iter().map(word).collect();
        let (start_date, end_date) = match t % 4 {
            0 => (None, None),
            1 => {
                let s = first_day + Duration::days(g.rng.gen_range(0..span_days / 2));
                (Some(s), Some(s + Duration::days(g.rng.gen_range(90..365))))
            }
            2 => (Some(first_day + Duration::days(g.rng.gen_range(180..span_days - 180))), None),
            _ => (None, Some(first_day + Duration::days(g.rng.gen_range(180..span_days - 180)))),
        };
        topics.push(Topic {
            topic_id: format!("{}", 200 + t),
            title: title.join(" "),
            description: format!("documents about {} and {}", desc[..2].join(" "), desc[2..].join(" ")),
            start_date,
            end_date,
        });
    }

    let background: Vec<f64> = (0..cfg.num_concepts).map(|i| 1.0 / (i as f64 + 2.0)).collect();
    let background = WeightedIndex::new(&background).expect("positive weights");

    let tokenizer = DefaultTokenizer::new();
    let mut documents = Vec::with_capacity(cfg.num_docs);
    let mut qrels = Qrels::new();
    let mut passage_embeddings = TokenEmbeddings::new(cfg.dim);
    for d in 0..cfg.num_docs {
        let (lang, prefix) = LANGUAGES[d % LANGUAGES.len()];
        let doc_id = format!("{lang}-{d:04}");
        let on_topic = (g.rng.gen::<f64>() < 0.35).then(|| g.rng.gen_range(0..cfg.num_topics));
        let density = g.rng.gen_range(0.05..0.3);
        let date = match on_topic {
            Some(t) => {
                let lo = topics[t].start_date.unwrap_or(first_day);
                let hi = topics[t].end_date.unwrap_or(last_day);
                lo + Duration::days(g.rng.gen_range(0..=(hi - lo).num_days()))
            }
            None => first_day + Duration::days(g.rng.gen_range(0..=span_days)),
        };
        let len = g.rng.gen_range(40..420);
        let mut words = Vec::with_capacity(len + 6);
        for _ in 0..len + 6 {
            let concept = match on_topic {
                Some(t) if g.rng.gen::<f64>() < density => *topics_concepts[t].choose(&mut g.rng).expect("non-empty"),
                _ => background.sample(&mut g.rng),
            };
            words.push(format!("{prefix}{concept}"));
        }
        let title_len = g.rng.gen_range(3..7);
        let doc = Document {
            doc_id: doc_id.clone(),
            title: words[..title_len].join(" "),
            text: words[title_len..].join(" "),
            lang: lang.to_string(),
            date: (g.rng.gen::<f64>() > 0.02).then_some(date),
        };

        let tokens = tokenizer.tokenize(&doc.full_text());
        for p in split_passages(&doc_id, tokens.len(), cfg.passage_len, cfg.passage_stride)? {
            let concepts = Generator::salient_words(&tokens[p.start..p.end], cfg.vectors_per_passage);
            let m = g.matrix(&concepts)?;
            passage_embeddings.push(p.key(), m)?;
        }
        if let Some(t) = on_topic {
            let grade = if density >= 0.18 { 2 } else { 1 };
            qrels.entry(topics[t].topic_id.clone()).or_default().insert(doc_id, grade);
        }
        documents.push(doc);
    }

    // A few judged non-relevant documents per topic.
    for topic in &topics {
        let judged = qrels.entry(topic.topic_id.clone()).or_default();
        for _ in 0..8 {
            let d = &documents[g.rng.gen_range(0..documents.len())];
            judged.entry(d.doc_id.clone()).or_insert(0);
        }
    }

    let mut query_embeddings = TokenEmbeddings::new(cfg.dim);
    for topic in &topics {
        let query = form_query(topic, QueryVariant::TitleDescription)?;
        let concepts: Vec<usize> = tokenizer.tokenize(&query).iter().filter_map(|t| concept_of(t)).collect();
        let m = g.matrix(&concepts)?;
        query_embeddings.push(topic.topic_id.clone(), m)?;
    }

    Ok(SyntheticCollection {
        documents,
        topics,
        table,
        qrels,
        passage_embeddings,
        query_embeddings,
    })
}

fn translation_table(g: &mut Generator) -> Result<TranslationTable> {
    let n = g.cfg.num_concepts;
    let mut rows = Vec::new();
    for (_, prefix) in LANGUAGES {
        for c in 0..n {
            let source = format!("{prefix}{c}");
            // Rounded so the text table reloads exactly.
            let round = |x: f64| (x * 1e4).round() / 1e4;
            let main = round(g.rng.gen_range(0.6..0.9));
            let rest = 1.0 - main;
            let a = (c + g.rng.gen_range(1..n)) % n;
            let mut b = (c + g.rng.gen_range(1..n)) % n;
            if b == a {
                b = (a + 1) % n;
                if b == c {
                    b = (b + 1) % n;
                }
            }
            let pa = round(rest * 0.7);
            let pb = round(rest - pa);
            rows.push((source.clone(), format!("{QUERY_WORD_PREFIX}{c}"), main));
            rows.push((source.clone(), format!("{QUERY_WORD_PREFIX}{a}"), pa));
            if pb > 0.0 {
                rows.push((source, format!("{QUERY_WORD_PREFIX}{b}"), pb));
            }
        }
    }
    TranslationTable::from_rows(rows)
}

/// File names written by [`write_collection`].
pub mod files {
    pub const DOCUMENTS: &str = "docs.jsonl";
    pub const TOPICS: &str = "topics.jsonl";
    pub const TABLE: &str = "psq.tsv";
    pub const QRELS: &str = "qrels.txt";
    pub const PASSAGES: &str = "passages.liemb";
    pub const QUERIES: &str = "queries.liemb";
}

pub fn write_collection(c: &SyntheticCollection, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let lines = |items: Vec<String>| items.into_iter().map(|l| l + "\n").collect::<String>();
    let docs = lines(c.documents.iter().map(document_to_json).collect());
    let path = dir.join(files::DOCUMENTS);
    std::fs::write(&path, docs).map_err(|e| Error::io(&path, e))?;
    let topics = lines(c.topics.iter().map(topic_to_json).collect());
    let path = dir.join(files::TOPICS);
    std::fs::write(&path, topics).map_err(|e| Error::io(&path, e))?;
    write_table(&c.table, &dir.join(files::TABLE))?;
    write_qrels(&dir.join(files::QRELS), &c.qrels)?;
    write_embeddings(&c.passage_embeddings, &dir.join(files::PASSAGES))?;
    write_embeddings(&c.query_embeddings, &dir.join(files::QUERIES))
}
