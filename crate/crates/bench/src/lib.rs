//! Benchmark fixtures built from the seeded synthetic collection.

use xlir_core::corpus::{form_query, DefaultTokenizer, QueryVariant, Tokenizer};
use xlir_core::dense::{DenseIndex, DenseIndexParams, TokenMatrix};
use xlir_core::lexical::InvertedIndex;
use xlir_core::psq::{prune_table, translate_doc, TranslationTable, WeightedBag};
use xlir_core::synthetic::{generate, SyntheticCollection, SyntheticConfig};

pub struct Fixture {
    pub collection: SyntheticCollection,
    pub table: TranslationTable,
    /// Per-document token counts in the document language.
    pub counts: Vec<(String, WeightedBag)>,
    pub lexical: InvertedIndex,
    pub dense: DenseIndex,
    pub dense_params: DenseIndexParams,
    /// Tokenized TD queries, one per topic.
    pub queries: Vec<Vec<String>>,
}

impl Fixture {
    pub fn new(num_docs: usize) -> Self {
        let collection = generate(&SyntheticConfig {
            num_docs,
            seed: 7,
            ..Default::default()
        })
        .expect("synthetic collection");
        let table = prune_table(&collection.table, 0.99, 64).expect("pruned table");
        let tokenizer = DefaultTokenizer::new();
        let counts: Vec<(String, WeightedBag)> = collection
            .documents
            .iter()
            .map(|d| (d.doc_id.clone(), WeightedBag::from_tokens(&tokenizer.tokenize(&d.full_text()))))
            .collect();
        let lexical = InvertedIndex::build(counts.iter().map(|(id, bag)| (id.clone(), translate_doc(bag, &table))))
            .expect("lexical index");
        let dense_params = DenseIndexParams {
            num_centroids: Some(256),
            kmeans_iters: 10,
            ..Default::default()
        };
        let dense = DenseIndex::build(&collection.passage_embeddings, &dense_params).expect("dense index");
        let queries = collection
            .topics
            .iter()
            .map(|t| tokenizer.tokenize(&form_query(t, QueryVariant::TitleDescription).unwrap()))
            .collect();
        Self {
            collection,
            table,
            counts,
            lexical,
            dense,
            dense_params,
            queries,
        }
    }

    pub fn query_embedding(&self, i: usize) -> &TokenMatrix {
        let id = &self.collection.topics[i].topic_id;
        self.collection.query_embeddings.get(id).expect("query embedding")
    }
}
