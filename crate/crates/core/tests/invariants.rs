use chrono::NaiveDate;
use proptest::prelude::*;
use xlir_core::corpus::Document;
use xlir_core::dense::{search_dense, DenseIndex, DenseIndexParams, TokenEmbeddings, TokenMatrix};
use xlir_core::lexical::{search_lexical, search_lexical_sharded, InvertedIndex, LexicalParams, Scorer};
use xlir_core::psq::WeightedBag;
use xlir_core::shards::{
    build_lexical_shards, fuse_multilingual, plan_shards, select_shards, DateFilter, FusionNorm,
};
use xlir_core::ScoredDoc;

fn base() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 11, 5).unwrap()
}

fn doc(id: usize, offset: Option<i64>) -> Document {
    Document {
        doc_id: format!("d{id:03}"),
        title: String::new(),
        text: String::new(),
        lang: "x".into(),
        date: offset.map(|o| base() + chrono::Duration::days(o)),
    }
}

fn bags_strategy() -> impl Strategy<Value = Vec<Vec<(u8, u8)>>> {
    prop::collection::vec(prop::collection::vec((0u8..20, 1u8..4), 1..8), 1..40)
}

fn to_bag(terms: &[(u8, u8)]) -> WeightedBag {
    let mut bag = WeightedBag::new();
    for &(t, w) in terms {
        bag.add(&format!("w{t}"), w as f64);
    }
    bag
}

fn unit_rows(raw: &[Vec<f32>]) -> Option<Vec<Vec<f32>>> {
    raw.iter()
        .map(|r| {
            let n = r.iter().map(|x| x * x).sum::<f32>().sqrt();
            (n > 1e-2).then(|| r.iter().map(|x| x / n).collect())
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_dated_document_lands_in_its_window(
        offsets in prop::collection::vec(prop::option::weighted(0.9, 0i64..1500), 1..80),
        months in 1u32..13,
    ) {
        prop_assume!(offsets.iter().any(Option::is_some));
        let docs: Vec<Document> = offsets.iter().enumerate().map(|(i, o)| doc(i, *o)).collect();
        let plan = plan_shards(&docs, months).unwrap();
        prop_assert_eq!(plan.assignment.len(), docs.len());
        for w in plan.windows.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        for d in &docs {
            let shard = plan.shard_of(&d.doc_id).unwrap();
            match d.date {
                Some(date) => prop_assert!(plan.windows[shard].contains(date)),
                None => prop_assert_eq!(shard, plan.num_shards() - 1),
            }
        }
    }

    #[test]
    fn selected_shards_are_exactly_the_overlapping_windows(
        offsets in prop::collection::vec(0i64..1500, 1..60),
        a in prop::option::of(-100i64..1600),
        b in prop::option::of(-100i64..1600),
    ) {
        let docs: Vec<Document> = offsets.iter().enumerate().map(|(i, o)| doc(i, Some(*o))).collect();
        let plan = plan_shards(&docs, 3).unwrap();
        let day = |o: i64| base() + chrono::Duration::days(o);
        let (start, end) = match (a, b) {
            (Some(x), Some(y)) if x > y => (Some(day(y)), Some(day(x))),
            (x, y) => (x.map(day), y.map(day)),
        };
        let selected = select_shards(&plan, &DateFilter::new(start, end).unwrap());
        for (i, w) in plan.windows.iter().enumerate() {
            let last = w.end.pred_opt().unwrap();
            let overlaps = start.is_none_or(|s| s <= last) && end.is_none_or(|e| w.start <= e);
            prop_assert_eq!(selected.contains(&i), overlaps, "window {}", i);
        }
    }

    #[test]
    fn sharded_search_matches_whole_index(
        bags in bags_strategy(),
        offsets in prop::collection::vec(0i64..900, 40),
        query in prop::collection::vec(0u8..24, 1..5),
        rm3 in any::<bool>(),
        k in 1usize..50,
    ) {
        let named: Vec<(String, WeightedBag)> =
            bags.iter().enumerate().map(|(i, b)| (format!("d{i:03}"), to_bag(b))).collect();
        let docs: Vec<Document> = (0..named.len()).map(|i| doc(i, Some(offsets[i]))).collect();
        let plan = plan_shards(&docs, 2).unwrap();
        let whole = InvertedIndex::build(named.clone()).unwrap();
        let shards = build_lexical_shards(named, &plan).unwrap();
        let refs: Vec<&InvertedIndex> = shards.iter().collect();
        let terms: Vec<String> = query.iter().map(|t| format!("w{t}")).collect();
        let p = LexicalParams::default();
        for scorer in [Scorer::Bm25, Scorer::Hmm] {
            prop_assert_eq!(
                search_lexical(&whole, &terms, scorer, rm3, k, &p).unwrap(),
                search_lexical_sharded(&refs, &terms, scorer, rm3, k, &p).unwrap()
            );
        }
    }

    #[test]
    fn lexical_results_are_sorted_unique_and_bounded(
        bags in bags_strategy(),
        query in prop::collection::vec(0u8..24, 1..5),
        k in 1usize..50,
    ) {
        let index = InvertedIndex::build(
            bags.iter().enumerate().map(|(i, b)| (format!("d{i:03}"), to_bag(b))),
        ).unwrap();
        let terms: Vec<String> = query.iter().map(|t| format!("w{t}")).collect();
        for scorer in [Scorer::Bm25, Scorer::Hmm] {
            for rm3 in [false, true] {
                let r = search_lexical(&index, &terms, scorer, rm3, k, &LexicalParams::default()).unwrap();
                prop_assert!(r.len() <= k);
                prop_assert!(r.windows(2).all(|w| w[0].score > w[1].score
                    || (w[0].score == w[1].score && w[0].id < w[1].id)));
                prop_assert!(r.iter().all(|d| d.score.is_finite()));
            }
        }
    }

    #[test]
    fn fusion_keeps_top_k_of_the_union(
        runs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 0..20), 1..4),
        k in 1usize..40,
    ) {
        let runs: Vec<Vec<ScoredDoc>> = runs
            .iter()
            .enumerate()
            .map(|(l, scores)| {
                let mut r: Vec<ScoredDoc> =
                    scores.iter().enumerate().map(|(i, s)| ScoredDoc::new(format!("{l}-{i}"), *s)).collect();
                r.sort_by(|a, b| b.score.total_cmp(&a.score));
                r
            })
            .collect();
        let total: usize = runs.iter().map(Vec::len).sum();
        for norm in [FusionNorm::Raw, FusionNorm::MinMax] {
            let fused = fuse_multilingual(&runs, k, norm).unwrap();
            prop_assert_eq!(fused.len(), total.min(k));
            prop_assert!(fused.windows(2).all(|w| w[0].score >= w[1].score));
            if norm == FusionNorm::MinMax {
                prop_assert!(fused.iter().all(|d| (0.0..=1.0).contains(&d.score)));
            }
        }
    }

    #[test]
    fn more_probes_never_lose_candidates(
        raw in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 8), 40..120),
        q in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 8), 1..4),
    ) {
        let (Some(rows), Some(qrows)) = (unit_rows(&raw), unit_rows(&q)) else {
            return Err(TestCaseError::reject("degenerate vector"));
        };
        let mut emb = TokenEmbeddings::new(8);
        for (i, chunk) in rows.chunks(3).enumerate() {
            emb.push(format!("p{i}#0"), TokenMatrix::from_rows(8, chunk).unwrap()).unwrap();
        }
        let params = DenseIndexParams { num_centroids: Some(8), kmeans_iters: 4, ..Default::default() };
        let index = DenseIndex::build(&emb, &params).unwrap();
        let query = TokenMatrix::from_rows(8, &qrows).unwrap();
        let mut previous = 0;
        for nprobe in 1..=index.num_centroids() {
            let hits = search_dense(&index, &query, &DenseIndexParams { nprobe, ..params }).unwrap();
            prop_assert!(hits.candidates >= previous);
            previous = hits.candidates;
        }
        prop_assert_eq!(previous, index.len());
    }
}
