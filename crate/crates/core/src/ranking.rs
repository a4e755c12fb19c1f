//! Ranked result lists shared by every retrieval path.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(id: impl Into<String>, score: f64) -> Self {
        Self {
            id: id.into(),
            score,
        }
    }
}

/// Descending score, ascending id on ties.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

pub fn sort_ranked(list: &mut [ScoredDoc]) {
    list.sort_by(rank_order);
}

/// Sorts and keeps the best `k`.
pub fn top_k(mut list: Vec<ScoredDoc>, k: usize) -> Vec<ScoredDoc> {
    if list.len() > k {
        list.select_nth_unstable_by(k, rank_order);
        list.truncate(k);
    }
    sort_ranked(&mut list);
    list
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_on_id() {
        let list = vec![
            ScoredDoc::new("b", 1.0),
            ScoredDoc::new("a", 1.0),
            ScoredDoc::new("c", 2.0),
            ScoredDoc::new("d", 0.5),
        ];
        let ids: Vec<_> = top_k(list.clone(), 3).into_iter().map(|d| d.id).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(top_k(list, 10).len(), 4);
    }
}
