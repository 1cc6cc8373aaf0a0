use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        ScoredDoc {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Score descending, then key ascending. Scores are finite; `-0.0` and
/// `0.0` tie.
pub(crate) fn by_score_then_key<K: Ord>(a: &(K, f64), b: &(K, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// The `n` best candidates in [`by_score_then_key`] order.
pub(crate) fn top_n<K: Ord>(mut candidates: Vec<(K, f64)>, n: usize) -> Vec<(K, f64)> {
    if n == 0 {
        return Vec::new();
    }
    if candidates.len() > n {
        candidates.select_nth_unstable_by(n - 1, by_score_then_key);
        candidates.truncate(n);
    }
    candidates.sort_unstable_by(by_score_then_key);
    candidates
}
