use serde::{Deserialize, Serialize};

/// Denominator of Recall@k.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallNorm {
    /// `min(k, |relevant|)`
    #[default]
    MinK,
    /// `|relevant|`
    Relevant,
}

impl RecallNorm {
    pub fn name(self) -> &'static str {
        match self {
            RecallNorm::MinK => "min_k",
            RecallNorm::Relevant => "relevant",
        }
    }
}

#[inline]
fn discount(position: usize) -> f64 {
    // position is 0-based, so rank i = position + 1 and the discount is log2(i + 1)
    1.0 / ((position + 2) as f64).log2()
}

/// Binary-relevance NDCG@k. `relevant` must be sorted ascending. Returns
/// `None` when nothing is relevant.
///
/// # Panics
/// If `k == 0`.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    assert!(k >= 1, "k must be at least 1");
    if relevant.is_empty() {
        return None;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| relevant.binary_search(item).is_ok())
        .map(|(i, _)| discount(i))
        .sum();
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    Some(dcg / idcg)
}

/// NDCG@k with graded gains; `gains` holds `(item, gain)` sorted by item.
/// Items absent from `gains` have gain 0.
pub fn graded_ndcg_at_k(ranked: &[u32], gains: &[(u32, f64)], k: usize) -> Option<f64> {
    assert!(k >= 1, "k must be at least 1");
    let mut ideal: Vec<f64> = gains.iter().map(|g| g.1).filter(|&g| g > 0.0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_by(|a, b| b.total_cmp(a));
    let gain = |item: &u32| {
        gains
            .binary_search_by_key(item, |g| g.0)
            .map_or(0.0, |i| gains[i].1)
    };
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, it)| gain(it) * discount(i))
        .sum();
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| g * discount(i))
        .sum();
    Some(dcg / idcg)
}

/// `|top-k ∩ relevant|` over the chosen denominator. `relevant` must be
/// sorted ascending.
///
/// # Panics
/// If `k == 0`.
pub fn recall_at_k(ranked: &[u32], relevant: &[u32], k: usize, norm: RecallNorm) -> Option<f64> {
    assert!(k >= 1, "k must be at least 1");
    if relevant.is_empty() {
        return None;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|item| relevant.binary_search(item).is_ok())
        .count();
    let denom = match norm {
        RecallNorm::MinK => k.min(relevant.len()),
        RecallNorm::Relevant => relevant.len(),
    };
    Some(hits as f64 / denom as f64)
}
