//! Exact top-k retrieval over packed codes and over continuous embeddings.

use std::cmp::Ordering;

use crate::binarize::BinaryCodeMatrix;
use crate::error::{Error, Result};
use crate::nn::{dot, DenseMatrix};

/// Number of differing bits between two packed rows.
#[inline]
pub fn hamming_distance(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub item: u32,
    pub distance: u32,
}

/// Immutable linear-scan index over item codes.
#[derive(Clone, Debug)]
pub struct HammingIndex {
    codes: BinaryCodeMatrix,
}

impl HammingIndex {
    pub fn build(codes: BinaryCodeMatrix) -> Self {
        HammingIndex { codes }
    }

    pub fn len(&self) -> usize {
        self.codes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.rows() == 0
    }

    pub fn code_bits(&self) -> usize {
        self.codes.code_bits()
    }

    pub fn codes(&self) -> &BinaryCodeMatrix {
        &self.codes
    }

    /// Distances from `query` to every stored code.
    pub fn distances(&self, query: &[u64]) -> Vec<u32> {
        (0..self.codes.rows())
            .map(|i| hamming_distance(query, self.codes.row(i)))
            .collect()
    }

    /// The `k` nearest items ordered by `(distance, item)`. `exclude` must be
    /// sorted ascending.
    pub fn query_topk(
        &self,
        query: &[u64],
        query_bits: usize,
        k: usize,
        exclude: &[u32],
    ) -> Result<Vec<Neighbor>> {
        if query_bits != self.codes.code_bits() || query.len() != self.codes.words_per_row() {
            return Err(Error::Contract(format!(
                "query has {query_bits} bits, index has {}",
                self.codes.code_bits()
            )));
        }
        if k == 0 {
            return Err(Error::Contract("k must be at least 1".into()));
        }
        // Counting sort by distance keeps ids ascending inside each bucket.
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); query_bits + 1];
        let mut skip = exclude.iter().peekable();
        for item in 0..self.codes.rows() as u32 {
            while skip.next_if(|&&e| e < item).is_some() {}
            if skip.next_if_eq(&&item).is_some() {
                continue;
            }
            let d = hamming_distance(query, self.codes.row(item as usize));
            buckets[d as usize].push(item);
        }
        let mut out = Vec::with_capacity(k.min(self.codes.rows()));
        'outer: for (d, bucket) in buckets.into_iter().enumerate() {
            for item in bucket {
                if out.len() == k {
                    break 'outer;
                }
                out.push(Neighbor {
                    item,
                    distance: d as u32,
                });
            }
        }
        Ok(out)
    }

    /// Convenience wrapper taking row `row` of another code matrix as query.
    pub fn query_row(
        &self,
        queries: &BinaryCodeMatrix,
        row: usize,
        k: usize,
        exclude: &[u32],
    ) -> Result<Vec<Neighbor>> {
        self.query_topk(queries.row(row), queries.code_bits(), k, exclude)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredItem {
    pub item: u32,
    pub score: f64,
}

/// The `k` items with the largest inner product with `query`, ties broken by
/// ascending id. `exclude` must be sorted ascending.
pub fn continuous_topk(
    items: &DenseMatrix,
    query: &[f64],
    k: usize,
    exclude: &[u32],
) -> Result<Vec<ScoredItem>> {
    if query.len() != items.cols() {
        return Err(Error::Contract(format!(
            "query has {} dimensions, items have {}",
            query.len(),
            items.cols()
        )));
    }
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let mut scored: Vec<ScoredItem> = (0..items.rows() as u32)
        .filter(|i| exclude.binary_search(i).is_err())
        .map(|item| ScoredItem {
            item,
            score: dot(query, items.row(item as usize)),
        })
        .collect();
    let order = |a: &ScoredItem, b: &ScoredItem| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.item.cmp(&b.item))
    };
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_by(order);
    Ok(scored)
}
