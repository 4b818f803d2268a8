//! Pack sign codes into u64 words and answer top-k queries by Hamming
//! distance, then compare against inner-product search on the same features.
//!
//! cargo run --release --example hamming_search

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use hashrec::binarize::sign_binarize;
use hashrec::index::{continuous_topk, hamming_distance, HammingIndex};
use hashrec::nn::DenseMatrix;
use hashrec::rng;

const ITEMS: usize = 20_000;
const BITS: usize = 64;
const K: usize = 10;

fn main() -> hashrec::Result<()> {
    let mut r = rng::stream(1, "hamming-search");
    let items = DenseMatrix::from_fn(ITEMS, BITS, |_, _| r.sample(StandardNormal));
    let users = DenseMatrix::from_fn(100, BITS, |_, _| r.sample(StandardNormal));

    let t = Instant::now();
    let index = HammingIndex::build(sign_binarize(&items));
    let queries = sign_binarize(&users);
    println!(
        "indexed {} items x {} bits ({} word/row) in {:?}",
        index.len(),
        index.code_bits(),
        index.codes().words_per_row(),
        t.elapsed()
    );

    let t = Instant::now();
    let mut overlap = 0;
    for u in 0..users.rows() {
        let hits = index.query_row(&queries, u, K, &[])?;
        let exact = continuous_topk(&items, users.row(u), K, &[])?;
        overlap += hits
            .iter()
            .filter(|h| exact.iter().any(|e| e.item == h.item))
            .count();
    }
    println!(
        "{} queries in {:?}; mean overlap with inner-product top-{K}: {:.2}",
        users.rows(),
        t.elapsed(),
        overlap as f64 / users.rows() as f64
    );

    let hits = index.query_row(&queries, 0, K, &[])?;
    println!("user 0:");
    for h in &hits {
        assert_eq!(
            h.distance,
            hamming_distance(queries.row(0), index.codes().row(h.item as usize))
        );
        println!("  item {:>5}  distance {:>2}", h.item, h.distance);
    }

    let mut exclude: Vec<u32> = hits.iter().take(3).map(|h| h.item).collect();
    exclude.sort_unstable();
    let rest = index.query_row(&queries, 0, 3, &exclude)?;
    println!(
        "excluding {:?} -> {:?}",
        exclude,
        rest.iter().map(|h| h.item).collect::<Vec<_>>()
    );
    Ok(())
}
