use rand::seq::index::sample;

use super::ModelKind;
use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};
use crate::rng::stream;

/// A non-personalised model: one global ranking served to every user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Baseline {
    pub kind: ModelKind,
    pub ranking: Vec<u32>,
}

impl Baseline {
    pub fn random(num_items: usize, seed: u64) -> Self {
        Baseline {
            kind: ModelKind::Random,
            ranking: baseline_random(num_items, num_items, seed).expect("k = n"),
        }
    }

    pub fn top(train: &RatingMatrix) -> Self {
        Baseline {
            kind: ModelKind::Top,
            ranking: baseline_top(train, train.num_items()).expect("k = n"),
        }
    }
}

/// `k` distinct items drawn uniformly without replacement.
pub fn baseline_random(num_items: usize, k: usize, seed: u64) -> Result<Vec<u32>> {
    if k > num_items {
        return Err(Error::Contract(format!(
            "k = {k} exceeds {num_items} items"
        )));
    }
    let mut rng = stream(seed, "random-baseline");
    Ok(sample(&mut rng, num_items, k)
        .into_iter()
        .map(|i| i as u32)
        .collect())
}

/// The `k` most rated training items, ties by ascending id.
pub fn baseline_top(train: &RatingMatrix, k: usize) -> Result<Vec<u32>> {
    let n = train.num_items();
    if k > n {
        return Err(Error::Contract(format!("k = {k} exceeds {n} items")));
    }
    let counts = train.item_counts();
    let mut items: Vec<u32> = (0..n as u32).collect();
    items.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    items.truncate(k);
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Rating;

    fn with_counts(counts: &[usize]) -> RatingMatrix {
        let users = *counts.iter().max().unwrap_or(&0);
        let mut entries = Vec::new();
        for (i, &c) in counts.iter().enumerate() {
            for u in 0..c {
                entries.push(Rating {
                    user: u as u32,
                    item: i as u32,
                    value: 4,
                    timestamp: None,
                });
            }
        }
        RatingMatrix::new(users, counts.len(), entries).unwrap()
    }

    #[test]
    fn top_examples() {
        assert_eq!(
            baseline_top(&with_counts(&[5, 9, 2]), 2).unwrap(),
            vec![1, 0]
        );
        assert_eq!(baseline_top(&with_counts(&[3, 3]), 2).unwrap(), vec![0, 1]);
        assert!(baseline_top(&with_counts(&[3]), 2).is_err());
    }

    #[test]
    fn random_is_seeded_and_distinct() {
        let a = baseline_random(50, 10, 3).unwrap();
        assert_eq!(a, baseline_random(50, 10, 3).unwrap());
        assert_ne!(a, baseline_random(50, 10, 4).unwrap());
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 10);
        assert_eq!(Baseline::random(7, 1).ranking.len(), 7);
    }
}
