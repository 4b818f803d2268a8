//! Seeded synthetic rating data.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Rating, RatingMatrix};
use crate::error::Result;
use crate::rng::stream;

/// Users and items split into `clusters` groups. Users rate items of their
/// own group 4–5 with probability `p_in` and other items 1–2 with
/// probability `p_out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSpec {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            users: 60,
            items: 48,
            clusters: 2,
            p_in: 0.5,
            p_out: 0.1,
            seed: 0,
        }
    }
}

impl ClusterSpec {
    pub fn user_cluster(&self, u: usize) -> usize {
        u * self.clusters / self.users
    }

    pub fn item_cluster(&self, i: usize) -> usize {
        i * self.clusters / self.items
    }
}

pub fn cluster_toy(spec: &ClusterSpec) -> Result<RatingMatrix> {
    let mut rng = stream(spec.seed, "cluster-toy");
    let mut entries = Vec::new();
    for u in 0..spec.users {
        for i in 0..spec.items {
            let same = spec.user_cluster(u) == spec.item_cluster(i);
            let value = if same && rng.gen_bool(spec.p_in) {
                rng.gen_range(4..=5)
            } else if !same && rng.gen_bool(spec.p_out) {
                rng.gen_range(1..=2)
            } else {
                continue;
            };
            entries.push(Rating {
                user: u as u32,
                item: i as u32,
                value,
                timestamp: None,
            });
        }
    }
    RatingMatrix::new(spec.users, spec.items, entries)
}

/// Latent-factor generator shaped like a movie-rating log: long-tailed item
/// popularity, log-normal activity with at least `min_ratings` per user,
/// 1..=5 ratings with a mean near 3.6.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSpec {
    pub users: usize,
    pub items: usize,
    pub factors: usize,
    pub min_ratings: usize,
    /// Median number of ratings per user above `min_ratings`.
    pub median_extra: f64,
    pub seed: u64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec {
            users: 1200,
            items: 3706,
            factors: 8,
            min_ratings: 20,
            median_extra: 80.0,
            seed: 0,
        }
    }
}

pub fn movielens_like(spec: &SurrogateSpec) -> Result<RatingMatrix> {
    let mut rng = stream(spec.seed, "surrogate");
    let normal = Normal::new(0.0, 1.0).expect("valid");
    let scale = 1.0 / (spec.factors as f64).sqrt();
    let mut latent = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..spec.factors)
                    .map(|_| normal.sample(&mut rng) * scale)
                    .collect()
            })
            .collect()
    };
    let p = latent(spec.users);
    let q = latent(spec.items);
    let pop: Vec<f64> = (0..spec.items)
        .map(|i| -0.9 * ((i + 10) as f64).ln())
        .collect();
    let item_bias: Vec<f64> = (0..spec.items)
        .map(|_| 0.4 * normal.sample(&mut rng))
        .collect();
    let activity = LogNormal::new(spec.median_extra.ln(), 0.9).expect("valid");
    let mut entries = Vec::new();
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(spec.items);
    for u in 0..spec.users {
        let extra = activity.sample(&mut rng).round() as usize;
        let count = (spec.min_ratings + extra).min(spec.items);
        keys.clear();
        for i in 0..spec.items {
            let affinity: f64 = p[u].iter().zip(&q[i]).map(|(a, b)| a * b).sum();
            let gumbel = -(-rng.gen::<f64>().max(1e-300).ln()).ln();
            keys.push((pop[i] + 2.0 * affinity + gumbel, i));
        }
        keys.select_nth_unstable_by(count - 1, |a, b| b.0.total_cmp(&a.0));
        for &(_, i) in &keys[..count] {
            let affinity: f64 = p[u].iter().zip(&q[i]).map(|(a, b)| a * b).sum();
            let score = 3.6 + item_bias[i] + 2.5 * affinity + 0.6 * normal.sample(&mut rng);
            entries.push(Rating {
                user: u as u32,
                item: i as u32,
                value: score.round().clamp(1.0, 5.0) as u8,
                timestamp: None,
            });
        }
    }
    RatingMatrix::new(spec.users, spec.items, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_is_block_structured() {
        let spec = ClusterSpec::default();
        let r = cluster_toy(&spec).unwrap();
        for e in r.entries() {
            let same = spec.user_cluster(e.user as usize) == spec.item_cluster(e.item as usize);
            assert_eq!(same, e.value >= 4);
        }
        assert_eq!(r, cluster_toy(&spec).unwrap());
    }

    #[test]
    fn surrogate_shape() {
        let spec = SurrogateSpec {
            users: 200,
            items: 600,
            ..SurrogateSpec::default()
        };
        let r = movielens_like(&spec).unwrap();
        assert!(r.user_counts().iter().all(|&c| c >= 20));
        let mean = r.entries().iter().map(|e| e.value as f64).sum::<f64>() / r.len() as f64;
        assert!((3.0..4.2).contains(&mean), "mean rating {mean}");
        assert!(
            r.entries().iter().any(|e| e.value == 1) && r.entries().iter().any(|e| e.value == 5)
        );
        let counts = r.item_counts();
        assert!(counts[0] > 5 * counts[599].max(1));
        assert_eq!(r, movielens_like(&spec).unwrap());
    }
}
