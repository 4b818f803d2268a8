//! Which user characteristics separate users where model A beats model B.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Characteristic {
    NumRatings,
    AvgRating,
    StdRating,
}

impl Characteristic {
    pub const ALL: [Characteristic; 3] = [
        Characteristic::NumRatings,
        Characteristic::AvgRating,
        Characteristic::StdRating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Characteristic::NumRatings => "num_ratings",
            Characteristic::AvgRating => "avg_rating",
            Characteristic::StdRating => "std_rating",
        }
    }
}

impl fmt::Display for Characteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAnalysis {
    pub characteristic: Characteristic,
    pub chi2: f64,
    pub df: usize,
    pub significant: bool,
    /// (better, worse)
    pub group_sizes: (usize, usize),
    /// Quartile edges of the pooled population.
    pub bin_edges: [f64; 3],
    /// Rows: better, worse. Columns: quartile bins.
    pub table: [[usize; 4]; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub analyses: Vec<GroupAnalysis>,
    /// Set when the analysis was skipped.
    pub notice: Option<String>,
}

impl GroupReport {
    pub fn get(&self, c: Characteristic) -> Option<&GroupAnalysis> {
        self.analyses.iter().find(|a| a.characteristic == c)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("characteristic,chi2,significant,group_sizes,df,bin_edges\n");
        if let Some(n) = &self.notice {
            let _ = writeln!(out, "# {n}");
        }
        for a in &self.analyses {
            let _ = writeln!(
                out,
                "{},{},{},{}/{},{},{};{};{}",
                a.characteristic,
                a.chi2,
                a.significant,
                a.group_sizes.0,
                a.group_sizes.1,
                a.df,
                a.bin_edges[0],
                a.bin_edges[1],
                a.bin_edges[2]
            );
        }
        out
    }
}

/// Upper 5% point of χ² with `df` degrees of freedom, for `df` in 1..=3.
pub fn critical_value(df: usize) -> Option<f64> {
    match df {
        1 => Some(3.841),
        2 => Some(5.991),
        3 => Some(7.815),
        _ => None,
    }
}

/// Rating count, mean and population standard deviation of one user.
pub fn user_characteristics(ratings: &RatingMatrix, user: usize) -> [f64; 3] {
    let vals: Vec<f64> = ratings
        .user_entries(user)
        .iter()
        .map(|e| e.value as f64)
        .collect();
    let n = vals.len() as f64;
    if vals.is_empty() {
        return [0.0; 3];
    }
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    [n, mean, var.sqrt()]
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn bin(v: f64, edges: &[f64; 3]) -> usize {
    edges.iter().position(|&e| v <= e).unwrap_or(3)
}

/// Pearson χ² over the non-empty columns of a 2×4 table, with its degrees of
/// freedom.
fn pearson(table: &[[usize; 4]; 2]) -> (f64, usize) {
    let rows = [
        table[0].iter().sum::<usize>() as f64,
        table[1].iter().sum::<usize>() as f64,
    ];
    let total = rows[0] + rows[1];
    let mut chi2 = 0.0;
    let mut cols = 0;
    for j in 0..4 {
        let col = (table[0][j] + table[1][j]) as f64;
        if col == 0.0 {
            continue;
        }
        cols += 1;
        for i in 0..2 {
            let expected = rows[i] * col / total;
            chi2 += (table[i][j] as f64 - expected).powi(2) / expected;
        }
    }
    (chi2, cols.max(1) - 1)
}

/// Splits `users` into those where `scores_a > scores_b` and the rest, bins
/// each characteristic at the pooled quartiles and tests independence.
pub fn chi_square_group_analysis(
    scores_a: &[f64],
    scores_b: &[f64],
    users: &[u32],
    ratings: &RatingMatrix,
) -> Result<GroupReport> {
    if scores_a.len() != scores_b.len() || scores_a.len() != users.len() {
        return Err(Error::Shape(
            "score vectors and users must be aligned".into(),
        ));
    }
    let better: Vec<bool> = scores_a.iter().zip(scores_b).map(|(a, b)| a > b).collect();
    let n_better = better.iter().filter(|&&b| b).count();
    let sizes = (n_better, users.len() - n_better);
    if sizes.0 == 0 || sizes.1 == 0 {
        return Ok(GroupReport {
            analyses: Vec::new(),
            notice: Some(format!(
                "skipped: one group is empty (better {}, worse {})",
                sizes.0, sizes.1
            )),
        });
    }
    if let Some(&u) = users.iter().find(|&&u| u as usize >= ratings.num_users()) {
        return Err(Error::Contract(format!(
            "user {u} is outside the rating matrix"
        )));
    }
    let chars: Vec<[f64; 3]> = users
        .iter()
        .map(|&u| user_characteristics(ratings, u as usize))
        .collect();
    let analyses = Characteristic::ALL
        .iter()
        .enumerate()
        .map(|(c, &characteristic)| {
            let mut pooled: Vec<f64> = chars.iter().map(|v| v[c]).collect();
            pooled.sort_by(f64::total_cmp);
            let edges = [
                quantile(&pooled, 0.25),
                quantile(&pooled, 0.5),
                quantile(&pooled, 0.75),
            ];
            let mut table = [[0usize; 4]; 2];
            for (v, &b) in chars.iter().zip(&better) {
                table[if b { 0 } else { 1 }][bin(v[c], &edges)] += 1;
            }
            let (chi2, df) = pearson(&table);
            GroupAnalysis {
                characteristic,
                chi2,
                df,
                significant: critical_value(df).is_some_and(|cv| chi2 > cv),
                group_sizes: sizes,
                bin_edges: edges,
                table,
            }
        })
        .collect();
    Ok(GroupReport {
        analyses,
        notice: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Rating;
    use proptest::prelude::*;

    /// User `u` gets `counts[u]` ratings cycling through `values[u]`.
    fn population(counts: &[usize], values: &[Vec<u8>]) -> RatingMatrix {
        let items = *counts.iter().max().unwrap();
        let mut entries = Vec::new();
        for (u, (&c, vals)) in counts.iter().zip(values).enumerate() {
            for i in 0..c {
                entries.push(Rating {
                    user: u as u32,
                    item: i as u32,
                    value: vals[i % vals.len()],
                    timestamp: None,
                });
            }
        }
        RatingMatrix::new(counts.len(), items, entries).unwrap()
    }

    #[test]
    fn identical_scores_are_skipped() {
        let r = population(&[3, 4], &[vec![1], vec![2]]);
        let rep = chi_square_group_analysis(&[0.5, 0.2], &[0.5, 0.2], &[0, 1], &r).unwrap();
        assert!(rep.analyses.is_empty());
        assert!(rep.notice.is_some());
    }

    #[test]
    fn matched_groups_give_zero() {
        // better and worse users are pairwise identical
        let counts: Vec<usize> = (0..40).map(|u| 5 + (u % 20)).collect();
        let values: Vec<Vec<u8>> = (0..40).map(|u| vec![1 + (u % 5) as u8, 3, 5]).collect();
        let r = population(&counts, &values);
        let a: Vec<f64> = (0..40).map(|u| if u < 20 { 1.0 } else { 0.0 }).collect();
        let b = vec![0.5; 40];
        let users: Vec<u32> = (0..40).collect();
        let rep = chi_square_group_analysis(&a, &b, &users, &r).unwrap();
        for an in &rep.analyses {
            assert!(an.chi2.abs() < 1e-12, "{an:?}");
            assert!(!an.significant);
        }
    }

    #[test]
    fn rating_count_difference_is_detected() {
        // better users have three times the ratings; value distributions match
        let n = 40;
        let counts: Vec<usize> = (0..2 * n)
            .map(|u| {
                if u < n {
                    30 + 3 * (u % 5)
                } else {
                    10 + (u % 5)
                }
            })
            .collect();
        let values: Vec<Vec<u8>> = (0..2 * n)
            .map(|u| vec![(1 + (u % n) % 5) as u8, 4])
            .collect();
        let r = population(&counts, &values);
        let a: Vec<f64> = (0..2 * n).map(|u| if u < n { 1.0 } else { 0.0 }).collect();
        let b = vec![0.5; 2 * n];
        let users: Vec<u32> = (0..2 * n as u32).collect();
        let rep = chi_square_group_analysis(&a, &b, &users, &r).unwrap();
        let count = rep.get(Characteristic::NumRatings).unwrap();
        // hand count over 80 sorted counts: edges 12 / 22 / 36, so worse
        // users fill bins 0..1 (24 + 16) and better users bins 2..3 (24 + 16)
        assert_eq!(count.bin_edges, [12.0, 22.0, 36.0]);
        assert_eq!(count.table, [[0, 0, 24, 16], [24, 16, 0, 0]]);
        assert!((count.chi2 - 80.0).abs() < 1e-9);
        assert!(count.significant);
        let avg = rep.get(Characteristic::AvgRating).unwrap();
        assert!(avg.chi2 < 7.815, "{avg:?}");
        assert!(!avg.significant);
    }

    #[test]
    fn critical_values() {
        assert_eq!(critical_value(3), Some(7.815));
        assert_eq!(critical_value(0), None);
    }

    proptest! {
        #[test]
        fn chi2_is_label_symmetric(seed in proptest::collection::vec((1usize..30, 1u8..=5, 0.0f64..1.0), 8..40)) {
            let counts: Vec<usize> = seed.iter().map(|s| s.0).collect();
            let values: Vec<Vec<u8>> = seed.iter().map(|s| vec![s.1, 3]).collect();
            let r = population(&counts, &values);
            let a: Vec<f64> = seed.iter().map(|s| s.2).collect();
            let b = vec![0.5; seed.len()];
            let users: Vec<u32> = (0..seed.len() as u32).collect();
            // swapping which side counts as "better" (ties excluded by construction)
            prop_assume!(a.iter().all(|&x| x != 0.5));
            let fwd = chi_square_group_analysis(&a, &b, &users, &r).unwrap();
            let rev = chi_square_group_analysis(&b, &a, &users, &r).unwrap();
            prop_assert_eq!(fwd.analyses.len(), rev.analyses.len());
            for (x, y) in fwd.analyses.iter().zip(&rev.analyses) {
                prop_assert!((x.chi2 - y.chi2).abs() < 1e-9);
                prop_assert!(x.chi2 >= 0.0);
            }
        }
    }
}
