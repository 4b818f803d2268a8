//! Matrix factorisation trained by alternating stochastic gradient sweeps.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{record_epoch, ModelKind, TrainConfig, TrainedModel};
use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};
use crate::losses::{cf_loss, cfcodereg_loss, PairBatch};
use crate::nn::{dot, DenseMatrix};
use crate::rng::stream;

/// Plain factorisation on raw rating values with an L2 penalty `λ`.
pub fn train_cf(train: &RatingMatrix, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_mf(train, cfg, ModelKind::Cf)
}

/// Relaxed binary-code factorisation; features are clamped to `[-1, 1]`
/// after every update. Targets are 1 for implicit data and `(v - 1) / 4`
/// for 1..=5 ratings.
pub fn train_cfcodereg(train: &RatingMatrix, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_mf(train, cfg, ModelKind::CfCodeReg)
}

pub(crate) fn cfcodereg_target(value: u8, implicit: bool) -> f64 {
    if implicit {
        1.0
    } else {
        (value as f64 - 1.0) / 4.0
    }
}

struct Problem {
    kind: ModelKind,
    pairs: Vec<(usize, usize)>,
    targets: Vec<f64>,
    user_counts: Vec<usize>,
    item_counts: Vec<usize>,
    lambda: f64,
    r: usize,
}

impl Problem {
    /// Residual and the factor multiplying the partner row in the gradient.
    #[inline]
    fn residual(&self, d: f64, t: f64) -> (f64, f64) {
        match self.kind {
            ModelKind::CfCodeReg => {
                let s = 1.0 / (2.0 * self.r as f64);
                (t - 0.5 - s * d, s)
            }
            _ => (t - d, 1.0),
        }
    }

    fn clamps(&self) -> bool {
        self.kind == ModelKind::CfCodeReg
    }

    fn objective(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<f64> {
        let batch = PairBatch::new(
            u.clone(),
            v.clone(),
            self.pairs.clone(),
            vec![1.0; self.pairs.len()],
            Some(self.targets.clone()),
        )?;
        let loss = match self.kind {
            ModelKind::CfCodeReg => cfcodereg_loss(&batch, self.lambda, self.r)?,
            _ => cf_loss(&batch, self.lambda)?,
        };
        Ok(loss.value)
    }

    /// One pass over the entries updating only `own` (users when
    /// `user_side`).
    fn sweep(
        &self,
        own: &mut DenseMatrix,
        other: &DenseMatrix,
        order: &[usize],
        user_side: bool,
        lr: f64,
    ) {
        let r = own.cols();
        let mut grad = vec![0.0; r];
        for &p in order {
            let (a, b) = self.pairs[p];
            let (i, j, n) = if user_side {
                (a, b, self.user_counts[a])
            } else {
                (b, a, self.item_counts[b])
            };
            let d = dot(own.row(i), other.row(j));
            let (e, s) = self.residual(d, self.targets[p]);
            let reg = 2.0 * self.lambda / n as f64;
            let partner = other.row(j);
            let row = own.row_mut(i);
            for k in 0..r {
                grad[k] = -2.0 * e * s * partner[k] + reg * row[k];
            }
            for k in 0..r {
                row[k] -= lr * grad[k];
                if self.clamps() {
                    row[k] = row[k].clamp(-1.0, 1.0);
                }
            }
        }
    }
}

fn train_mf(train: &RatingMatrix, cfg: &TrainConfig, kind: ModelKind) -> Result<TrainedModel> {
    cfg.validate()?;
    let r = cfg.code_dim;
    let implicit = train.is_implicit();
    let problem = Problem {
        kind,
        pairs: train
            .entries()
            .iter()
            .map(|e| (e.user as usize, e.item as usize))
            .collect(),
        targets: train
            .entries()
            .iter()
            .map(|e| match kind {
                ModelKind::CfCodeReg => cfcodereg_target(e.value, implicit),
                _ => e.value as f64,
            })
            .collect(),
        user_counts: train.user_counts(),
        item_counts: train.item_counts(),
        lambda: cfg.lambda,
        r,
    };
    let mut init = stream(cfg.seed, "mf-init");
    let scale = 0.1 / (r as f64).sqrt();
    let mut u = DenseMatrix::from_fn(train.num_users(), r, |_, _| init.gen_range(-scale..=scale));
    let mut v = DenseMatrix::from_fn(train.num_items(), r, |_, _| init.gen_range(-scale..=scale));
    let mut shuffle = stream(cfg.seed, "mf-order");
    let mut order: Vec<usize> = (0..problem.pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut warnings = Vec::new();
    let model =
        |u: DenseMatrix, v: DenseMatrix, history: Vec<f64>, warnings: Vec<String>| TrainedModel {
            kind,
            config: cfg.clone(),
            user_embeddings: u,
            item_embeddings: v,
            networks: None,
            loss_history: history,
            warnings,
            inputs: None,
        };
    for epoch in 1..=cfg.epochs {
        let snapshot = (u.clone(), v.clone());
        order.shuffle(&mut shuffle);
        problem.sweep(&mut u, &v, &order, true, cfg.learning_rate);
        order.shuffle(&mut shuffle);
        problem.sweep(&mut v, &u, &order, false, cfg.learning_rate);
        let loss = if u.is_finite() && v.is_finite() {
            problem.objective(&u, &v)?
        } else {
            f64::NAN
        };
        if !record_epoch(&mut history, &mut warnings, epoch, loss) {
            return Err(Error::Diverged {
                epoch,
                last_finite: Box::new(model(snapshot.0, snapshot.1, history, warnings)),
            });
        }
    }
    Ok(model(u, v, history, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Rating;

    fn rank_two() -> RatingMatrix {
        let u = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]];
        let v = [[1.0, 1.0], [2.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let mut entries = Vec::new();
        for (a, ua) in u.iter().enumerate() {
            for (b, vb) in v.iter().enumerate() {
                let value = (ua[0] * vb[0] + ua[1] * vb[1]) as u8;
                entries.push(Rating {
                    user: a as u32,
                    item: b as u32,
                    value,
                    timestamp: None,
                });
            }
        }
        RatingMatrix::new(4, 4, entries).unwrap()
    }

    fn rmse(m: &TrainedModel, r: &RatingMatrix) -> f64 {
        let se: f64 = r
            .entries()
            .iter()
            .map(|e| {
                let d = dot(
                    m.user_embeddings.row(e.user as usize),
                    m.item_embeddings.row(e.item as usize),
                );
                (e.value as f64 - d).powi(2)
            })
            .sum();
        (se / r.len() as f64).sqrt()
    }

    #[test]
    fn recovers_rank_two_matrix() {
        let r = rank_two();
        let cfg = TrainConfig {
            epochs: 500,
            code_dim: 2,
            learning_rate: 0.01,
            lambda: 0.01,
            ..TrainConfig::default()
        };
        let m = train_cf(&r, &cfg).unwrap();
        assert!(rmse(&m, &r) < 0.1, "rmse {}", rmse(&m, &r));
        assert_eq!(m.loss_history.len(), 500);
    }

    #[test]
    fn zero_epochs_keep_initialisation() {
        let r = rank_two();
        let cfg = TrainConfig {
            epochs: 0,
            code_dim: 3,
            ..TrainConfig::default()
        };
        let m = train_cf(&r, &cfg).unwrap();
        let mut init = stream(cfg.seed, "mf-init");
        let s = 0.1 / 3f64.sqrt();
        let expected = DenseMatrix::from_fn(4, 3, |_, _| init.gen_range(-s..=s));
        assert_eq!(m.user_embeddings, expected);
        assert!(m.user_embeddings.data().iter().all(|x| x.abs() <= s));
    }

    #[test]
    fn deterministic_per_seed() {
        let r = rank_two();
        let cfg = TrainConfig {
            epochs: 20,
            code_dim: 2,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let a = train_cf(&r, &cfg).unwrap();
        let b = train_cf(&r, &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        let c = train_cfcodereg(&r, &cfg).unwrap();
        let d = train_cfcodereg(&r, &cfg).unwrap();
        assert_eq!(c.user_embeddings, d.user_embeddings);
    }

    #[test]
    fn cfcodereg_stays_in_box_and_agrees_on_positive_data() {
        let entries = (0..6u32)
            .flat_map(|u| {
                (0..5u32).map(move |i| Rating {
                    user: u,
                    item: i,
                    value: 1,
                    timestamp: None,
                })
            })
            .collect();
        let r = RatingMatrix::new(6, 5, entries).unwrap();
        let cfg = TrainConfig {
            epochs: 300,
            code_dim: 4,
            learning_rate: 0.2,
            lambda: 0.0,
            ..TrainConfig::default()
        };
        let m = train_cfcodereg(&r, &cfg).unwrap();
        for x in m
            .user_embeddings
            .data()
            .iter()
            .chain(m.item_embeddings.data())
        {
            assert!((-1.0..=1.0).contains(x));
        }
        for w in m.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let mean_dot: f64 = r
            .entries()
            .iter()
            .map(|e| {
                dot(
                    m.user_embeddings.row(e.user as usize),
                    m.item_embeddings.row(e.item as usize),
                )
            })
            .sum::<f64>()
            / r.len() as f64;
        assert!(mean_dot > 0.9 * 4.0, "mean dot {mean_dot}");
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let r = rank_two();
        let cfg = TrainConfig {
            epochs: 50,
            code_dim: 2,
            learning_rate: 1.0,
            lambda: 0.0,
            ..TrainConfig::default()
        };
        match train_cf(&r, &cfg) {
            Err(Error::Diverged { epoch, last_finite }) => {
                assert!(last_finite.user_embeddings.is_finite());
                assert_eq!(last_finite.loss_history.len(), epoch - 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn cfcodereg_targets() {
        assert_eq!(cfcodereg_target(1, true), 1.0);
        assert_eq!(cfcodereg_target(1, false), 0.0);
        assert_eq!(cfcodereg_target(5, false), 1.0);
        assert_eq!(cfcodereg_target(3, false), 0.5);
    }
}
