//! Autoencoder recommenders: rating reconstruction (AECF) and cross-entropy
//! similarity (CCSR).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    encode_all, record_epoch, InputRows, ModelKind, Networks, Side, TrainConfig, TrainedModel,
};
use crate::binarize::AlphaSchedule;
use crate::dataset::{RatingMatrix, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::losses::{aecf_total_loss, ccsr_total_loss, AeTerms, PairBatch};
use crate::nn::{Autoencoder, AutoencoderSpec, Mode, Optimizer};
use crate::rng::{derive_seed, stream};

/// Pairs for one user batch. `items` lists the distinct items touched, and
/// `pairs` index into `(users, items)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPairs {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<f64>,
    pub ratings: Option<Vec<f64>>,
}

/// Every positive of each user plus `ratio` times as many negatives drawn
/// uniformly from that user's non-positive items.
pub fn sample_pairs(
    users: &[usize],
    sim: &SimilarityMatrix,
    ratio: f64,
    rng: &mut ChaCha8Rng,
) -> SampledPairs {
    let n = sim.num_items();
    let mut builder = PairBuilder::new(users.to_vec(), n);
    for (a, &u) in users.iter().enumerate() {
        let pos = sim.positives(u);
        for &i in pos {
            builder.push(a, i as usize, 1.0);
        }
        let free = n - pos.len();
        let wanted = ((pos.len() as f64) * ratio).round() as usize;
        let count = wanted.min(free);
        if count == 0 {
            continue;
        }
        if count * 2 > free {
            let mut pool: Vec<usize> = (0..n)
                .filter(|&i| pos.binary_search(&(i as u32)).is_err())
                .collect();
            pool.shuffle(rng);
            for &i in &pool[..count] {
                builder.push(a, i, 0.0);
            }
        } else {
            let mut taken: Vec<usize> = Vec::with_capacity(count);
            while taken.len() < count {
                let i = rng.gen_range(0..n);
                if pos.binary_search(&(i as u32)).is_err() && !taken.contains(&i) {
                    taken.push(i);
                    builder.push(a, i, 0.0);
                }
            }
        }
    }
    builder.finish(None)
}

struct PairBuilder {
    users: Vec<usize>,
    slot: Vec<usize>,
    items: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    labels: Vec<f64>,
}

impl PairBuilder {
    fn new(users: Vec<usize>, num_items: usize) -> Self {
        PairBuilder {
            users,
            slot: vec![usize::MAX; num_items],
            items: Vec::new(),
            pairs: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn push(&mut self, a: usize, item: usize, label: f64) {
        if self.slot[item] == usize::MAX {
            self.slot[item] = self.items.len();
            self.items.push(item);
        }
        self.pairs.push((a, self.slot[item]));
        self.labels.push(label);
    }

    fn finish(self, ratings: Option<Vec<f64>>) -> SampledPairs {
        SampledPairs {
            users: self.users,
            items: self.items,
            pairs: self.pairs,
            labels: self.labels,
            ratings,
        }
    }
}

fn observed_pairs(users: &[usize], train: &RatingMatrix) -> SampledPairs {
    let mut builder = PairBuilder::new(users.to_vec(), train.num_items());
    let mut ratings = Vec::new();
    for (a, &u) in users.iter().enumerate() {
        for e in train.user_entries(u) {
            builder.push(a, e.item as usize, 1.0);
            ratings.push(e.value as f64);
        }
    }
    builder.finish(Some(ratings))
}

enum Objective<'a> {
    Rating,
    Similarity(&'a SimilarityMatrix),
}

struct Tower {
    net: Autoencoder,
    opt: Optimizer,
}

/// Autoencoder with rating-reconstruction coupling of user and item codes.
/// Inputs are the raw rating rows (`R` for users, `Rᵀ` for items).
pub fn train_aecf(train: &RatingMatrix, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_ae(train, Objective::Rating, cfg, ModelKind::Aecf)
}

/// Autoencoder with the cross-entropy similarity objective. `sim` must come
/// from the training ratings only.
pub fn train_ccsr(
    train: &RatingMatrix,
    sim: &SimilarityMatrix,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    if sim.num_users() != train.num_users() || sim.num_items() != train.num_items() {
        return Err(Error::Shape(format!(
            "similarity is {}x{}, ratings are {}x{}",
            sim.num_users(),
            sim.num_items(),
            train.num_users(),
            train.num_items()
        )));
    }
    train_ae(train, Objective::Similarity(sim), cfg, ModelKind::Ccsr)
}

fn train_ae(
    train: &RatingMatrix,
    objective: Objective<'_>,
    cfg: &TrainConfig,
    kind: ModelKind,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.num_users() == 0 || train.num_items() == 0 {
        return Err(Error::Contract(
            "cannot train on an empty rating matrix".into(),
        ));
    }
    let user_rows = InputRows::new(train, Side::Users);
    let item_rows = InputRows::new(train, Side::Items);
    let hidden = cfg.hidden_for(kind);
    let mut init = stream(cfg.seed, "ae-init");
    let mut make = |width: usize| -> Result<Tower> {
        let spec = AutoencoderSpec::new(width, hidden.clone(), cfg.code_dim, cfg.dropout_rate);
        Ok(Tower {
            net: Autoencoder::new(spec, &mut init)?,
            opt: Optimizer::adam(cfg.learning_rate),
        })
    };
    let mut user = make(user_rows.width())?;
    let mut item = make(item_rows.width())?;
    let schedule = if cfg.binarization.trains_with_tanh() && cfg.epochs > 0 {
        Some(AlphaSchedule::between(
            cfg.alpha0,
            cfg.alpha_final,
            cfg.epochs,
        )?)
    } else {
        None
    };
    let mut order: Vec<usize> = (0..train.num_users()).collect();
    let mut shuffle = stream(cfg.seed, "ae-order");
    let mut negatives = stream(cfg.seed, "ae-negatives");
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut warnings = Vec::new();
    let finish = |user: &Autoencoder,
                  item: &Autoencoder,
                  history: Vec<f64>,
                  warnings: Vec<String>|
     -> Result<TrainedModel> {
        let alpha = cfg
            .binarization
            .trains_with_tanh()
            .then_some(cfg.alpha_final);
        Ok(TrainedModel {
            kind,
            config: cfg.clone(),
            user_embeddings: encode_all(user, &user_rows, alpha)?,
            item_embeddings: encode_all(item, &item_rows, alpha)?,
            networks: Some(Networks {
                user: user.clone(),
                item: item.clone(),
            }),
            loss_history: history,
            warnings,
            inputs: Some(train.clone()),
        })
    };
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let snapshot = (user.net.clone(), item.net.clone());
        let alpha = schedule.map(|s| s.alpha(epoch));
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for batch_users in order.chunks(cfg.batch_size) {
            let sampled = match objective {
                Objective::Rating => observed_pairs(batch_users, train),
                Objective::Similarity(sim) => {
                    sample_pairs(batch_users, sim, cfg.negative_ratio, &mut negatives)
                }
            };
            step += 1;
            let value = ae_step(
                &mut user, &mut item, &user_rows, &item_rows, sampled, alpha, cfg, &objective, step,
            );
            match value {
                Ok(v) if v.is_finite() => epoch_loss += v,
                Ok(_) | Err(Error::NonFinite(_)) => {
                    epoch_loss = f64::NAN;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !record_epoch(&mut history, &mut warnings, epoch, epoch_loss) {
            return Err(Error::Diverged {
                epoch,
                last_finite: Box::new(finish(&snapshot.0, &snapshot.1, history, warnings)?),
            });
        }
    }
    finish(&user.net, &item.net, history, warnings)
}

#[allow(clippy::too_many_arguments)]
fn ae_step(
    user: &mut Tower,
    item: &mut Tower,
    user_rows: &InputRows,
    item_rows: &InputRows,
    sampled: SampledPairs,
    alpha: Option<f64>,
    cfg: &TrainConfig,
    objective: &Objective<'_>,
    step: u64,
) -> Result<f64> {
    let x = user_rows.dense(&sampled.users);
    let y = item_rows.dense(&sampled.items);
    let fu = user.net.forward(
        &x,
        Mode::Train,
        alpha,
        derive_seed(cfg.seed ^ step, "dropout-user"),
    )?;
    let fi = item.net.forward(
        &y,
        Mode::Train,
        alpha,
        derive_seed(cfg.seed ^ step, "dropout-item"),
    )?;
    let batch = PairBatch::new(
        fu.code.clone(),
        fi.code.clone(),
        sampled.pairs,
        sampled.labels,
        sampled.ratings,
    )?;
    let ae = AeTerms {
        x: &x,
        x_hat: &fu.reconstruction,
        y: &y,
        y_hat: &fi.reconstruction,
    };
    let loss = match objective {
        Objective::Rating => aecf_total_loss(&batch, ae, cfg.lambda_ae)?,
        Objective::Similarity(_) => ccsr_total_loss(&batch, ae, cfg.lambda_b, cfg.lambda_ae)?,
    };
    if !loss.value.is_finite() {
        return Ok(f64::NAN);
    }
    let gu = user.net.backward(
        &fu.cache,
        Some(&loss.grad_user_codes),
        Some(&loss.grad_x_hat),
    )?;
    let gi = item.net.backward(
        &fi.cache,
        Some(&loss.grad_item_codes),
        Some(&loss.grad_y_hat),
    )?;
    user.opt
        .step(&mut user.net.parameters_mut(), &gu.slices())?;
    item.opt
        .step(&mut item.net.parameters_mut(), &gi.slices())?;
    Ok(loss.value)
}
