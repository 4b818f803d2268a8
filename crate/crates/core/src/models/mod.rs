//! Trainers for the factorisation and autoencoder recommenders, plus the two
//! non-learned baselines.

mod autoenc;
mod baselines;
mod checkpoint;
mod mf;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{RatingMatrix, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::nn::{Autoencoder, DenseMatrix, Mode};

pub use autoenc::{sample_pairs, train_aecf, train_ccsr, SampledPairs};
pub use baselines::{baseline_random, baseline_top, Baseline};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mf::{train_cf, train_cfcodereg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Random,
    Top,
    Cf,
    CfCodeReg,
    Aecf,
    Ccsr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Random,
        ModelKind::Top,
        ModelKind::Cf,
        ModelKind::CfCodeReg,
        ModelKind::Aecf,
        ModelKind::Ccsr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Random => "Random",
            ModelKind::Top => "Top",
            ModelKind::Cf => "CF",
            ModelKind::CfCodeReg => "CFcodeReg",
            ModelKind::Aecf => "AECF",
            ModelKind::Ccsr => "CCSR",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, ModelKind::Random | ModelKind::Top)
    }

    pub fn is_autoencoder(self) -> bool {
        matches!(self, ModelKind::Aecf | ModelKind::Ccsr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// How trained embeddings become the codes used for retrieval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Binarization {
    /// Sign of the trained features (median threshold for CFcodeReg).
    S,
    /// Scaled tanh during training, continuous codes at retrieval.
    ST,
    /// Scaled tanh during training, sign at retrieval.
    SST,
    /// Continuous features, no binarization.
    C,
}

impl Binarization {
    pub const ALL: [Binarization; 4] = [
        Binarization::S,
        Binarization::ST,
        Binarization::SST,
        Binarization::C,
    ];

    pub fn trains_with_tanh(self) -> bool {
        matches!(self, Binarization::ST | Binarization::SST)
    }

    /// Whether retrieval runs over packed codes.
    pub fn is_binary(self) -> bool {
        matches!(self, Binarization::S | Binarization::SST)
    }

    /// Variants that can be read off a model trained with `self`.
    pub fn compatible_with(self, trained: Binarization) -> bool {
        self.trains_with_tanh() == trained.trains_with_tanh()
    }

    pub fn name(self) -> &'static str {
        match self {
            Binarization::S => "S",
            Binarization::ST => "ST",
            Binarization::SST => "SST",
            Binarization::C => "C",
        }
    }
}

impl fmt::Display for Binarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Binarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Binarization::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown binarization `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub code_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 weight of the factorisation models.
    pub lambda: f64,
    pub lambda_ae: f64,
    pub lambda_b: f64,
    pub dropout_rate: f64,
    pub binarization: Binarization,
    pub alpha0: f64,
    /// Scale reached at the last epoch.
    pub alpha_final: f64,
    /// Negatives drawn per positive pair.
    pub negative_ratio: f64,
    /// Hidden widths; empty means the per-kind default.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            code_dim: 20,
            epochs: 30,
            batch_size: 256,
            learning_rate: 1e-3,
            lambda: 0.4,
            lambda_ae: 0.1,
            lambda_b: 0.0001,
            dropout_rate: 0.6,
            binarization: Binarization::S,
            alpha0: 1.0,
            alpha_final: 200.0,
            negative_ratio: 1.0,
            hidden: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for one model kind and code length.
    pub fn for_model(kind: ModelKind, code_dim: usize) -> Self {
        let mut c = TrainConfig {
            code_dim,
            dropout_rate: default_dropout(code_dim),
            ..TrainConfig::default()
        };
        match kind {
            ModelKind::Cf => {
                c.epochs = 100;
                c.learning_rate = 0.01;
            }
            ModelKind::CfCodeReg => {
                c.epochs = 100;
                c.learning_rate = 0.05;
            }
            _ => {}
        }
        c
    }

    pub fn hidden_for(&self, kind: ModelKind) -> Vec<usize> {
        if !self.hidden.is_empty() {
            return self.hidden.clone();
        }
        match kind {
            ModelKind::Aecf => vec![512, 256, 128],
            _ => vec![128],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.code_dim == 0 {
            return fail("code_dim must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("dropout_rate", self.dropout_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.dropout_rate >= 1.0 {
            return fail("dropout_rate must be below 1".into());
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda_ae", self.lambda_ae),
            ("lambda_b", self.lambda_b),
            ("negative_ratio", self.negative_ratio),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be non-negative"));
            }
        }
        if !(self.alpha0 > 0.0 && self.alpha_final > self.alpha0) {
            return fail("alpha schedule needs 0 < alpha0 < alpha_final".into());
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be positive".into());
        }
        Ok(())
    }
}

/// 0.6 up to 20 bits, 0.8 beyond.
pub fn default_dropout(code_dim: usize) -> f64 {
    if code_dim <= 20 {
        0.6
    } else {
        0.8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Users,
    Items,
}

/// Learned user and item networks of the autoencoder kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub user: Autoencoder,
    pub item: Autoencoder,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub config: TrainConfig,
    /// Final codes: `tanh(α_final f)` for tanh-trained models, raw `f`
    /// otherwise.
    pub user_embeddings: DenseMatrix,
    pub item_embeddings: DenseMatrix,
    pub networks: Option<Networks>,
    /// Summed training objective per epoch.
    pub loss_history: Vec<f64>,
    pub warnings: Vec<String>,
    /// Inputs the networks encode (the training ratings).
    pub inputs: Option<RatingMatrix>,
}

impl TrainedModel {
    /// Code scale applied at encode time, if any.
    pub fn code_alpha(&self) -> Option<f64> {
        self.config
            .binarization
            .trains_with_tanh()
            .then_some(self.config.alpha_final)
    }

    pub fn embeddings(&self, side: Side) -> &DenseMatrix {
        match side {
            Side::Users => &self.user_embeddings,
            Side::Items => &self.item_embeddings,
        }
    }
}

/// Trains any learned kind. `sim` is only read by CCSR.
pub fn train_model(
    kind: ModelKind,
    train: &RatingMatrix,
    sim: &SimilarityMatrix,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    match kind {
        ModelKind::Cf => train_cf(train, cfg),
        ModelKind::CfCodeReg => train_cfcodereg(train, cfg),
        ModelKind::Aecf => train_aecf(train, cfg),
        ModelKind::Ccsr => train_ccsr(train, sim, cfg),
        ModelKind::Random | ModelKind::Top => Err(Error::Contract(format!(
            "{kind} is a baseline and has nothing to train"
        ))),
    }
}

/// Eval-mode codes. Factorisation kinds return their stored factors;
/// autoencoder kinds run the encoder over the stored inputs.
pub fn encode(model: &TrainedModel, side: Side) -> Result<DenseMatrix> {
    match (&model.networks, &model.inputs) {
        (Some(_), Some(inputs)) => encode_inputs(model, side, inputs),
        (Some(_), None) => Err(Error::Contract(
            "autoencoder model has no inputs attached; load it with its training ratings".into(),
        )),
        (None, _) if model.kind.is_autoencoder() => {
            Err(Error::Contract("model has not been trained".into()))
        }
        (None, _) => Ok(model.embeddings(side).clone()),
    }
}

/// Runs the trained encoder over `ratings` (rows for users, columns for items).
pub fn encode_inputs(
    model: &TrainedModel,
    side: Side,
    ratings: &RatingMatrix,
) -> Result<DenseMatrix> {
    let nets = model
        .networks
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("{} has no encoder", model.kind)))?;
    let rows = InputRows::new(ratings, side);
    let net = match side {
        Side::Users => &nets.user,
        Side::Items => &nets.item,
    };
    encode_all(net, &rows, model.code_alpha())
}

/// Sparse input rows for one side: `R` rows for users, `Rᵀ` rows for items.
pub(crate) struct InputRows {
    rows: Vec<Vec<(u32, f64)>>,
    width: usize,
}

impl InputRows {
    pub(crate) fn new(ratings: &RatingMatrix, side: Side) -> Self {
        match side {
            Side::Users => InputRows {
                rows: (0..ratings.num_users())
                    .map(|u| {
                        ratings
                            .user_entries(u)
                            .iter()
                            .map(|r| (r.item, r.value as f64))
                            .collect()
                    })
                    .collect(),
                width: ratings.num_items(),
            },
            Side::Items => InputRows {
                rows: ratings
                    .item_columns()
                    .into_iter()
                    .map(|c| c.into_iter().map(|(u, v)| (u, v as f64)).collect())
                    .collect(),
                width: ratings.num_users(),
            },
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.rows.len()
    }

    pub(crate) fn width(&self) -> usize {
        self.width
    }

    pub(crate) fn dense(&self, indices: &[usize]) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(indices.len(), self.width);
        for (k, &i) in indices.iter().enumerate() {
            let row = m.row_mut(k);
            for &(j, v) in &self.rows[i] {
                row[j as usize] = v;
            }
        }
        m
    }
}

const ENCODE_CHUNK: usize = 1024;

pub(crate) fn encode_all(
    net: &Autoencoder,
    rows: &InputRows,
    alpha: Option<f64>,
) -> Result<DenseMatrix> {
    let mut out = Vec::with_capacity(rows.len() * net.code_dim());
    let all: Vec<usize> = (0..rows.len()).collect();
    for chunk in all.chunks(ENCODE_CHUNK) {
        let x = rows.dense(chunk);
        let pass = net.forward(&x, Mode::Eval, alpha, 0)?;
        out.extend_from_slice(pass.code.data());
    }
    DenseMatrix::new(rows.len(), net.code_dim(), out)
}

/// Appends a warning when the loss rose by more than half over the previous
/// epoch; fails on a non-finite loss.
pub(crate) fn record_epoch(
    history: &mut Vec<f64>,
    warnings: &mut Vec<String>,
    epoch: usize,
    loss: f64,
) -> bool {
    if !loss.is_finite() {
        return false;
    }
    if let Some(&prev) = history.last() {
        if prev > 0.0 && loss > 1.5 * prev {
            warnings.push(format!(
                "epoch {epoch}: loss rose from {prev:.6e} to {loss:.6e}"
            ));
        }
    }
    history.push(loss);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        for b in Binarization::ALL {
            assert_eq!(b.name().parse::<Binarization>().unwrap(), b);
        }
        assert!("svd".parse::<ModelKind>().is_err());
    }

    #[test]
    fn dropout_defaults_follow_code_length() {
        for r in [5, 10, 20] {
            assert_eq!(TrainConfig::for_model(ModelKind::Aecf, r).dropout_rate, 0.6);
        }
        assert_eq!(
            TrainConfig::for_model(ModelKind::Aecf, 40).dropout_rate,
            0.8
        );
    }

    #[test]
    fn epoch_defaults() {
        assert_eq!(TrainConfig::for_model(ModelKind::Ccsr, 10).epochs, 30);
        assert_eq!(TrainConfig::for_model(ModelKind::Cf, 10).epochs, 100);
        let c = TrainConfig::for_model(ModelKind::Ccsr, 10);
        assert_eq!((c.lambda_ae, c.lambda_b, c.lambda), (0.1, 0.0001, 0.4));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            code_dim: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            dropout_rate: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variant_compatibility() {
        assert!(Binarization::SST.compatible_with(Binarization::ST));
        assert!(Binarization::C.compatible_with(Binarization::S));
        assert!(!Binarization::S.compatible_with(Binarization::ST));
    }

    #[test]
    fn loss_jump_is_flagged() {
        let (mut h, mut w) = (Vec::new(), Vec::new());
        assert!(record_epoch(&mut h, &mut w, 1, 10.0));
        assert!(record_epoch(&mut h, &mut w, 2, 14.0));
        assert!(w.is_empty());
        assert!(record_epoch(&mut h, &mut w, 3, 30.0));
        assert_eq!(w.len(), 1);
        assert!(!record_epoch(&mut h, &mut w, 4, f64::NAN));
        assert_eq!(h.len(), 3);
    }
}
