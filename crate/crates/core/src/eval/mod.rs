//! Ranking metrics, per-model evaluation reports, the sign-after-tanh gap
//! study and the χ² user-group analysis.

mod groups;
mod metrics;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binarize::{median_binarize, sign_binarize, BinaryCodeMatrix};
use crate::dataset::{derive_similarity, RatingMatrix, SimilarityMatrix, SplitPair};
use crate::error::{Error, Result};
use crate::index::{continuous_topk, HammingIndex};
use crate::models::{Baseline, Binarization, ModelKind, TrainedModel};
use crate::nn::DenseMatrix;

pub use groups::{
    chi_square_group_analysis, critical_value, user_characteristics, Characteristic, GroupAnalysis,
    GroupReport,
};
pub use metrics::{graded_ndcg_at_k, ndcg_at_k, recall_at_k, RecallNorm};

pub const DEFAULT_KS: [usize; 3] = [2, 6, 10];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Hamming,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub recall_norm: RecallNorm,
    /// Use test rating values as NDCG gains.
    pub graded: bool,
    /// Worker threads for per-user ranking.
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: DEFAULT_KS.to_vec(),
            recall_norm: RecallNorm::MinK,
            graded: false,
            jobs: 1,
        }
    }
}

/// Everything an evaluation needs from one split.
#[derive(Clone, Debug)]
pub struct EvalData {
    pub train_positives: SimilarityMatrix,
    pub test_relevant: SimilarityMatrix,
    /// Test ratings, used for graded gains.
    pub test: RatingMatrix,
}

impl EvalData {
    pub fn new(split: &SplitPair, threshold: u8) -> Self {
        EvalData {
            train_positives: derive_similarity(&split.train, threshold),
            test_relevant: derive_similarity(&split.test, threshold),
            test: split.test.clone(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.test_relevant.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.test_relevant.num_items()
    }
}

/// Ranked items for one user.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub user: u32,
    pub items: Vec<u32>,
    /// Hamming distances or inner products, aligned with `items`.
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserScores {
    pub user: u32,
    /// One value per cutoff, aligned with `MetricsReport::ks`.
    pub ndcg: Vec<f64>,
    pub recall: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub variant: String,
    pub code_bits: usize,
    pub ks: Vec<usize>,
    pub recall_norm: RecallNorm,
    pub graded: bool,
    pub mean_ndcg: Vec<f64>,
    pub mean_recall: Vec<f64>,
    pub per_user: Vec<UserScores>,
    /// Users without any relevant test item.
    pub skipped_users: usize,
}

impl MetricsReport {
    fn from_users(
        model: String,
        variant: String,
        code_bits: usize,
        opts: &EvalOptions,
        per_user: Vec<UserScores>,
        skipped: usize,
    ) -> Self {
        let mean = |f: &dyn Fn(&UserScores) -> f64| {
            if per_user.is_empty() {
                0.0
            } else {
                per_user.iter().map(f).sum::<f64>() / per_user.len() as f64
            }
        };
        let mean_ndcg = (0..opts.ks.len()).map(|i| mean(&|u| u.ndcg[i])).collect();
        let mean_recall = (0..opts.ks.len()).map(|i| mean(&|u| u.recall[i])).collect();
        MetricsReport {
            model,
            variant,
            code_bits,
            ks: opts.ks.clone(),
            recall_norm: opts.recall_norm,
            graded: opts.graded,
            mean_ndcg,
            mean_recall,
            per_user,
            skipped_users: skipped,
        }
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks
            .iter()
            .position(|&x| x == k)
            .map(|i| self.mean_ndcg[i])
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks
            .iter()
            .position(|&x| x == k)
            .map(|i| self.mean_recall[i])
    }

    /// Per-user NDCG@k in user order.
    pub fn user_ndcg(&self, k: usize) -> Option<Vec<f64>> {
        let i = self.ks.iter().position(|&x| x == k)?;
        Some(self.per_user.iter().map(|u| u.ndcg[i]).collect())
    }

    pub fn label(&self) -> String {
        if self.variant.is_empty() {
            self.model.clone()
        } else {
            format!("{}-{}", self.model, self.variant)
        }
    }
}

pub const METRICS_HEADER: &str = "model,variant,code_bits,k,metric,value";
pub const PER_USER_HEADER: &str = "model,variant,code_bits,user,k,ndcg,recall";

/// `model,variant,code_bits,k,metric,value` rows. Values use Rust's
/// shortest round-trip float formatting.
pub fn metrics_csv(reports: &[MetricsReport], header_comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = header_comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in reports {
        for (i, k) in r.ks.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{k},ndcg,{}",
                r.model, r.variant, r.code_bits, r.mean_ndcg[i]
            );
            let _ = writeln!(
                out,
                "{},{},{},{k},recall,{}",
                r.model, r.variant, r.code_bits, r.mean_recall[i]
            );
        }
    }
    out
}

pub fn per_user_csv(reports: &[MetricsReport], header_comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = header_comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    out.push_str(PER_USER_HEADER);
    out.push('\n');
    for r in reports {
        for u in &r.per_user {
            for (i, k) in r.ks.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{k},{},{}",
                    r.model, r.variant, r.code_bits, u.user, u.ndcg[i], u.recall[i]
                );
            }
        }
    }
    out
}

pub fn write_metrics(
    reports: &[MetricsReport],
    metrics_path: &Path,
    per_user_path: &Path,
    header_comment: Option<&str>,
) -> Result<()> {
    fs::write(metrics_path, metrics_csv(reports, header_comment))
        .map_err(|e| Error::io(metrics_path, e))?;
    fs::write(per_user_path, per_user_csv(reports, header_comment))
        .map_err(|e| Error::io(per_user_path, e))
}

/// Parses a metrics CSV back into `(model, variant, code_bits, k, metric, value)`.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<(String, String, usize, usize, String, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line != METRICS_HEADER {
                return Err(Error::format(
                    path,
                    format!("expected header `{METRICS_HEADER}`"),
                ));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: format!("bad metrics row `{line}`"),
        };
        if f.len() != 6 {
            return Err(bad());
        }
        rows.push((
            f[0].to_string(),
            f[1].to_string(),
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
            f[4].to_string(),
            f[5].parse().map_err(|_| bad())?,
        ));
    }
    if !seen_header {
        return Err(Error::format(path, "empty metrics file"));
    }
    Ok(rows)
}

/// One row of a per-user CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct PerUserRow {
    pub model: String,
    pub variant: String,
    pub code_bits: usize,
    pub user: u32,
    pub k: usize,
    pub ndcg: f64,
    pub recall: f64,
}

pub fn read_per_user_csv(path: &Path) -> Result<Vec<PerUserRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line != PER_USER_HEADER {
                return Err(Error::format(
                    path,
                    format!("expected header `{PER_USER_HEADER}`"),
                ));
            }
            seen_header = true;
            continue;
        }
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: format!("bad per-user row `{line}`"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        rows.push(PerUserRow {
            model: f[0].to_string(),
            variant: f[1].to_string(),
            code_bits: f[2].parse().map_err(|_| bad())?,
            user: f[3].parse().map_err(|_| bad())?,
            k: f[4].parse().map_err(|_| bad())?,
            ndcg: f[5].parse().map_err(|_| bad())?,
            recall: f[6].parse().map_err(|_| bad())?,
        });
    }
    if !seen_header {
        return Err(Error::format(path, "empty per-user file"));
    }
    Ok(rows)
}

/// Retrieval representation of one model variant.
#[derive(Clone, Debug)]
pub enum Codes {
    Binary {
        users: BinaryCodeMatrix,
        items: BinaryCodeMatrix,
    },
    Continuous {
        users: DenseMatrix,
        items: DenseMatrix,
    },
}

impl Codes {
    pub fn code_bits(&self) -> usize {
        match self {
            Codes::Binary { users, .. } => users.code_bits(),
            Codes::Continuous { users, .. } => users.cols(),
        }
    }
}

/// Codes for `variant`, which must be readable from how the model was
/// trained (ST/SST from tanh-trained models, S/C otherwise).
pub fn model_codes(model: &TrainedModel, variant: Binarization) -> Result<Codes> {
    if !variant.compatible_with(model.config.binarization) {
        return Err(Error::Contract(format!(
            "{}-{} cannot be read from a model trained as {}",
            model.kind, variant, model.config.binarization
        )));
    }
    let (u, i) = (&model.user_embeddings, &model.item_embeddings);
    Ok(match variant {
        Binarization::S if model.kind == ModelKind::CfCodeReg => Codes::Binary {
            users: median_binarize(u)?,
            items: median_binarize(i)?,
        },
        Binarization::S | Binarization::SST => Codes::Binary {
            users: sign_binarize(u),
            items: sign_binarize(i),
        },
        Binarization::ST | Binarization::C => Codes::Continuous {
            users: u.clone(),
            items: i.clone(),
        },
    })
}

/// Evaluates the variant the model was trained for. `mode` must agree with
/// it: Hamming for S/SST, continuous for ST/C.
pub fn evaluate_model(
    model: &TrainedModel,
    data: &EvalData,
    opts: &EvalOptions,
    mode: EvalMode,
) -> Result<MetricsReport> {
    let variant = model.config.binarization;
    let wanted = if variant.is_binary() {
        EvalMode::Hamming
    } else {
        EvalMode::Continuous
    };
    if mode != wanted {
        return Err(Error::Contract(format!(
            "{}-{} is evaluated in {:?} mode, not {:?}",
            model.kind, variant, wanted, mode
        )));
    }
    evaluate_variant(model, variant, data, opts)
}

pub fn evaluate_variant(
    model: &TrainedModel,
    variant: Binarization,
    data: &EvalData,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if model.user_embeddings.rows() != data.num_users()
        || model.item_embeddings.rows() != data.num_items()
    {
        return Err(Error::Contract(format!(
            "model covers {}x{} entities, split has {}x{}",
            model.user_embeddings.rows(),
            model.item_embeddings.rows(),
            data.num_users(),
            data.num_items()
        )));
    }
    let codes = model_codes(model, variant)?;
    evaluate_codes(&codes, model.kind.name(), variant.name(), data, opts)
}

/// Evaluates prebuilt codes under a given label.
pub fn evaluate_codes(
    codes: &Codes,
    model: &str,
    variant: &str,
    data: &EvalData,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    validate_options(opts)?;
    let index = match codes {
        Codes::Binary { items, .. } => Some(HammingIndex::build(items.clone())),
        Codes::Continuous { .. } => None,
    };
    let depth = *opts.ks.iter().max().expect("validated");
    let rank = |user: usize| -> Result<RankedList> {
        let exclude = data.train_positives.positives(user);
        match codes {
            Codes::Binary { users, .. } => {
                let hits = index
                    .as_ref()
                    .expect("binary index")
                    .query_row(users, user, depth, exclude)?;
                Ok(RankedList {
                    user: user as u32,
                    items: hits.iter().map(|h| h.item).collect(),
                    scores: hits.iter().map(|h| h.distance as f64).collect(),
                })
            }
            Codes::Continuous { users, items } => {
                let hits = continuous_topk(items, users.row(user), depth, exclude)?;
                Ok(RankedList {
                    user: user as u32,
                    items: hits.iter().map(|h| h.item).collect(),
                    scores: hits.iter().map(|h| h.score).collect(),
                })
            }
        }
    };
    let (per_user, skipped) = score_users(data, opts, rank)?;
    Ok(MetricsReport::from_users(
        model.into(),
        variant.into(),
        codes.code_bits(),
        opts,
        per_user,
        skipped,
    ))
}

/// Serves the baseline's global ranking, minus each user's training
/// positives.
pub fn evaluate_baseline(
    baseline: &Baseline,
    data: &EvalData,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    validate_options(opts)?;
    let depth = *opts.ks.iter().max().expect("validated");
    let rank = |user: usize| -> Result<RankedList> {
        let exclude = data.train_positives.positives(user);
        let items: Vec<u32> = baseline
            .ranking
            .iter()
            .copied()
            .filter(|i| exclude.binary_search(i).is_err())
            .take(depth)
            .collect();
        let scores = (0..items.len()).map(|p| p as f64).collect();
        Ok(RankedList {
            user: user as u32,
            items,
            scores,
        })
    };
    let (per_user, skipped) = score_users(data, opts, rank)?;
    Ok(MetricsReport::from_users(
        baseline.kind.name().into(),
        String::new(),
        0,
        opts,
        per_user,
        skipped,
    ))
}

fn validate_options(opts: &EvalOptions) -> Result<()> {
    if opts.ks.is_empty() || opts.ks.contains(&0) {
        return Err(Error::Config(
            "cutoffs must be a non-empty list of positive integers".into(),
        ));
    }
    Ok(())
}

/// Scores one ranked list against the user's relevant items.
pub fn score_ranking(list: &RankedList, data: &EvalData, opts: &EvalOptions) -> Option<UserScores> {
    let user = list.user as usize;
    let relevant = data.test_relevant.positives(user);
    if relevant.is_empty() {
        return None;
    }
    let gains: Vec<(u32, f64)> = if opts.graded {
        data.test
            .user_entries(user)
            .iter()
            .filter(|e| relevant.binary_search(&e.item).is_ok())
            .map(|e| (e.item, e.value as f64))
            .collect()
    } else {
        Vec::new()
    };
    let ndcg = opts
        .ks
        .iter()
        .map(|&k| {
            if opts.graded {
                graded_ndcg_at_k(&list.items, &gains, k).unwrap_or(0.0)
            } else {
                ndcg_at_k(&list.items, relevant, k).expect("relevant is non-empty")
            }
        })
        .collect();
    let recall = opts
        .ks
        .iter()
        .map(|&k| {
            recall_at_k(&list.items, relevant, k, opts.recall_norm).expect("relevant is non-empty")
        })
        .collect();
    Some(UserScores {
        user: list.user,
        ndcg,
        recall,
    })
}

fn score_users<F>(data: &EvalData, opts: &EvalOptions, rank: F) -> Result<(Vec<UserScores>, usize)>
where
    F: Fn(usize) -> Result<RankedList> + Sync,
{
    let users: Vec<usize> = (0..data.num_users())
        .filter(|&u| !data.test_relevant.positives(u).is_empty())
        .collect();
    let skipped = data.num_users() - users.len();
    let work = |chunk: &[usize]| -> Result<Vec<UserScores>> {
        chunk
            .iter()
            .map(|&u| Ok(score_ranking(&rank(u)?, data, opts).expect("user has relevant items")))
            .collect()
    };
    let jobs = opts.jobs.max(1);
    let per_user = if jobs == 1 || users.len() < 2 * jobs {
        work(&users)?
    } else {
        let chunk = users.len().div_ceil(jobs);
        let parts: Vec<Result<Vec<UserScores>>> = std::thread::scope(|s| {
            let handles: Vec<_> = users
                .chunks(chunk)
                .map(|c| s.spawn(move || work(c)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        });
        let mut all = Vec::with_capacity(users.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };
    Ok((per_user, skipped))
}

/// One metric at one cutoff under both readings of a tanh-trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub k: usize,
    pub metric: String,
    pub continuous: f64,
    pub binary: f64,
    /// `(continuous - binary) / continuous`; positive when sign hurts.
    pub relative_drop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub model: String,
    pub code_bits: usize,
    pub rows: Vec<GapRow>,
    pub continuous: MetricsReport,
    pub binary: MetricsReport,
}

impl GapReport {
    pub fn ndcg_drop(&self, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.metric == "ndcg")
            .map(|r| r.relative_drop)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,code_bits,k,metric,st,sst,relative_drop\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.model, self.code_bits, r.k, r.metric, r.continuous, r.binary, r.relative_drop
            );
        }
        out
    }
}

/// Evaluates a tanh-trained model with its continuous codes (ST) and with
/// sign applied to them (SST).
pub fn st_sst_gap(model: &TrainedModel, data: &EvalData, opts: &EvalOptions) -> Result<GapReport> {
    if !model.config.binarization.trains_with_tanh() {
        return Err(Error::Contract(format!(
            "{} was not trained with scaled tanh",
            model.kind
        )));
    }
    let st = evaluate_variant(model, Binarization::ST, data, opts)?;
    let sst = evaluate_variant(model, Binarization::SST, data, opts)?;
    Ok(gap_from_reports(model.kind.name(), st, sst))
}

pub fn gap_from_reports(model: &str, st: MetricsReport, sst: MetricsReport) -> GapReport {
    let drop = |c: f64, b: f64| if c == 0.0 { 0.0 } else { (c - b) / c };
    let mut rows = Vec::new();
    for (i, &k) in st.ks.iter().enumerate() {
        rows.push(GapRow {
            k,
            metric: "ndcg".into(),
            continuous: st.mean_ndcg[i],
            binary: sst.mean_ndcg[i],
            relative_drop: drop(st.mean_ndcg[i], sst.mean_ndcg[i]),
        });
        rows.push(GapRow {
            k,
            metric: "recall".into(),
            continuous: st.mean_recall[i],
            binary: sst.mean_recall[i],
            relative_drop: drop(st.mean_recall[i], sst.mean_recall[i]),
        });
    }
    GapReport {
        model: model.into(),
        code_bits: st.code_bits,
        rows,
        continuous: st,
        binary: sst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split_per_user, Rating};
    use crate::models::TrainConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ratings(users: usize, items: usize, seed: u64) -> RatingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for u in 0..users as u32 {
            for i in 0..items as u32 {
                if rng.gen_bool(0.3) {
                    entries.push(Rating {
                        user: u,
                        item: i,
                        value: rng.gen_range(1..=5),
                        timestamp: None,
                    });
                }
            }
        }
        RatingMatrix::new(users, items, entries).unwrap()
    }

    fn fake_model(u: DenseMatrix, i: DenseMatrix, b: Binarization) -> TrainedModel {
        TrainedModel {
            kind: ModelKind::Ccsr,
            config: TrainConfig {
                binarization: b,
                code_dim: u.cols(),
                ..TrainConfig::default()
            },
            user_embeddings: u,
            item_embeddings: i,
            networks: None,
            loss_history: vec![1.0],
            warnings: vec![],
            inputs: None,
        }
    }

    #[test]
    fn per_user_scores_match_external_loop() {
        let r = random_ratings(20, 30, 1);
        let split = split_per_user(&r, 0.8, 2).unwrap();
        let data = EvalData::new(&split, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DenseMatrix::from_fn(20, 6, |_, _| rng.gen_range(-1.0..1.0));
        let i = DenseMatrix::from_fn(30, 6, |_, _| rng.gen_range(-1.0..1.0));
        for (variant, mode) in [
            (Binarization::S, EvalMode::Hamming),
            (Binarization::C, EvalMode::Continuous),
        ] {
            let m = fake_model(u.clone(), i.clone(), variant);
            let report = evaluate_model(&m, &data, &EvalOptions::default(), mode).unwrap();
            let mut expected = Vec::new();
            for user in 0..20usize {
                let rel = data.test_relevant.positives(user);
                if rel.is_empty() {
                    continue;
                }
                let train_pos = data.train_positives.positives(user);
                let mut scored: Vec<(f64, u32)> = (0..30u32)
                    .filter(|it| !train_pos.contains(it))
                    .map(|it| {
                        let s = (0..6)
                            .map(|t| {
                                let (a, b) = (u.get(user, t), i.get(it as usize, t));
                                if variant == Binarization::S {
                                    -(((a >= 0.0) != (b >= 0.0)) as u32 as f64)
                                } else {
                                    a * b
                                }
                            })
                            .sum::<f64>();
                        (s, it)
                    })
                    .collect();
                scored.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
                let ranked: Vec<u32> = scored.iter().map(|s| s.1).collect();
                expected.push((
                    user as u32,
                    ndcg_at_k(&ranked, rel, 10).unwrap(),
                    recall_at_k(&ranked, rel, 6, RecallNorm::MinK).unwrap(),
                ));
            }
            assert_eq!(report.per_user.len(), expected.len());
            for (got, exp) in report.per_user.iter().zip(&expected) {
                assert_eq!(got.user, exp.0);
                assert!((got.ndcg[2] - exp.1).abs() < 1e-12);
                assert!((got.recall[1] - exp.2).abs() < 1e-12);
            }
            let mean: f64 =
                report.per_user.iter().map(|s| s.ndcg[2]).sum::<f64>() / expected.len() as f64;
            assert!((report.ndcg_at(10).unwrap() - mean).abs() < 1e-12);
            assert_eq!(report.skipped_users + report.per_user.len(), 20);
        }
    }

    #[test]
    fn ideal_codes_score_one() {
        // each user's sole relevant test item shares its code; all else is far
        let n = 6;
        let train = RatingMatrix::new(n, n, vec![]).unwrap();
        let test = RatingMatrix::new(
            n,
            n,
            (0..n as u32)
                .map(|u| Rating {
                    user: u,
                    item: u,
                    value: 5,
                    timestamp: None,
                })
                .collect(),
        )
        .unwrap();
        let split = SplitPair {
            train,
            test,
            seed: 0,
            train_ratio: 0.8,
            protocol: crate::dataset::SplitProtocol::PerUser,
        };
        let data = EvalData::new(&split, 3);
        let codes = DenseMatrix::from_fn(n, 8, |i, j| if i == j { 1.0 } else { -1.0 });
        let m = fake_model(codes.clone(), codes, Binarization::S);
        let report = evaluate_model(&m, &data, &EvalOptions::default(), EvalMode::Hamming).unwrap();
        assert!(report
            .mean_ndcg
            .iter()
            .chain(&report.mean_recall)
            .all(|&v| v == 1.0));
    }

    #[test]
    fn mode_mismatch_is_contract_error() {
        let r = random_ratings(5, 5, 2);
        let data = EvalData::new(&split_per_user(&r, 0.8, 1).unwrap(), 3);
        let m = fake_model(
            DenseMatrix::zeros(5, 3),
            DenseMatrix::zeros(5, 3),
            Binarization::C,
        );
        assert!(matches!(
            evaluate_model(&m, &data, &EvalOptions::default(), EvalMode::Hamming),
            Err(Error::Contract(_))
        ));
        assert!(model_codes(&m, Binarization::SST).is_err());
    }

    #[test]
    fn saturated_codes_have_no_gap() {
        let r = random_ratings(15, 25, 5);
        let data = EvalData::new(&split_per_user(&r, 0.8, 1).unwrap(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = DenseMatrix::from_fn(15, 10, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        let i = DenseMatrix::from_fn(25, 10, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        let m = fake_model(u, i, Binarization::ST);
        let gap = st_sst_gap(&m, &data, &EvalOptions::default()).unwrap();
        assert!(gap.rows.iter().all(|r| r.relative_drop == 0.0));
    }

    #[test]
    fn near_saturated_codes_have_small_gap() {
        // item j differs from the shared user code in its first j bits, so
        // every Hamming distance is distinct and perturbations of size
        // ≤ 0.01 cannot reorder items
        let r = random_ratings(40, 60, 6);
        let data = EvalData::new(&split_per_user(&r, 0.8, 1).unwrap(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bits = 64;
        let base: Vec<f64> = (0..bits)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let mut jitter = |v: f64| v * rng.gen_range(0.99..=1.0);
        let u = DenseMatrix::from_fn(40, bits, |_, t| jitter(base[t]));
        let i = DenseMatrix::from_fn(60, bits, |j, t| {
            jitter(if t < j { -base[t] } else { base[t] })
        });
        let m = fake_model(u, i, Binarization::ST);
        let gap = st_sst_gap(&m, &data, &EvalOptions::default()).unwrap();
        for row in &gap.rows {
            assert!(row.relative_drop.abs() < 1e-3, "{row:?}");
        }
    }

    #[test]
    fn random_baseline_is_low_and_top_is_consistent() {
        let r = random_ratings(30, 80, 7);
        let split = split_per_user(&r, 0.8, 1).unwrap();
        let data = EvalData::new(&split, 3);
        let opts = EvalOptions::default();
        let rand = evaluate_baseline(&Baseline::random(80, 1), &data, &opts).unwrap();
        assert!(rand.ndcg_at(10).unwrap() < 0.5);
        let top = evaluate_baseline(&Baseline::top(&split.train), &data, &opts).unwrap();
        assert_eq!(top.label(), "Top");
        assert_eq!(top.per_user.len(), rand.per_user.len());
    }

    #[test]
    fn threads_do_not_change_results() {
        let r = random_ratings(50, 40, 3);
        let data = EvalData::new(&split_per_user(&r, 0.8, 1).unwrap(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = fake_model(
            DenseMatrix::from_fn(50, 12, |_, _| rng.gen_range(-1.0..1.0)),
            DenseMatrix::from_fn(40, 12, |_, _| rng.gen_range(-1.0..1.0)),
            Binarization::S,
        );
        let one = evaluate_model(&m, &data, &EvalOptions::default(), EvalMode::Hamming).unwrap();
        let four = evaluate_model(
            &m,
            &data,
            &EvalOptions {
                jobs: 4,
                ..EvalOptions::default()
            },
            EvalMode::Hamming,
        )
        .unwrap();
        assert_eq!(one, four);
        assert_eq!(
            metrics_csv(std::slice::from_ref(&one), None),
            metrics_csv(&[four], None)
        );
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = random_ratings(10, 10, 3);
        let data = EvalData::new(&split_per_user(&r, 0.8, 1).unwrap(), 2);
        let rep =
            evaluate_baseline(&Baseline::random(10, 2), &data, &EvalOptions::default()).unwrap();
        let (a, b) = (dir.path().join("m.csv"), dir.path().join("u.csv"));
        write_metrics(std::slice::from_ref(&rep), &a, &b, Some("run abc")).unwrap();
        let rows = read_metrics_csv(&a).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].5, rep.mean_ndcg[0]);
        assert!(fs::read_to_string(&b).unwrap().starts_with("# run abc\n"));
        let users = read_per_user_csv(&b).unwrap();
        assert_eq!(users.len(), rep.per_user.len() * 3);
        assert_eq!(users[0].user, rep.per_user[0].user);
        assert_eq!(users[0].ndcg, rep.per_user[0].ndcg[0]);
        assert_eq!(users[2].k, 10);
    }
}
