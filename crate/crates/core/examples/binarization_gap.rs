//! Train CCSR and AECF with scaled tanh codes, then compare retrieval with
//! the continuous codes (ST) against their signs (SST).
//!
//! cargo run --release --example binarization_gap

use hashrec::binarize::{scaled_tanh, AlphaSchedule};
use hashrec::dataset::{derive_similarity, split_per_user};
use hashrec::eval::{st_sst_gap, EvalData, EvalOptions};
use hashrec::models::{train_model, Binarization, ModelKind, TrainConfig};
use hashrec::nn::DenseMatrix;
use hashrec::synthetic::{cluster_toy, ClusterSpec};

fn main() -> hashrec::Result<()> {
    let schedule = AlphaSchedule::reaching(200.0, 20)?;
    println!(
        "alpha: epoch 1 {:.2}, epoch 10 {:.2}, epoch 20 {:.2}",
        schedule.alpha(1),
        schedule.alpha(10),
        schedule.alpha(20)
    );
    let f = DenseMatrix::from_rows(&[vec![-0.5, -0.01, 0.0, 0.01, 0.5]])?;
    for alpha in [1.0, 10.0, 200.0] {
        let t = scaled_tanh(&f, alpha)?;
        println!(
            "tanh({alpha:>5} f) = {:?}",
            t.row(0)
                .iter()
                .map(|v| format!("{v:+.3}"))
                .collect::<Vec<_>>()
        );
    }

    let ratings = cluster_toy(&ClusterSpec {
        users: 100,
        items: 80,
        clusters: 4,
        ..ClusterSpec::default()
    })?;
    let split = split_per_user(&ratings, 0.8, 2)?;
    let sim = derive_similarity(&split.train, 3);
    let data = EvalData::new(&split, 3);
    let opts = EvalOptions::default();
    for kind in [ModelKind::Ccsr, ModelKind::Aecf] {
        let mut cfg = TrainConfig::for_model(kind, 12);
        cfg.binarization = Binarization::ST;
        cfg.epochs = 20;
        cfg.hidden = vec![32];
        cfg.seed = 9;
        let model = train_model(kind, &split.train, &sim, &cfg)?;
        let gap = st_sst_gap(&model, &data, &opts)?;
        for &k in &opts.ks {
            println!(
                "{kind:<5} NDCG@{k:<2} ST {:.4}  SST {:.4}  relative drop {:+.2}%",
                gap.continuous.ndcg_at(k).unwrap(),
                gap.binary.ndcg_at(k).unwrap(),
                100.0 * gap.ndcg_drop(k).unwrap()
            );
        }
    }
    Ok(())
}
