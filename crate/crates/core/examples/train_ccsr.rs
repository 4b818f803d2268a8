//! Train CCSR with sign codes on the two-cluster toy and rank items by
//! Hamming distance.
//!
//! cargo run --release --example train_ccsr

use hashrec::binarize::sign_binarize;
use hashrec::dataset::{derive_similarity, split_per_user};
use hashrec::eval::{evaluate_model, EvalData, EvalMode, EvalOptions};
use hashrec::index::HammingIndex;
use hashrec::models::{train_ccsr, ModelKind, TrainConfig};
use hashrec::synthetic::{cluster_toy, ClusterSpec};

fn main() -> hashrec::Result<()> {
    let spec = ClusterSpec {
        users: 80,
        items: 64,
        ..ClusterSpec::default()
    };
    let ratings = cluster_toy(&spec)?;
    let split = split_per_user(&ratings, 0.8, 1)?;
    let sim = derive_similarity(&split.train, 3);

    let mut cfg = TrainConfig::for_model(ModelKind::Ccsr, 16);
    cfg.epochs = 20;
    cfg.hidden = vec![32];
    cfg.seed = 5;
    let model = train_ccsr(&split.train, &sim, &cfg)?;
    for (e, loss) in model.loss_history.iter().enumerate().step_by(4) {
        println!("epoch {:>2}  loss {loss:.3}", e + 1);
    }
    for w in &model.warnings {
        println!("warning: {w}");
    }

    let data = EvalData::new(&split, 3);
    let report = evaluate_model(&model, &data, &EvalOptions::default(), EvalMode::Hamming)?;
    for &k in &report.ks {
        println!(
            "NDCG@{k:<2} {:.4}  Recall@{k:<2} {:.4}",
            report.ndcg_at(k).unwrap(),
            report.recall_at(k).unwrap()
        );
    }

    let users = sign_binarize(&model.user_embeddings);
    let index = HammingIndex::build(sign_binarize(&model.item_embeddings));
    for u in [0, spec.users - 1] {
        let hits = index.query_row(&users, u, 8, sim.positives(u))?;
        let same = hits
            .iter()
            .filter(|h| spec.item_cluster(h.item as usize) == spec.user_cluster(u))
            .count();
        println!(
            "user {u:>2} (cluster {}): {same}/8 recommendations from its own cluster",
            spec.user_cluster(u)
        );
    }
    Ok(())
}
