//! Split users by which of two models serves them better and test whether
//! the groups differ in rating count, mean or spread (Pearson χ²).
//!
//! cargo run --release --example group_analysis

use hashrec::dataset::{derive_similarity, split_per_user};
use hashrec::eval::{
    chi_square_group_analysis, critical_value, evaluate_variant, EvalData, EvalOptions,
};
use hashrec::models::{train_model, Binarization, ModelKind, TrainConfig};
use hashrec::synthetic::{movielens_like, SurrogateSpec};

fn main() -> hashrec::Result<()> {
    let ratings = movielens_like(&SurrogateSpec {
        users: 300,
        items: 600,
        ..SurrogateSpec::default()
    })?;
    let split = split_per_user(&ratings, 0.8, 4)?;
    let sim = derive_similarity(&split.train, 3);
    let data = EvalData::new(&split, 3);
    let opts = EvalOptions::default();

    let mut scores = Vec::new();
    for kind in [ModelKind::Aecf, ModelKind::Ccsr] {
        let mut cfg = TrainConfig::for_model(kind, 16);
        cfg.epochs = 5;
        cfg.hidden = vec![64];
        cfg.binarization = Binarization::C;
        cfg.seed = 21;
        let model = train_model(kind, &split.train, &sim, &cfg)?;
        let report = evaluate_variant(&model, Binarization::C, &data, &opts)?;
        println!(
            "{:<7} NDCG@10 {:.4}",
            report.label(),
            report.ndcg_at(10).unwrap()
        );
        scores.push(report);
    }
    let users: Vec<u32> = scores[0].per_user.iter().map(|u| u.user).collect();
    let a = scores[0].user_ndcg(10).unwrap();
    let b = scores[1].user_ndcg(10).unwrap();

    let report = chi_square_group_analysis(&a, &b, &users, &split.train)?;
    if let Some(n) = &report.notice {
        println!("{n}");
    }
    println!(
        "critical value (df 3, 5%): {:.3}",
        critical_value(3).unwrap()
    );
    for g in &report.analyses {
        println!(
            "{:<12} χ² {:>7.3}  df {}  AECF better/worse {}/{}  significant {}",
            g.characteristic.name(),
            g.chi2,
            g.df,
            g.group_sizes.0,
            g.group_sizes.1,
            g.significant
        );
    }
    Ok(())
}
