//! Train every model kind on one split and print NDCG@k of the baselines
//! and of the sign and continuous variants side by side.
//!
//! cargo run --release --example compare_models -- [--data ratings.dat] [--bits 16]

use std::env;
use std::path::PathBuf;

use hashrec::dataset::{
    derive_similarity, load_ratings, split_per_user, subsample_users, FileFormat,
};
use hashrec::eval::{evaluate_baseline, evaluate_variant, EvalData, EvalOptions, MetricsReport};
use hashrec::models::{train_model, Baseline, Binarization, ModelKind, TrainConfig};
use hashrec::synthetic::{cluster_toy, ClusterSpec};

fn main() -> hashrec::Result<()> {
    let mut data_path = None;
    let mut bits = 16;
    let mut args = env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--data" => data_path = args.next().map(PathBuf::from),
            "--bits" => bits = args.next().and_then(|b| b.parse().ok()).unwrap_or(bits),
            other => eprintln!("ignoring argument {other}"),
        }
    }
    let (ratings, small) = match data_path {
        Some(p) => (
            subsample_users(&load_ratings(&p, FileFormat::MovielensDat)?, 300, 1)?,
            false,
        ),
        None => (
            cluster_toy(&ClusterSpec {
                users: 100,
                items: 80,
                clusters: 4,
                ..ClusterSpec::default()
            })?,
            true,
        ),
    };
    println!("{}", ratings.stats());
    let split = split_per_user(&ratings, 0.8, 11)?;
    let sim = derive_similarity(&split.train, 3);
    let data = EvalData::new(&split, 3);
    let opts = EvalOptions::default();

    let mut reports: Vec<MetricsReport> = vec![
        evaluate_baseline(&Baseline::random(split.train.num_items(), 3), &data, &opts)?,
        evaluate_baseline(&Baseline::top(&split.train), &data, &opts)?,
    ];
    for kind in [
        ModelKind::Cf,
        ModelKind::CfCodeReg,
        ModelKind::Aecf,
        ModelKind::Ccsr,
    ] {
        let mut cfg = TrainConfig::for_model(kind, bits);
        cfg.seed = 17;
        if small {
            cfg.hidden = vec![32];
            cfg.epochs = if kind.is_autoencoder() { 15 } else { 60 };
        }
        let model = train_model(kind, &split.train, &sim, &cfg)?;
        for variant in [Binarization::S, Binarization::C] {
            reports.push(evaluate_variant(&model, variant, &data, &opts)?);
        }
    }

    print!("{:<12}", format!("r={bits}"));
    for k in &opts.ks {
        print!("  NDCG@{k:<3}");
    }
    println!();
    for r in &reports {
        print!("{:<12}", r.label());
        for &k in &opts.ks {
            print!("  {:>8.4}", r.ndcg_at(k).unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}
