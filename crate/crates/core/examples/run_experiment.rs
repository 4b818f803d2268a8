//! Drive the whole pipeline from a config file, as the `hashrec` binary
//! does: prepare, train, encode, evaluate and report.
//!
//! cargo run --release --example run_experiment -- [configs/toy.toml] [--jobs 4]

use std::env;
use std::path::PathBuf;

use hashrec::experiment::{Experiment, ExperimentConfig};

fn main() -> hashrec::Result<()> {
    let mut config = PathBuf::from(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/toy.toml"
    ));
    let mut jobs = 1;
    let mut args = env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--jobs" => jobs = args.next().and_then(|j| j.parse().ok()).unwrap_or(1),
            path => config = PathBuf::from(path),
        }
    }
    let cfg = ExperimentConfig::load(&config)?;
    let out = env::temp_dir().join("hashrec-run-experiment");
    let exp = Experiment::new(cfg)?.with_out(&out).with_jobs(jobs);
    for cell in exp.train_cells()? {
        println!("cell {:<24} variants {:?}", cell.name(), cell.variants);
    }
    let table = exp.run_pipeline()?;
    print!("{}", table.to_text());
    println!("artifacts in {}", out.display());
    Ok(())
}
