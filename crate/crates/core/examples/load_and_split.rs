//! Load a ratings file (or generate one), filter, split per user and derive
//! the similarity matrices.
//!
//! cargo run --example load_and_split -- [ratings.dat]

use std::env;
use std::path::PathBuf;

use hashrec::dataset::{
    derive_similarity, filter_min_interactions, load_ratings, split_per_user, FileFormat,
    RatingMatrix,
};
use hashrec::synthetic::{movielens_like, SurrogateSpec};

fn main() -> hashrec::Result<()> {
    let ratings: RatingMatrix = match env::args().nth(1) {
        Some(path) => load_ratings(&PathBuf::from(path), FileFormat::MovielensDat)?,
        None => movielens_like(&SurrogateSpec {
            users: 300,
            items: 900,
            ..SurrogateSpec::default()
        })?,
    };
    println!("loaded   {}", ratings.stats());

    let ratings = filter_min_interactions(&ratings, 20, 5)?;
    println!("filtered {}", ratings.stats());

    let split = split_per_user(&ratings, 0.8, 42)?;
    let again = split_per_user(&ratings, 0.8, 42)?;
    assert_eq!(split.train.fingerprint(), again.train.fingerprint());
    println!(
        "split    train {}  test {}  train fingerprint {}",
        split.train.len(),
        split.test.len(),
        &split.train.fingerprint()[..16]
    );

    let sim_train = derive_similarity(&split.train, 3);
    let sim_test = derive_similarity(&split.test, 3);
    println!(
        "similar  train {}  test {}  (rating >= 3)",
        sim_train.len(),
        sim_test.len()
    );
    let covered = (0..split.test.num_users())
        .filter(|&u| !sim_test.positives(u).is_empty())
        .count();
    println!(
        "users with test positives: {covered}/{}",
        split.test.num_users()
    );

    let dir = env::temp_dir().join("hashrec-load-and-split");
    std::fs::create_dir_all(&dir).map_err(|e| hashrec::Error::io(&dir, e))?;
    split.write_manifest(&dir.join("split.tsv"))?;
    sim_train.write_tsv(&dir.join("similarity_train.tsv"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
