//! Central-difference checks of the analytic loss gradients.
//!
//! cargo run --release --example gradient_check

use rand::Rng;
use rand_distr::StandardNormal;

use hashrec::losses::{
    balance_loss, cf_loss, cfcodereg_loss, map_similarity_loss, LossValue, PairBatch,
};
use hashrec::nn::{finite_diff_check, DenseMatrix};
use hashrec::rng;

const EPS: f64 = 1e-5;

fn random(r: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| 0.5 * r.sample::<f64, _>(StandardNormal))
}

fn check(
    name: &str,
    users: &DenseMatrix,
    items: &DenseMatrix,
    f: impl Fn(&DenseMatrix, &DenseMatrix) -> LossValue,
) {
    let split = users.data().len();
    let rebuild = |p: &[f64]| {
        (
            DenseMatrix::new(users.rows(), users.cols(), p[..split].to_vec()).unwrap(),
            DenseMatrix::new(items.rows(), items.cols(), p[split..].to_vec()).unwrap(),
        )
    };
    let params: Vec<f64> = users.data().iter().chain(items.data()).copied().collect();
    let at = f(users, items);
    let analytic: Vec<f64> = at
        .grad_user
        .data()
        .iter()
        .chain(at.grad_item.data())
        .copied()
        .collect();
    let err = finite_diff_check(
        |p| {
            let (u, i) = rebuild(p);
            f(&u, &i).value
        },
        &params,
        &analytic,
        EPS,
        0,
        7,
    );
    let verdict = if err < 1e-4 { "ok" } else { "FAIL" };
    println!(
        "{name:<12} loss {:>10.5}  max rel err {err:.2e}  {verdict}",
        at.value
    );
}

fn main() {
    let mut r = rng::stream(3, "gradient-check");
    let (n_users, n_items, dim) = (6, 7, 8);
    let users = random(&mut r, n_users, dim);
    let items = random(&mut r, n_items, dim);
    let pairs: Vec<(usize, usize)> = (0..12).map(|p| (p % n_users, (p * 5) % n_items)).collect();
    let labels: Vec<f64> = (0..pairs.len()).map(|p| (p % 2) as f64).collect();
    let ratings: Vec<f64> = (0..pairs.len()).map(|p| 1.0 + (p % 5) as f64).collect();

    let batch = |u: &DenseMatrix, i: &DenseMatrix| {
        PairBatch::new(
            u.clone(),
            i.clone(),
            pairs.clone(),
            labels.clone(),
            Some(ratings.clone()),
        )
        .unwrap()
    };
    check("similarity", &users, &items, |u, i| {
        map_similarity_loss(&batch(u, i))
    });
    check("balance", &users, &items, balance_loss);
    check("cf", &users, &items, |u, i| {
        cf_loss(&batch(u, i), 0.4).unwrap()
    });
    check("cfcodereg", &users, &items, |u, i| {
        cfcodereg_loss(&batch(u, i), 0.4, dim).unwrap()
    });
}
