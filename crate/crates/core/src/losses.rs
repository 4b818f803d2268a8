//! Training objectives with analytic gradients.
//!
//! Every loss is a plain sum over its terms. Pair losses operate on a
//! [`PairBatch`]: distinct user rows, distinct item rows, and a list of
//! `(user_row, item_row)` pairs with labels and optional ratings.

use crate::error::{Error, Result};
use crate::nn::{dot, sigmoid, DenseMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub user_rows: DenseMatrix,
    pub item_rows: DenseMatrix,
    pub pairs: Vec<(usize, usize)>,
    /// `S_ab` per pair, 0 or 1.
    pub labels: Vec<f64>,
    pub ratings: Option<Vec<f64>>,
}

impl PairBatch {
    pub fn new(
        user_rows: DenseMatrix,
        item_rows: DenseMatrix,
        pairs: Vec<(usize, usize)>,
        labels: Vec<f64>,
        ratings: Option<Vec<f64>>,
    ) -> Result<Self> {
        if user_rows.cols() != item_rows.cols() {
            return Err(Error::Shape(format!(
                "user width {} vs item width {}",
                user_rows.cols(),
                item_rows.cols()
            )));
        }
        if labels.len() != pairs.len() || ratings.as_ref().is_some_and(|r| r.len() != pairs.len()) {
            return Err(Error::Shape(
                "pairs, labels and ratings must have equal length".into(),
            ));
        }
        if labels.iter().any(|&s| s != 0.0 && s != 1.0) {
            return Err(Error::Contract("similarity labels must be 0 or 1".into()));
        }
        if pairs
            .iter()
            .any(|&(a, b)| a >= user_rows.rows() || b >= item_rows.rows())
        {
            return Err(Error::Shape("pair index outside the batch rows".into()));
        }
        Ok(PairBatch {
            user_rows,
            item_rows,
            pairs,
            labels,
            ratings,
        })
    }

    /// Row `p` of `user_rows` is paired with row `p` of `item_rows`.
    pub fn aligned(
        user_rows: DenseMatrix,
        item_rows: DenseMatrix,
        labels: Vec<f64>,
        ratings: Option<Vec<f64>>,
    ) -> Result<Self> {
        if user_rows.rows() != item_rows.rows() {
            return Err(Error::Shape("aligned batch needs equal row counts".into()));
        }
        let pairs = (0..user_rows.rows()).map(|p| (p, p)).collect();
        PairBatch::new(user_rows, item_rows, pairs, labels, ratings)
    }

    fn dot(&self, p: usize) -> f64 {
        let (a, b) = self.pairs[p];
        dot(self.user_rows.row(a), self.item_rows.row(b))
    }

    fn zero_grads(&self) -> (DenseMatrix, DenseMatrix) {
        (
            DenseMatrix::zeros(self.user_rows.rows(), self.user_rows.cols()),
            DenseMatrix::zeros(self.item_rows.rows(), self.item_rows.cols()),
        )
    }

    fn ratings(&self) -> Result<&[f64]> {
        self.ratings
            .as_deref()
            .ok_or_else(|| Error::Contract("this loss needs ratings in the batch".into()))
    }
}

/// Scalar loss with gradients for the user-side and item-side inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_user: DenseMatrix,
    pub grad_item: DenseMatrix,
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Autoencoder reconstruction `‖X - X̂‖² + ‖Y - Ŷ‖²`; gradients are taken
/// with respect to `x_hat` (user side) and `y_hat` (item side).
pub fn ae_loss(
    x: &DenseMatrix,
    x_hat: &DenseMatrix,
    y: &DenseMatrix,
    y_hat: &DenseMatrix,
) -> Result<LossValue> {
    x.check_same_shape(x_hat)?;
    y.check_same_shape(y_hat)?;
    let side = |t: &DenseMatrix, r: &DenseMatrix| {
        let mut g = r.clone();
        let mut v = 0.0;
        for (gi, ti) in g.data_mut().iter_mut().zip(t.data()) {
            let d = *gi - ti;
            v += d * d;
            *gi = 2.0 * d;
        }
        (v, g)
    };
    let (vx, gx) = side(x, x_hat);
    let (vy, gy) = side(y, y_hat);
    Ok(LossValue {
        value: vx + vy,
        grad_user: gx,
        grad_item: gy,
    })
}

/// Cross-entropy similarity `Σ log(1 + e^⟨u,v⟩) - S ⟨u,v⟩` over the pairs.
pub fn map_similarity_loss(batch: &PairBatch) -> LossValue {
    let (mut gu, mut gi) = batch.zero_grads();
    let mut value = 0.0;
    for (p, &(a, b)) in batch.pairs.iter().enumerate() {
        let s = batch.labels[p];
        let z = batch.dot(p);
        // softplus(z) - z = softplus(-z)
        value += (1.0 - s) * softplus(z) + s * softplus(-z);
        let dz = sigmoid(z) - s;
        if dz != 0.0 {
            crate::nn::axpy(gu.row_mut(a), dz, batch.item_rows.row(b));
            crate::nn::axpy(gi.row_mut(b), dz, batch.user_rows.row(a));
        }
    }
    LossValue {
        value,
        grad_user: gu,
        grad_item: gi,
    }
}

/// Squared row sums of both matrices.
pub fn balance_loss(f_users: &DenseMatrix, f_items: &DenseMatrix) -> LossValue {
    let side = |f: &DenseMatrix| {
        let mut g = DenseMatrix::zeros(f.rows(), f.cols());
        let mut v = 0.0;
        for i in 0..f.rows() {
            let s: f64 = f.row(i).iter().sum();
            v += s * s;
            g.row_mut(i).fill(2.0 * s);
        }
        (v, g)
    };
    let (vu, gu) = side(f_users);
    let (vi, gi) = side(f_items);
    LossValue {
        value: vu + vi,
        grad_user: gu,
        grad_item: gi,
    }
}

/// `Σ (R - ⟨u,v⟩)²` over the pairs.
pub fn rating_reconstruction_loss(batch: &PairBatch) -> Result<LossValue> {
    let ratings = batch.ratings()?;
    let (mut gu, mut gi) = batch.zero_grads();
    let mut value = 0.0;
    for (p, &(a, b)) in batch.pairs.iter().enumerate() {
        let resid = ratings[p] - batch.dot(p);
        value += resid * resid;
        let c = -2.0 * resid;
        crate::nn::axpy(gu.row_mut(a), c, batch.item_rows.row(b));
        crate::nn::axpy(gi.row_mut(b), c, batch.user_rows.row(a));
    }
    Ok(LossValue {
        value,
        grad_user: gu,
        grad_item: gi,
    })
}

fn add_frobenius_penalty(
    loss: &mut LossValue,
    users: &DenseMatrix,
    items: &DenseMatrix,
    lambda: f64,
) {
    loss.value += lambda * (users.frobenius_sq() + items.frobenius_sq());
    loss.grad_user
        .add_scaled(users, 2.0 * lambda)
        .expect("same shape");
    loss.grad_item
        .add_scaled(items, 2.0 * lambda)
        .expect("same shape");
}

/// Matrix factorisation objective. `batch.user_rows` / `item_rows` are the
/// full factor matrices and `batch.pairs` the observed entries; the L2 term
/// covers the full matrices.
pub fn cf_loss(batch: &PairBatch, lambda: f64) -> Result<LossValue> {
    if lambda < 0.0 {
        return Err(Error::Contract(format!(
            "λ must be non-negative, got {lambda}"
        )));
    }
    let mut loss = rating_reconstruction_loss(batch)?;
    add_frobenius_penalty(&mut loss, &batch.user_rows, &batch.item_rows, lambda);
    Ok(loss)
}

/// Relaxed binary-code objective `Σ (R - 1/2 - ⟨u,v⟩/(2r))² + λ‖U‖² + λ‖V‖²`.
/// Targets `R` are expected in `[0, 1]`.
pub fn cfcodereg_loss(batch: &PairBatch, lambda: f64, code_dim: usize) -> Result<LossValue> {
    if lambda < 0.0 {
        return Err(Error::Contract(format!(
            "λ must be non-negative, got {lambda}"
        )));
    }
    if code_dim == 0 {
        return Err(Error::Contract("code dimension must be at least 1".into()));
    }
    let ratings = batch.ratings()?;
    let scale = 1.0 / (2.0 * code_dim as f64);
    let (mut gu, mut gi) = batch.zero_grads();
    let mut value = 0.0;
    for (p, &(a, b)) in batch.pairs.iter().enumerate() {
        let resid = ratings[p] - 0.5 - scale * batch.dot(p);
        value += resid * resid;
        let c = -2.0 * resid * scale;
        crate::nn::axpy(gu.row_mut(a), c, batch.item_rows.row(b));
        crate::nn::axpy(gi.row_mut(b), c, batch.user_rows.row(a));
    }
    let mut loss = LossValue {
        value,
        grad_user: gu,
        grad_item: gi,
    };
    add_frobenius_penalty(&mut loss, &batch.user_rows, &batch.item_rows, lambda);
    Ok(loss)
}

/// Autoencoder inputs and reconstructions entering the composite objective.
#[derive(Clone, Copy, Debug)]
pub struct AeTerms<'a> {
    pub x: &'a DenseMatrix,
    pub x_hat: &'a DenseMatrix,
    pub y: &'a DenseMatrix,
    pub y_hat: &'a DenseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeLoss {
    pub value: f64,
    pub similarity: f64,
    pub balance: f64,
    pub reconstruction: f64,
    /// Gradient with respect to the user codes (`batch.user_rows`).
    pub grad_user_codes: DenseMatrix,
    pub grad_item_codes: DenseMatrix,
    pub grad_x_hat: DenseMatrix,
    pub grad_y_hat: DenseMatrix,
}

fn combine(
    pair: LossValue,
    pair_value: f64,
    batch: &PairBatch,
    ae: AeTerms<'_>,
    lambda_b: f64,
    lambda_ae: f64,
) -> Result<CompositeLoss> {
    if lambda_b < 0.0 || lambda_ae < 0.0 {
        return Err(Error::Contract("loss weights must be non-negative".into()));
    }
    let bal = balance_loss(&batch.user_rows, &batch.item_rows);
    let rec = ae_loss(ae.x, ae.x_hat, ae.y, ae.y_hat)?;
    let mut gu = pair.grad_user;
    let mut gi = pair.grad_item;
    if lambda_b != 0.0 {
        gu.add_scaled(&bal.grad_user, lambda_b)?;
        gi.add_scaled(&bal.grad_item, lambda_b)?;
    }
    let mut gx = rec.grad_user;
    let mut gy = rec.grad_item;
    gx.scale(lambda_ae);
    gy.scale(lambda_ae);
    Ok(CompositeLoss {
        value: pair_value + lambda_b * bal.value + lambda_ae * rec.value,
        similarity: pair_value,
        balance: bal.value,
        reconstruction: rec.value,
        grad_user_codes: gu,
        grad_item_codes: gi,
        grad_x_hat: gx,
        grad_y_hat: gy,
    })
}

/// `L_sim + λ_b L_b + λ_ae L_ae`.
pub fn ccsr_total_loss(
    batch: &PairBatch,
    ae: AeTerms<'_>,
    lambda_b: f64,
    lambda_ae: f64,
) -> Result<CompositeLoss> {
    let sim = map_similarity_loss(batch);
    let v = sim.value;
    combine(sim, v, batch, ae, lambda_b, lambda_ae)
}

/// Rating reconstruction plus `λ_ae L_ae`; the balance term is not part of
/// this objective.
pub fn aecf_total_loss(
    batch: &PairBatch,
    ae: AeTerms<'_>,
    lambda_ae: f64,
) -> Result<CompositeLoss> {
    let rec = rating_reconstruction_loss(batch)?;
    let v = rec.value;
    let mut out = combine(rec, v, batch, ae, 0.0, lambda_ae)?;
    out.balance = 0.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn single(f: &[f64], g: &[f64], s: f64, r: Option<f64>) -> PairBatch {
        PairBatch::aligned(
            DenseMatrix::new(1, f.len(), f.to_vec()).unwrap(),
            DenseMatrix::new(1, g.len(), g.to_vec()).unwrap(),
            vec![s],
            r.map(|r| vec![r]),
        )
        .unwrap()
    }

    fn random_batch(
        seed: u64,
        users: usize,
        items: usize,
        dim: usize,
        pairs: usize,
        scale: f64,
    ) -> PairBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = random_matrix(users, dim, &mut rng);
        let mut v = random_matrix(items, dim, &mut rng);
        u.scale(scale);
        v.scale(scale);
        let pairs: Vec<(usize, usize)> = (0..pairs)
            .map(|_| (rng.gen_range(0..users), rng.gen_range(0..items)))
            .collect();
        let labels = pairs
            .iter()
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let ratings = pairs.iter().map(|_| rng.gen_range(1..=5) as f64).collect();
        PairBatch::new(u, v, pairs, labels, Some(ratings)).unwrap()
    }

    #[test]
    fn ae_loss_examples() {
        let x = DenseMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let y = DenseMatrix::new(1, 1, vec![3.0]).unwrap();
        assert_eq!(ae_loss(&x, &x, &y, &y).unwrap().value, 0.0);
        let zero = DenseMatrix::zeros(1, 2);
        assert_eq!(ae_loss(&x, &zero, &y, &y).unwrap().value, 1.0);
        assert!(ae_loss(&x, &y, &y, &y).is_err());
    }

    #[test]
    fn ae_loss_matches_elementwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, xh, y, yh) = (
            random_matrix(4, 3, &mut rng),
            random_matrix(4, 3, &mut rng),
            random_matrix(4, 3, &mut rng),
            random_matrix(4, 3, &mut rng),
        );
        let mut oracle = 0.0;
        for i in 0..4 {
            for j in 0..3 {
                oracle +=
                    (x.get(i, j) - xh.get(i, j)).powi(2) + (y.get(i, j) - yh.get(i, j)).powi(2);
            }
        }
        assert!((ae_loss(&x, &xh, &y, &yh).unwrap().value - oracle).abs() < 1e-12);
    }

    #[test]
    fn similarity_loss_examples() {
        let l = map_similarity_loss(&single(&[0.0, 0.0], &[0.0, 0.0], 1.0, None));
        assert!((l.value - std::f64::consts::LN_2).abs() < 1e-15);
        // ⟨f, f⟩ = 50 with f = (5, 5)
        let f = [5.0, 5.0];
        let similar = map_similarity_loss(&single(&f, &f, 1.0, None)).value;
        assert!(
            (similar - 1.9287498479639178e-22).abs() < 1e-30,
            "{similar}"
        );
        let dissimilar = map_similarity_loss(&single(&f, &f, 0.0, None)).value;
        assert!((dissimilar - 50.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_loss_is_stable_for_huge_logits() {
        let f = [30.0; 4];
        let l = map_similarity_loss(&single(&f, &f, 0.0, None));
        assert!((l.value - 3600.0).abs() < 1e-9);
        assert!(l.grad_user.is_finite());
        let neg = [-30.0; 4];
        let l = map_similarity_loss(&single(&f, &neg, 1.0, None));
        assert!((l.value - 3600.0).abs() < 1e-9);
    }

    #[test]
    fn balance_examples() {
        let one = DenseMatrix::new(1, 2, vec![1.0, -1.0]).unwrap();
        assert_eq!(balance_loss(&one, &DenseMatrix::zeros(0, 2)).value, 0.0);
        let two = DenseMatrix::new(2, 2, vec![1.0, -1.0, 0.5, 0.5]).unwrap();
        assert_eq!(balance_loss(&two, &DenseMatrix::zeros(0, 2)).value, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(6, 8, &mut rng);
        let b = random_matrix(6, 8, &mut rng);
        let oracle: f64 = (0..6)
            .map(|i| {
                let sa: f64 = (0..8).map(|j| a.get(i, j)).sum();
                let sb: f64 = (0..8).map(|j| b.get(i, j)).sum();
                sa * sa + sb * sb
            })
            .sum();
        assert!((balance_loss(&a, &b).value - oracle).abs() < 1e-12);
    }

    #[test]
    fn rating_reconstruction_examples() {
        let l =
            rating_reconstruction_loss(&single(&[1.0, 2.0], &[1.0, 1.0], 1.0, Some(3.0))).unwrap();
        assert_eq!(l.value, 0.0);
        let l =
            rating_reconstruction_loss(&single(&[1.0, 2.0], &[1.0, 1.0], 1.0, Some(5.0))).unwrap();
        assert_eq!(l.value, 4.0);
        assert!(rating_reconstruction_loss(&single(&[1.0], &[1.0], 1.0, None)).is_err());
    }

    #[test]
    fn pair_losses_match_scalar_brute_force() {
        let b = random_batch(3, 4, 5, 3, 12, 1.0);
        let mut rec = 0.0;
        let mut code = 0.0;
        for (p, &(a, i)) in b.pairs.iter().enumerate() {
            let d: f64 = (0..3)
                .map(|k| b.user_rows.get(a, k) * b.item_rows.get(i, k))
                .sum();
            let r = b.ratings.as_ref().unwrap()[p];
            rec += (r - d).powi(2);
            code += (r / 5.0 - 0.5 - d / 6.0).powi(2);
        }
        let reg = 0.4 * (b.user_rows.frobenius_sq() + b.item_rows.frobenius_sq());
        assert!((rating_reconstruction_loss(&b).unwrap().value - rec).abs() < 1e-10);
        assert!((cf_loss(&b, 0.4).unwrap().value - (rec + reg)).abs() < 1e-10);
        let mut scaled = b.clone();
        scaled.ratings = Some(
            b.ratings
                .as_ref()
                .unwrap()
                .iter()
                .map(|r| r / 5.0)
                .collect(),
        );
        assert!((cfcodereg_loss(&scaled, 0.4, 3).unwrap().value - (code + reg)).abs() < 1e-10);
    }

    #[test]
    fn cf_examples() {
        let z = single(&[0.0, 0.0], &[0.0, 0.0], 0.0, Some(0.0));
        assert_eq!(cf_loss(&z, 0.4).unwrap().value, 0.0);
        let one = single(&[0.0, 0.0], &[0.0, 0.0], 1.0, Some(4.0));
        assert_eq!(cf_loss(&one, 0.0).unwrap().value, 16.0);
    }

    #[test]
    fn cfcodereg_relaxation_endpoints() {
        let plus = [1.0; 10];
        let minus = [-1.0; 10];
        let agree = single(&plus, &plus, 1.0, Some(1.0));
        assert!(cfcodereg_loss(&agree, 0.0, 10).unwrap().value.abs() < 1e-15);
        let disagree = single(&plus, &minus, 0.0, Some(0.0));
        assert!(cfcodereg_loss(&disagree, 0.0, 10).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn composite_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_batch(4, 3, 3, 4, 6, 1.0);
        let (x, xh, y, yh) = (
            random_matrix(3, 5, &mut rng),
            random_matrix(3, 5, &mut rng),
            random_matrix(3, 2, &mut rng),
            random_matrix(3, 2, &mut rng),
        );
        let ae = AeTerms {
            x: &x,
            x_hat: &xh,
            y: &y,
            y_hat: &yh,
        };
        let sim = map_similarity_loss(&b).value;
        let bal = balance_loss(&b.user_rows, &b.item_rows).value;
        let rec = ae_loss(&x, &xh, &y, &yh).unwrap().value;
        let total = ccsr_total_loss(&b, ae, 0.0001, 0.1).unwrap();
        assert!((total.value - (sim + 0.0001 * bal + 0.1 * rec)).abs() < 1e-12);
        let bare = ccsr_total_loss(&b, ae, 0.0, 0.0).unwrap();
        assert_eq!(bare.value, sim);
        assert_eq!(bare.grad_user_codes, map_similarity_loss(&b).grad_user);
    }

    #[test]
    fn heavy_reconstruction_weight_dominates() {
        // Components of equal size: with λ_ae = 10 the AE share is 10/12.
        let f = DenseMatrix::new(1, 1, vec![0.0]).unwrap();
        let b = PairBatch::aligned(f.clone(), f.clone(), vec![1.0], None).unwrap();
        let sim = map_similarity_loss(&b).value;
        let x = DenseMatrix::new(1, 1, vec![sim.sqrt()]).unwrap();
        let zero = DenseMatrix::zeros(1, 1);
        let ae = AeTerms {
            x: &x,
            x_hat: &zero,
            y: &zero,
            y_hat: &zero,
        };
        let total = ccsr_total_loss(&b, ae, 0.0001, 10.0).unwrap();
        assert!((total.reconstruction - sim).abs() < 1e-12);
        assert!(10.0 * total.reconstruction > 0.8 * total.value);
    }

    /// Flattens (user_rows, item_rows) for finite differences.
    fn check_pair_loss(b: &PairBatch, f: impl Fn(&PairBatch) -> LossValue) -> f64 {
        let nu = b.user_rows.data().len();
        let mut flat = b.user_rows.data().to_vec();
        flat.extend_from_slice(b.item_rows.data());
        let l = f(b);
        let mut analytic = l.grad_user.data().to_vec();
        analytic.extend_from_slice(l.grad_item.data());
        let eval = |p: &[f64]| {
            let mut probe = b.clone();
            probe.user_rows.data_mut().copy_from_slice(&p[..nu]);
            probe.item_rows.data_mut().copy_from_slice(&p[nu..]);
            f(&probe).value
        };
        finite_diff_check(eval, &flat, &analytic, 1e-5, 200, 0)
    }

    #[test]
    fn pair_loss_gradients_pass_finite_differences() {
        for seed in 0..5 {
            let b = random_batch(seed, 5, 6, 8, 20, 0.5);
            assert!(check_pair_loss(&b, map_similarity_loss) < 1e-4);
            assert!(check_pair_loss(&b, |b| rating_reconstruction_loss(b).unwrap()) < 1e-4);
            assert!(check_pair_loss(&b, |b| cf_loss(b, 0.4).unwrap()) < 1e-4);
            assert!(check_pair_loss(&b, |b| cfcodereg_loss(b, 0.4, 8).unwrap()) < 1e-4);
            assert!(check_pair_loss(&b, |b| balance_loss(&b.user_rows, &b.item_rows)) < 1e-4);
        }
    }

    fn permuted(b: &PairBatch, perm: &[usize]) -> PairBatch {
        PairBatch::new(
            b.user_rows.clone(),
            b.item_rows.clone(),
            perm.iter().map(|&p| b.pairs[p]).collect(),
            perm.iter().map(|&p| b.labels[p]).collect(),
            b.ratings
                .as_ref()
                .map(|r| perm.iter().map(|&p| r[p]).collect()),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn similarity_loss_is_positive_and_monotone(z in -40.0f64..40.0, dz in 0.01f64..5.0) {
            let l = |z: f64, s: f64| map_similarity_loss(&single(&[z], &[1.0], s, None)).value;
            prop_assert!(l(z, 1.0) > 0.0);
            prop_assert!(l(z, 0.0) > 0.0);
            prop_assert!(l(z + dz, 1.0) <= l(z, 1.0));
            prop_assert!(l(z + dz, 0.0) >= l(z, 0.0));
        }

        #[test]
        fn losses_ignore_pair_order(seed in 0u64..1000, rot in 0usize..17) {
            let b = random_batch(seed, 4, 4, 3, 17, 1.0);
            let perm: Vec<usize> = (0..17).map(|p| (p + rot) % 17).rev().collect();
            let q = permuted(&b, &perm);
            prop_assert!((map_similarity_loss(&b).value - map_similarity_loss(&q).value).abs() < 1e-9);
            prop_assert!((cf_loss(&b, 0.4).unwrap().value - cf_loss(&q, 0.4).unwrap().value).abs() < 1e-9);
            prop_assert!((rating_reconstruction_loss(&b).unwrap().value
                - rating_reconstruction_loss(&q).unwrap().value).abs() < 1e-9);
        }

        #[test]
        fn balance_is_zero_iff_rows_sum_to_zero(rows in proptest::collection::vec(proptest::collection::vec(-3i32..3, 4), 1..6)) {
            let m = DenseMatrix::from_rows(&rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect::<Vec<_>>()).unwrap();
            let zero = rows.iter().all(|r| r.iter().sum::<i32>() == 0);
            prop_assert_eq!(balance_loss(&m, &DenseMatrix::zeros(0, 4)).value == 0.0, zero);
        }
    }
}
