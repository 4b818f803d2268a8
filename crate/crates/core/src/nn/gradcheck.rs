use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimum number of coordinates probed when the parameter vector is larger.
pub const MIN_PROBED_COORDINATES: usize = 200;

/// Central-difference check of an analytic gradient.
///
/// Probes every coordinate when there are at most `max(200, max_coords)`
/// of them, otherwise a seeded sample of that size. Returns
/// `max |analytic - numeric| / max(1e-8, |numeric|)`.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0, "finite difference step must be positive");
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let budget = max_coords.max(MIN_PROBED_COORDINATES);
    let coords: Vec<usize> = if params.len() <= budget {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, params.len(), budget).into_vec();
        picked.sort_unstable();
        picked
    };
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in coords {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = loss(&probe);
        probe[i] = orig - eps;
        let down = loss(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(i, x)| (i as f64 + 1.0) * x * x)
            .sum()
    }

    fn quadratic_grad(p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(i, x)| 2.0 * (i as f64 + 1.0) * x)
            .collect()
    }

    #[test]
    fn exact_gradient_passes() {
        let p: Vec<f64> = (0..50).map(|i| 0.3 + i as f64 * 0.01).collect();
        let err = finite_diff_check(quadratic, &p, &quadratic_grad(&p), 1e-5, 200, 0);
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let p: Vec<f64> = (0..50).map(|i| 0.3 + i as f64 * 0.01).collect();
        let bad: Vec<f64> = quadratic_grad(&p).iter().map(|g| g * 1.1).collect();
        let err = finite_diff_check(quadratic, &p, &bad, 1e-5, 200, 0);
        assert!((err - 0.1).abs() < 1e-6, "{err}");
    }

    #[test]
    fn large_vectors_are_sampled() {
        let p = vec![0.5; 5000];
        let mut calls = 0usize;
        let g = quadratic_grad(&p);
        let err = finite_diff_check(
            |x| {
                calls += 1;
                quadratic(x)
            },
            &p,
            &g,
            1e-4,
            10,
            3,
        );
        assert_eq!(calls, 2 * MIN_PROBED_COORDINATES);
        assert!(err < 1e-6);
    }
}
