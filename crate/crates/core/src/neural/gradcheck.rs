use rand::seq::index::sample;
use rand::Rng;

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-5;

/// Central-difference check of `f`'s analytic gradient at `params` on the
/// listed coordinates. `f` returns the loss and its full gradient. Returns
/// the largest `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn grad_check<F>(mut f: F, params: &[f64], eps: f64, coords: &[usize]) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    let mut w = params.to_vec();
    let mut worst = 0.0f64;
    for &k in coords {
        let orig = w[k];
        w[k] = orig + eps;
        let hi = f(&w).0;
        w[k] = orig - eps;
        let lo = f(&w).0;
        w[k] = orig;
        let num = (hi - lo) / (2.0 * eps);
        let a = analytic[k];
        let denom = a.abs().max(num.abs()).max(REL_FLOOR);
        worst = worst.max((a - num).abs() / denom);
    }
    worst
}

/// Up to `k` distinct coordinates out of `n`, sorted.
pub fn sample_coords<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut v = sample(rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}
