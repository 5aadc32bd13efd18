//! Weighted moments under the population (divide-by-total-weight) convention.

use crate::scalar::Real;

pub fn weighted_mean<T: Real>(x: &[T], w: &[T]) -> T {
    let total: T = w.iter().copied().sum();
    x.iter().zip(w).map(|(&xi, &wi)| xi * wi).sum::<T>() / total
}

pub fn weighted_variance<T: Real>(x: &[T], w: &[T]) -> T {
    weighted_covariance(x, x, w)
}

pub fn weighted_covariance<T: Real>(x: &[T], y: &[T], w: &[T]) -> T {
    let total: T = w.iter().copied().sum();
    let mx = weighted_mean(x, w);
    let my = weighted_mean(y, w);
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((&a, &b), &wi)| wi * (a - mx) * (b - my))
        .sum::<T>()
        / total
}

/// Rescales nonnegative weights to sum to one. Returns `None` when they sum to zero.
pub fn normalize<T: Real>(w: &[T]) -> Option<Vec<T>> {
    let total: T = w.iter().copied().sum();
    if !(total > T::zero()) {
        return None;
    }
    Some(w.iter().map(|&wi| wi / total).collect())
}

/// Inverse-variance weights `1/s^2`. Entries with `s = 0` receive the largest
/// finite precision in the batch; if every `s` is zero all weights are one.
pub fn precision_weights<T: Real>(s: &[T]) -> Vec<T> {
    let finite_max = s
        .iter()
        .filter(|&&si| si > T::zero())
        .map(|&si| T::one() / (si * si))
        .filter(|p| p.is_finite())
        .fold(None, |acc: Option<T>, p| Some(acc.map_or(p, |a| a.max(p))));
    match finite_max {
        None => vec![T::one(); s.len()],
        Some(max) => s
            .iter()
            .map(|&si| {
                let p = T::one() / (si * si);
                if si > T::zero() && p.is_finite() {
                    p
                } else {
                    max
                }
            })
            .collect(),
    }
}
