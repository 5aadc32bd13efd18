//! Cross-locality variance reduction at the cutoff.
//!
//! `phi = 1 - Var_w(g0) / Var_w(f0)`, where `f0` and `g0` are the left and
//! right counterfactuals per locality and `Var_w` is the population-weighted
//! population variance. Inference uses the delta method with a diagonal
//! covariance (localities are estimated separately) and aggregates the
//! per-locality bias bounds through the absolute gradient.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::honest_rd::{honest_interval, RdEstimate};
use crate::moments::{normalize, weighted_mean, weighted_variance};
use crate::scalar::Real;

/// How localities are weighted in the variance functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalityWeighting {
    #[default]
    Population,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualSet<T> {
    pub localities: Vec<String>,
    pub f0: Vec<T>,
    pub g0: Vec<T>,
    pub se_f: Vec<T>,
    pub se_g: Vec<T>,
    pub bias_f: Vec<T>,
    pub bias_g: Vec<T>,
    /// Normalised to sum to one.
    pub weights: Vec<T>,
}

impl<T: Real> CounterfactualSet<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        localities: Vec<String>,
        f0: Vec<T>,
        g0: Vec<T>,
        se_f: Vec<T>,
        se_g: Vec<T>,
        bias_f: Vec<T>,
        bias_g: Vec<T>,
        weights: Vec<T>,
    ) -> Result<Self> {
        let l = localities.len();
        if l < 2 {
            return Err(Error::InsufficientLocalities { needed: 2, got: l });
        }
        for (name, v) in [
            ("f0", &f0),
            ("g0", &g0),
            ("se_f", &se_f),
            ("se_g", &se_g),
            ("bias_f", &bias_f),
            ("bias_g", &bias_g),
            ("weights", &weights),
        ] {
            if v.len() != l {
                return Err(Error::InvalidArgument(format!(
                    "{name} has length {}, expected {l}",
                    v.len()
                )));
            }
        }
        if weights.iter().any(|&w| !(w >= T::zero())) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let weights = normalize(&weights)
            .ok_or_else(|| Error::InvalidArgument("weights sum to zero".into()))?;
        Ok(Self {
            localities,
            f0,
            g0,
            se_f,
            se_g,
            bias_f,
            bias_g,
            weights,
        })
    }

    /// Stacks honest estimates. `populations` is ignored under
    /// [`LocalityWeighting::None`].
    pub fn from_estimates(
        estimates: &[RdEstimate<T>],
        populations: &[T],
        weighting: LocalityWeighting,
    ) -> Result<Self> {
        let weights = match weighting {
            LocalityWeighting::Population => populations.to_vec(),
            LocalityWeighting::None => vec![T::one(); estimates.len()],
        };
        let col = |f: fn(&RdEstimate<T>) -> T| estimates.iter().map(f).collect::<Vec<T>>();
        Self::new(
            estimates.iter().map(|e| e.locality_id.clone()).collect(),
            col(|e| e.y_minus),
            col(|e| e.y_plus),
            col(|e| e.se_left),
            col(|e| e.se_right),
            col(|e| e.bias_left),
            col(|e| e.bias_right),
            weights,
        )
    }

    pub fn len(&self) -> usize {
        self.localities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.localities.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReduction<T> {
    pub phi: T,
    pub se: T,
    pub bias_bound: T,
    pub ci_low: T,
    pub ci_high: T,
    pub var_pre: T,
    pub var_post: T,
    pub n_localities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiGradient<T> {
    pub d_f: Vec<T>,
    pub d_g: Vec<T>,
}

fn pre_variance<T: Real>(cf: &CounterfactualSet<T>) -> Result<T> {
    let var_pre = weighted_variance(&cf.f0, &cf.weights);
    let scale = cf.f0.iter().map(|v| v.abs()).fold(T::zero(), T::max);
    if !(var_pre > T::lit(1e-12) * scale * scale) {
        return Err(Error::DegenerateDenominator(format!(
            "cross-locality variance of the left counterfactuals is {var_pre}"
        )));
    }
    Ok(var_pre)
}

/// Point estimate only; `se`, `bias_bound` are zero and the interval is the point.
pub fn phi_hat<T: Real>(cf: &CounterfactualSet<T>) -> Result<VarianceReduction<T>> {
    let var_pre = pre_variance(cf)?;
    let var_post = weighted_variance(&cf.g0, &cf.weights);
    let phi = T::one() - var_post / var_pre;
    Ok(VarianceReduction {
        phi,
        se: T::zero(),
        bias_bound: T::zero(),
        ci_low: phi,
        ci_high: phi,
        var_pre,
        var_post,
        n_localities: cf.len(),
    })
}

/// Gradient of [`phi_hat`] with respect to `f0` and `g0`.
pub fn phi_gradient<T: Real>(cf: &CounterfactualSet<T>) -> Result<PhiGradient<T>> {
    let var_pre = pre_variance(cf)?;
    let var_post = weighted_variance(&cf.g0, &cf.weights);
    let fbar = weighted_mean(&cf.f0, &cf.weights);
    let gbar = weighted_mean(&cf.g0, &cf.weights);
    let two = T::lit(2.0);
    let d_f = cf
        .f0
        .iter()
        .zip(&cf.weights)
        .map(|(&f, &w)| var_post * two * w * (f - fbar) / (var_pre * var_pre))
        .collect();
    let d_g = cf
        .g0
        .iter()
        .zip(&cf.weights)
        .map(|(&g, &w)| -two * w * (g - gbar) / var_pre)
        .collect();
    Ok(PhiGradient { d_f, d_g })
}

/// Point estimate, delta-method standard error, bias bound and honest interval.
/// The interval is not clipped at 1.
pub fn phi_inference<T: Real>(cf: &CounterfactualSet<T>, level: T) -> Result<VarianceReduction<T>> {
    let point = phi_hat(cf)?;
    let grad = phi_gradient(cf)?;
    let mut s2 = T::zero();
    let mut bias = T::zero();
    for l in 0..cf.len() {
        s2 = s2 + (grad.d_f[l] * cf.se_f[l]).powi(2) + (grad.d_g[l] * cf.se_g[l]).powi(2);
        bias = bias + grad.d_f[l].abs() * cf.bias_f[l] + grad.d_g[l].abs() * cf.bias_g[l];
    }
    let se = s2.sqrt();
    let (ci_low, ci_high) = honest_interval(point.phi, se, bias, level)?;
    Ok(VarianceReduction {
        se,
        bias_bound: bias,
        ci_low,
        ci_high,
        ..point
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(f0: Vec<f64>, g0: Vec<f64>) -> CounterfactualSet<f64> {
        let n = f0.len();
        CounterfactualSet::new(
            (0..n).map(|i| format!("L{i}")).collect(),
            f0,
            g0,
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![1.0; n],
        )
        .unwrap()
    }

    #[test]
    fn full_reduction() {
        let r = phi_hat(&set(vec![1.0, 3.0], vec![2.0, 2.0])).unwrap();
        assert_eq!(r.var_pre, 1.0);
        assert_eq!(r.var_post, 0.0);
        assert_eq!(r.phi, 1.0);
    }

    #[test]
    fn common_shift_is_zero_reduction() {
        let r = phi_hat(&set(vec![1.0, 4.0, 2.0], vec![6.0, 9.0, 7.0])).unwrap();
        assert!(r.phi.abs() < 1e-12);
    }

    #[test]
    fn variance_expansion_is_negative() {
        let r = phi_hat(&set(vec![0.0, 1.0], vec![0.0, 3.0])).unwrap();
        assert!((r.phi + 8.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_hand_example() {
        let cf = set(vec![0.0, 2.0], vec![0.0, 1.0]);
        assert!((phi_hat(&cf).unwrap().phi - 0.75).abs() < 1e-15);
        let g = phi_gradient(&cf).unwrap();
        assert!((g.d_g[0] - 0.5).abs() < 1e-15 && (g.d_g[1] + 0.5).abs() < 1e-15);
        assert!((g.d_f[0] + 0.25).abs() < 1e-15 && (g.d_f[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_post_has_zero_g_gradient() {
        let g = phi_gradient(&set(vec![0.0, 2.0, 5.0], vec![1.0, 1.0, 1.0])).unwrap();
        assert!(g.d_g.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn delta_method_hand_example() {
        let mut cf = set(vec![0.0, 2.0], vec![0.0, 1.0]);
        cf.se_g = vec![1.0, 1.0];
        let r = phi_inference(&cf, 0.95).unwrap();
        assert!((r.se - 0.5_f64.sqrt()).abs() < 1e-12);
        assert!(r.ci_low < r.phi && r.phi < r.ci_high);
    }

    #[test]
    fn no_uncertainty_is_degenerate_interval() {
        let r = phi_inference(&set(vec![0.0, 2.0], vec![0.0, 1.0]), 0.95).unwrap();
        assert_eq!((r.ci_low, r.ci_high), (r.phi, r.phi));
    }

    #[test]
    fn constant_pre_is_degenerate() {
        let err = phi_hat(&set(vec![3.0, 3.0], vec![1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateDenominator(_)));
    }

    #[test]
    fn needs_two_localities() {
        let err = CounterfactualSet::new(
            vec!["a".into()],
            vec![1.0],
            vec![1.0],
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![1.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientLocalities { .. }));
    }
}
