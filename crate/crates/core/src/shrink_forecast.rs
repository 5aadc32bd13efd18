//! Empirical-Bayes shrinkage and MSE-minimising forecast combination.
//!
//! Both estimators are method-of-moments. Moments are precision weighted
//! (`1/s^2`) by default; an `s = 0` entry receives the largest finite
//! precision in the batch so the moments stay defined.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{precision_weights, weighted_covariance, weighted_mean, weighted_variance};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentWeighting {
    #[default]
    Precision,
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateVector<T> {
    pub localities: Vec<String>,
    pub gamma: Vec<T>,
    pub s: Vec<T>,
}

impl<T: Real> EstimateVector<T> {
    pub fn new(localities: Vec<String>, gamma: Vec<T>, s: Vec<T>) -> Result<Self> {
        if gamma.len() != localities.len() || s.len() != localities.len() {
            return Err(Error::InvalidArgument(
                "localities, gamma and s must have equal length".into(),
            ));
        }
        if s.iter().any(|&v| !(v >= T::zero())) {
            return Err(Error::InvalidArgument(
                "standard errors must be nonnegative".into(),
            ));
        }
        Ok(Self {
            localities,
            gamma,
            s,
        })
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    fn moment_weights(&self, mode: MomentWeighting) -> Vec<T> {
        match mode {
            MomentWeighting::Precision => precision_weights(&self.s),
            MomentWeighting::Unweighted => vec![T::one(); self.len()],
        }
    }

    fn mean_sampling_variance(&self, w: &[T]) -> T {
        let s2: Vec<T> = self.s.iter().map(|&s| s * s).collect();
        weighted_mean(&s2, w)
    }
}

#[derive(Debug, Clone)]
pub struct ShrinkOptions {
    pub weighting: MomentWeighting,
    /// Moment estimation needs degrees of freedom; 3 unless overridden.
    pub min_localities: usize,
}

impl Default for ShrinkOptions {
    fn default() -> Self {
        Self {
            weighting: MomentWeighting::Precision,
            min_localities: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shrunk<T> {
    pub gamma0: T,
    /// Signal variance `sigma^2`, floored at zero.
    pub sigma2: T,
    /// Weight on the raw estimate, `sigma^2 / (s^2 + sigma^2)`.
    pub b: Vec<T>,
    pub shrunk: Vec<T>,
}

/// James-Stein style shrinkage toward the precision-weighted mean.
pub fn eb_shrink<T: Real>(est: &EstimateVector<T>, opts: &ShrinkOptions) -> Result<Shrunk<T>> {
    if est.len() < opts.min_localities.max(1) {
        return Err(Error::InsufficientLocalities {
            needed: opts.min_localities.max(1),
            got: est.len(),
        });
    }
    let w = est.moment_weights(opts.weighting);
    let gamma0 = weighted_mean(&est.gamma, &w);
    let sigma2 =
        (weighted_variance(&est.gamma, &w) - est.mean_sampling_variance(&w)).max(T::zero());
    let b: Vec<T> = est
        .s
        .iter()
        .map(|&s| {
            if s == T::zero() {
                T::one()
            } else {
                sigma2 / (s * s + sigma2)
            }
        })
        .collect();
    let shrunk = est
        .gamma
        .iter()
        .zip(&b)
        .map(|(&g, &bl)| bl * g + (T::one() - bl) * gamma0)
        .collect();
    Ok(Shrunk {
        gamma0,
        sigma2,
        b,
        shrunk,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastModel<T> {
    pub tau: T,
    /// Residual place-effect variance, floored at zero.
    pub chi2: T,
    pub gamma_bar: T,
    pub pred_bar: T,
    /// Set when predictions had no variance and `tau` was forced to zero.
    pub degenerate_predictions: bool,
    pub weighting: MomentWeighting,
}

pub fn fit_forecast_combination<T: Real>(
    est: &EstimateVector<T>,
    predictions: &[T],
    weighting: MomentWeighting,
) -> Result<ForecastModel<T>> {
    if est.len() < 3 {
        return Err(Error::InsufficientLocalities {
            needed: 3,
            got: est.len(),
        });
    }
    if predictions.len() != est.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} estimates",
            predictions.len(),
            est.len()
        )));
    }
    if predictions.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("predictions must be finite".into()));
    }
    let w = est.moment_weights(weighting);
    let gamma_bar = weighted_mean(&est.gamma, &w);
    let pred_bar = weighted_mean(predictions, &w);
    let var_pred = weighted_variance(predictions, &w);
    let scale = predictions.iter().map(|p| p.abs()).fold(T::zero(), T::max);
    let degenerate = !(var_pred > T::rank_tol() * T::rank_tol() * scale * scale);
    let tau = if degenerate {
        T::zero()
    } else {
        weighted_covariance(&est.gamma, predictions, &w) / var_pred
    };
    let resid: Vec<T> = est
        .gamma
        .iter()
        .zip(predictions)
        .map(|(&g, &p)| g - tau * (p - pred_bar))
        .collect();
    let chi2 = (weighted_variance(&resid, &w) - est.mean_sampling_variance(&w)).max(T::zero());
    Ok(ForecastModel {
        tau,
        chi2,
        gamma_bar,
        pred_bar,
        degenerate_predictions: degenerate,
        weighting,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastResult<T> {
    pub localities: Vec<String>,
    pub forecast: Vec<T>,
    pub rmse: Vec<T>,
    /// Weight on the unbiased estimate, `chi^2 / (chi^2 + s^2)`.
    pub shrink_weight: Vec<T>,
}

/// `f = lambda (gamma - gamma_bar) + (1 - lambda) tau (pred - pred_bar) + gamma_bar`
/// with `lambda = chi^2 / (chi^2 + s^2)`; root MSE `sqrt(1 / (1/s^2 + 1/chi^2))`.
pub fn mse_forecast<T: Real>(
    model: &ForecastModel<T>,
    est: &EstimateVector<T>,
    predictions: &[T],
) -> Result<ForecastResult<T>> {
    if predictions.len() != est.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} estimates",
            predictions.len(),
            est.len()
        )));
    }
    let chi2 = model.chi2;
    let mut forecast = Vec::with_capacity(est.len());
    let mut rmse = Vec::with_capacity(est.len());
    let mut shrink_weight = Vec::with_capacity(est.len());
    for l in 0..est.len() {
        let s2 = est.s[l] * est.s[l];
        let lambda = if s2 == T::zero() {
            T::one()
        } else {
            chi2 / (chi2 + s2)
        };
        let f = if s2 == T::zero() {
            est.gamma[l]
        } else {
            lambda * (est.gamma[l] - model.gamma_bar)
                + (T::one() - lambda) * model.tau * (predictions[l] - model.pred_bar)
                + model.gamma_bar
        };
        let e2 = if s2 == T::zero() || chi2 == T::zero() {
            T::zero()
        } else {
            T::one() / (T::one() / s2 + T::one() / chi2)
        };
        forecast.push(f);
        rmse.push(e2.sqrt());
        shrink_weight.push(lambda);
    }
    Ok(ForecastResult {
        localities: est.localities.clone(),
        forecast,
        rmse,
        shrink_weight,
    })
}
