//! Locality-level regression discontinuity at an age cutoff.
//!
//! Estimates per-locality discontinuities with bias-aware confidence
//! intervals, summarises their dispersion, shrinks and forecasts them, relates
//! them to covariates and decomposes changes over time. Numeric code is
//! generic over [`Real`] (`f32` or `f64`); the aliases below fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod correlates;
pub mod error;
pub mod export;
pub mod hetero_decomp;
pub mod honest_rd;
pub mod linalg;
pub mod moments;
pub mod panel;
pub mod scalar;
pub mod shrink_forecast;
pub mod synth;
pub mod variance_functional;

pub use error::{Error, ErrorClass, Result};
pub use panel::{AgeWindow, LocalityPanel, PanelSchema, NATIONAL};
pub use scalar::Real;

pub type AgeSeries = panel::AgeSeries<f64>;
pub type HonestRdConfig = honest_rd::HonestRdConfig<f64>;
pub type RdEstimate = honest_rd::RdEstimate<f64>;
pub type CurvatureBound = honest_rd::CurvatureBound<f64>;
pub type CounterfactualSet = variance_functional::CounterfactualSet<f64>;
pub type VarianceReduction = variance_functional::VarianceReduction<f64>;
pub type EstimateVector = shrink_forecast::EstimateVector<f64>;
pub type ForecastModel = shrink_forecast::ForecastModel<f64>;
pub type ForecastResult = shrink_forecast::ForecastResult<f64>;
pub type CovariateMatrix = correlates::CovariateMatrix<f64>;
pub type FitResult = correlates::FitResult<f64>;
pub type ScaledEstimate = hetero_decomp::ScaledEstimate<f64>;
pub type DecompositionResult = hetero_decomp::DecompositionResult<f64>;

pub type AgeSeriesF32 = panel::AgeSeries<f32>;
pub type HonestRdConfigF32 = honest_rd::HonestRdConfig<f32>;
pub type RdEstimateF32 = honest_rd::RdEstimate<f32>;
pub type CounterfactualSetF32 = variance_functional::CounterfactualSet<f32>;
pub type EstimateVectorF32 = shrink_forecast::EstimateVector<f32>;
pub type CovariateMatrixF32 = correlates::CovariateMatrix<f32>;
