//! Flat CSV tables for results. Floats are written in shortest round-trip form.

use std::io::Write;

use serde::Serialize;

use crate::correlates::{Binscatter, FitResult};
use crate::error::Result;
use crate::honest_rd::{folded_normal_cv, Method, RdEstimate, SeMode};
use crate::shrink_forecast::{EstimateVector, ForecastResult};
use crate::variance_functional::CounterfactualSet;

fn write_rows<W: Write, R: Serialize>(w: W, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn method_label(m: &Method) -> String {
    match m {
        Method::Honest => "honest".into(),
        Method::Parametric { order, se_mode } => format!(
            "parametric{order}{}",
            match se_mode {
                SeMode::Robust => "",
                SeMode::ClusterOnAge => "_cluster_age",
            }
        ),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EstimateRow {
    pub locality_id: String,
    pub outcome: String,
    pub method: String,
    pub bandwidth: Option<u32>,
    pub bound_scale: Option<f64>,
    pub gamma: Option<f64>,
    pub se: Option<f64>,
    pub bias_bound: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub y_minus: Option<f64>,
    pub y_plus: Option<f64>,
    pub se_left: Option<f64>,
    pub se_right: Option<f64>,
    pub bias_left: Option<f64>,
    pub bias_right: Option<f64>,
    pub k: Option<f64>,
    pub n_cells_left: Option<usize>,
    pub n_cells_right: Option<usize>,
    pub level: Option<f64>,
    /// Near-elderly population behind the estimate.
    pub population: Option<f64>,
    /// Empty on success.
    pub error: String,
}

impl EstimateRow {
    pub fn ok(e: &RdEstimate<f64>, bound_scale: Option<f64>) -> Self {
        Self {
            locality_id: e.locality_id.clone(),
            outcome: e.outcome.clone(),
            method: method_label(&e.method),
            bandwidth: Some(e.bandwidth),
            bound_scale,
            gamma: Some(e.gamma),
            se: Some(e.se),
            bias_bound: Some(e.bias_bound),
            ci_low: Some(e.ci_low),
            ci_high: Some(e.ci_high),
            y_minus: Some(e.y_minus),
            y_plus: Some(e.y_plus),
            se_left: Some(e.se_left),
            se_right: Some(e.se_right),
            bias_left: Some(e.bias_left),
            bias_right: Some(e.bias_right),
            k: Some(e.k),
            n_cells_left: Some(e.n_cells_left),
            n_cells_right: Some(e.n_cells_right),
            level: Some(e.level),
            population: None,
            error: String::new(),
        }
    }

    pub fn failed(locality: &str, outcome: &str, method: &str, error: String) -> Self {
        Self {
            locality_id: locality.into(),
            outcome: outcome.into(),
            method: method.into(),
            error,
            ..Self::default()
        }
    }
}

pub fn write_estimates<W: Write>(w: W, rows: &[EstimateRow]) -> Result<()> {
    write_rows(w, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub locality_id: String,
    pub outcome: String,
    /// `mean`, `counterfactual_left` or `counterfactual_right`.
    pub kind: &'static str,
    pub age: f64,
    pub value: f64,
    pub population: f64,
}

pub fn write_plot_data<W: Write>(w: W, rows: &[PlotRow]) -> Result<()> {
    write_rows(w, rows)
}

#[derive(Serialize)]
struct CounterfactualRow<'a> {
    locality_id: &'a str,
    f0: f64,
    g0: f64,
    se_f: f64,
    se_g: f64,
    bias_f: f64,
    bias_g: f64,
    weight: f64,
}

pub fn write_counterfactuals<W: Write>(w: W, cf: &CounterfactualSet<f64>) -> Result<()> {
    write_rows(
        w,
        (0..cf.len()).map(|l| CounterfactualRow {
            locality_id: &cf.localities[l],
            f0: cf.f0[l],
            g0: cf.g0[l],
            se_f: cf.se_f[l],
            se_g: cf.se_g[l],
            bias_f: cf.bias_f[l],
            bias_g: cf.bias_g[l],
            weight: cf.weights[l],
        }),
    )
}

#[derive(Serialize)]
struct ForecastRow<'a> {
    locality_id: &'a str,
    gamma: f64,
    s: f64,
    prediction: f64,
    forecast: f64,
    rmse: f64,
    shrink_weight: f64,
}

pub fn write_forecasts<W: Write>(
    w: W,
    est: &EstimateVector<f64>,
    predictions: &[f64],
    result: &ForecastResult<f64>,
) -> Result<()> {
    write_rows(
        w,
        (0..est.len()).map(|l| ForecastRow {
            locality_id: &est.localities[l],
            gamma: est.gamma[l],
            s: est.s[l],
            prediction: predictions[l],
            forecast: result.forecast[l],
            rmse: result.rmse[l],
            shrink_weight: result.shrink_weight[l],
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub covariate: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub model: String,
    pub fe_mode: String,
    pub scaled: bool,
}

/// One row per coefficient with a normal interval at `level`.
pub fn coefficient_rows(fit: &FitResult<f64>, level: f64) -> Result<Vec<CoefficientRow>> {
    let z = folded_normal_cv(0.0, level)?;
    Ok(fit
        .names
        .iter()
        .zip(&fit.coefficients)
        .zip(&fit.se)
        .map(|((name, &b), &se)| CoefficientRow {
            covariate: name.clone(),
            estimate: b,
            se,
            ci_low: b - z * se,
            ci_high: b + z * se,
            model: fit.model.as_str().into(),
            fe_mode: fit.fe_mode.clone(),
            scaled: fit.scale_divisor.is_some(),
        })
        .collect())
}

pub fn write_coefficients<W: Write>(w: W, rows: &[CoefficientRow]) -> Result<()> {
    write_rows(w, rows)
}

#[derive(Serialize)]
struct BinRow {
    bin: usize,
    x: f64,
    y: f64,
    weight: f64,
    count: usize,
}

pub fn write_binscatter<W: Write>(w: W, b: &Binscatter<f64>) -> Result<()> {
    write_rows(
        w,
        b.bins.iter().enumerate().map(|(i, bin)| BinRow {
            bin: i,
            x: bin.x,
            y: bin.y,
            weight: bin.weight,
            count: bin.count,
        }),
    )
}
