use std::collections::{BTreeMap, BTreeSet};

use locality_rd::correlates::{
    binscatter, lasso_cv, post_lasso_ols, predict, scale_coefficients, standardize,
    weighted_bivariate, weighted_multivariate_ols, CovariateMatrix, FixedEffects, LassoOptions,
};
use locality_rd::export::{
    coefficient_rows, write_binscatter, write_coefficients, write_counterfactuals, write_estimates,
    write_forecasts, write_plot_data, EstimateRow, PlotRow,
};
use locality_rd::hetero_decomp::{
    decompose_by_region, diff_in_disc, kob_decompose, ratio_with_se, DiffInDiscConfig, PeriodInputs,
};
use locality_rd::honest_rd::RdEstimate;
use locality_rd::panel::{
    build_full_series, CovariateTable, LocalityPanel, SeriesFilter, NATIONAL,
};
use locality_rd::shrink_forecast::{
    eb_shrink, fit_forecast_combination, mse_forecast, EstimateVector, MomentWeighting,
    ShrinkOptions,
};
use locality_rd::synth::{
    coverage_study, generate, CoverageStudyConfig, EstimatorSpec, SynthConfig,
};
use locality_rd::variance_functional::{phi_inference, CounterfactualSet, LocalityWeighting};
use locality_rd::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::opts::*;
use crate::pipeline::*;

/// Summary printed to stderr after a command.
pub struct Report {
    pub warnings: usize,
}

const SWEEP_BANDWIDTHS: [u32; 6] = [3, 4, 5, 6, 7, 8];
const SWEEP_BOUND_SCALES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// Display offset of the imputed counterfactual points from the cutoff.
const PLOT_OFFSET: f64 = 0.1;

fn moment_weighting(m: MomentsArg) -> MomentWeighting {
    match m {
        MomentsArg::Precision => MomentWeighting::Precision,
        MomentsArg::Unweighted => MomentWeighting::Unweighted,
    }
}

fn estimate_row(
    panel: &LocalityPanel,
    args: &EstimateArgs,
    rd: &RdArgs,
    id: &str,
    outcome: &str,
) -> (EstimateRow, Option<RdEstimate<f64>>) {
    let periods = period_set(&rd.periods);
    let res = match args.method {
        MethodArg::Honest => honest_one(panel, id, outcome, rd, periods.as_ref()),
        MethodArg::Parametric => parametric_one(panel, id, outcome, rd, args.order, args.se_mode),
    };
    match res {
        Ok(e) => {
            let scale = (args.method == MethodArg::Honest && rd.curvature.is_none())
                .then_some(rd.bound_scale);
            let mut row = EstimateRow::ok(&e, scale);
            row.population = Some(population(panel, id, outcome, rd, periods.as_ref()));
            (row, Some(e))
        }
        Err(err) => {
            let method = match args.method {
                MethodArg::Honest => "honest".to_string(),
                MethodArg::Parametric => format!("parametric{}", args.order),
            };
            (
                EstimateRow::failed(id, outcome, &method, err.to_string()),
                None,
            )
        }
    }
}

fn plot_rows(panel: &LocalityPanel, rd: &RdArgs, e: &RdEstimate<f64>) -> Result<Vec<PlotRow>> {
    let window = window(rd)?;
    let periods = period_set(&rd.periods);
    let series = build_full_series(
        panel,
        &e.locality_id,
        &e.outcome,
        &window,
        &SeriesFilter {
            periods: periods.as_ref(),
            separate_periods: false,
        },
    )?;
    let mut rows: Vec<PlotRow> = series
        .points
        .iter()
        .map(|p| PlotRow {
            locality_id: e.locality_id.clone(),
            outcome: e.outcome.clone(),
            kind: "mean",
            age: f64::from(p.age),
            value: p.value,
            population: p.weight,
        })
        .collect();
    for (kind, age, value) in [
        ("counterfactual_left", rd.cutoff - PLOT_OFFSET, e.y_minus),
        ("counterfactual_right", rd.cutoff + PLOT_OFFSET, e.y_plus),
    ] {
        rows.push(PlotRow {
            locality_id: e.locality_id.clone(),
            outcome: e.outcome.clone(),
            kind,
            age,
            value,
            population: 0.0,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct EstimateSummary {
    outcomes: Vec<String>,
    rows: usize,
    failed: usize,
    national: BTreeMap<String, Option<RdEstimate<f64>>>,
}

pub fn estimate(args: &EstimateArgs, out: &Output) -> Result<Report> {
    let rd = &args.rd;
    rd_config(rd)?;
    let panel = load(rd)?;
    let outcomes = outcomes(&panel, rd)?;
    let ids: Vec<String> = if rd.level == LevelArg::National {
        Vec::new()
    } else {
        locality_ids(&panel)
    };

    let mut rows = Vec::new();
    let mut plot = Vec::new();
    let mut national = BTreeMap::new();
    let mut failed = 0;
    let mut first_error = None;
    let mut sweep = Vec::new();
    for outcome in &outcomes {
        let results: Vec<(EstimateRow, Option<RdEstimate<f64>>)> = ids
            .par_iter()
            .map(|id| estimate_row(&panel, args, rd, id, outcome))
            .collect();
        for (row, est) in results {
            if let Some(e) = &est {
                plot.extend(plot_rows(&panel, rd, e)?);
            } else {
                failed += 1;
                if first_error.is_none() {
                    first_error = Some(row.error.clone());
                }
            }
            rows.push(row);
        }
        let (nat_row, nat) = estimate_row(&panel, args, rd, NATIONAL, outcome);
        if let Some(e) = &nat {
            plot.extend(plot_rows(&panel, rd, e)?);
        } else if ids.is_empty() {
            failed += 1;
            first_error.get_or_insert(nat_row.error.clone());
        }
        rows.push(nat_row);
        national.insert(outcome.clone(), nat);

        if args.sweep {
            let grid: Vec<(String, u32, f64)> = ids
                .iter()
                .chain(std::iter::once(&NATIONAL.to_string()))
                .flat_map(|id| {
                    SWEEP_BANDWIDTHS.iter().flat_map(move |&bw| {
                        SWEEP_BOUND_SCALES.iter().map(move |&s| (id.clone(), bw, s))
                    })
                })
                .collect();
            let swept: Vec<EstimateRow> = grid
                .par_iter()
                .map(|(id, bw, scale)| {
                    let sub = RdArgs {
                        bandwidth: *bw,
                        bound_scale: *scale,
                        ..rd.clone()
                    };
                    let a = EstimateArgs {
                        rd: sub.clone(),
                        method: MethodArg::Honest,
                        ..args.clone()
                    };
                    let (mut row, _) = estimate_row(&panel, &a, &sub, id, outcome);
                    row.bandwidth = Some(*bw);
                    row.bound_scale = Some(*scale);
                    row
                })
                .collect();
            sweep.extend(swept);
        }
    }

    let total = if ids.is_empty() {
        outcomes.len()
    } else {
        ids.len() * outcomes.len()
    };
    out.csv("estimates.csv", |w| write_estimates(w, &rows))?;
    out.csv("plot_data.csv", |w| write_plot_data(w, &plot))?;
    if args.sweep {
        out.csv("sweep.csv", |w| write_estimates(w, &sweep))?;
    }
    out.json(
        "summary.json",
        args,
        &EstimateSummary {
            outcomes: outcomes.clone(),
            rows: rows.len(),
            failed,
            national,
        },
    )?;
    if total > 0 && failed == total {
        return Err(Error::InsufficientSupport(format!(
            "every locality failed; first error: {}",
            first_error.unwrap_or_default()
        )));
    }
    Ok(Report { warnings: failed })
}

pub fn aggregate(args: &AggregateArgs, out: &Output) -> Result<Report> {
    let rd = RdArgs {
        panel: Some(args.panel.clone()),
        outcome: Vec::new(),
        level: args.level,
        cutoff: 65.0,
        bandwidth: 5,
        donut: vec![65],
        no_donut: false,
        bound_scale: 4.0,
        curvature: None,
        pilot_width: None,
        confidence: 0.95,
        periods: Vec::new(),
    };
    if args.level == LevelArg::National {
        return Err(Error::Config(
            "national pooling happens at estimation; choose state, division or region".into(),
        ));
    }
    let panel = load(&rd)?;
    out.csv("panel.csv", |w| panel.write_csv(w))?;
    Ok(Report { warnings: 0 })
}

#[derive(Serialize)]
struct VarianceOutput {
    outcome: String,
    result: locality_rd::VarianceReduction,
    failed: Vec<String>,
}

pub fn variance(args: &VarianceArgs, out: &Output) -> Result<Report> {
    let rd = &args.rd;
    if rd.level == LevelArg::National {
        return Err(Error::Config(
            "variance needs localities, not --level national".into(),
        ));
    }
    rd_config(rd)?;
    let panel = load(rd)?;
    let outcome = single_outcome(&outcomes(&panel, rd)?)?;
    let periods = period_set(&rd.periods);
    let mut estimates = Vec::new();
    let mut pops = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in honest_all(&panel, &outcome, rd, periods.as_ref()) {
        match r {
            Ok(e) => {
                pops.push(population(&panel, &id, &outcome, rd, periods.as_ref()));
                estimates.push(e);
            }
            Err(_) => failed.push(id),
        }
    }
    let weighting = match args.weights {
        WeightsArg::Population => LocalityWeighting::Population,
        WeightsArg::None => LocalityWeighting::None,
    };
    let cf = CounterfactualSet::from_estimates(&estimates, &pops, weighting)?;
    let result = phi_inference(&cf, rd.confidence)?;
    out.csv("counterfactuals.csv", |w| write_counterfactuals(w, &cf))?;
    out.json(
        "variance.json",
        args,
        &VarianceOutput {
            outcome,
            result,
            failed: failed.clone(),
        },
    )?;
    Ok(Report {
        warnings: failed.len(),
    })
}

#[derive(Serialize)]
struct ShrinkRow<'a> {
    locality_id: &'a str,
    gamma: f64,
    s: f64,
    shrink_factor: f64,
    shrunk: f64,
}

#[derive(Serialize)]
struct ShrinkOutput {
    outcome: String,
    gamma0: f64,
    sigma2: f64,
    n_localities: usize,
    failed: Vec<String>,
}

fn estimate_vector(e: &Estimates) -> Result<EstimateVector<f64>> {
    EstimateVector::new(
        e.ids(),
        e.rows.iter().map(|r| r.gamma).collect(),
        e.rows.iter().map(|r| r.se).collect(),
    )
}

pub fn shrink(args: &ShrinkArgs, out: &Output) -> Result<Report> {
    let (outcome, est, _) = source_estimates(&args.source, None)?;
    let ev = estimate_vector(&est)?;
    let r = eb_shrink(
        &ev,
        &ShrinkOptions {
            weighting: moment_weighting(args.moments),
            ..ShrinkOptions::default()
        },
    )?;
    out.csv("shrunk.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        for l in 0..ev.len() {
            wr.serialize(ShrinkRow {
                locality_id: &ev.localities[l],
                gamma: ev.gamma[l],
                s: ev.s[l],
                shrink_factor: r.b[l],
                shrunk: r.shrunk[l],
            })?;
        }
        wr.flush()?;
        Ok(())
    })?;
    out.json(
        "shrink.json",
        args,
        &ShrinkOutput {
            outcome,
            gamma0: r.gamma0,
            sigma2: r.sigma2,
            n_localities: ev.len(),
            failed: est.failed.clone(),
        },
    )?;
    Ok(Report {
        warnings: est.failed.len(),
    })
}

/// Divides each locality's estimate by its first stage, dropping weak or
/// failed first stages. Returns the scaled estimates and the dropped ids.
fn per_newly_insured(
    est: &Estimates,
    first: &Estimates,
    threshold: f64,
) -> (Estimates, Vec<String>) {
    let by_id: BTreeMap<&str, (f64, f64)> = first
        .rows
        .iter()
        .map(|r| (r.id.as_str(), (r.gamma, r.se)))
        .collect();
    let mut kept = Estimates {
        national: None,
        ..Estimates::default()
    };
    let mut weak = Vec::new();
    for r in &est.rows {
        match by_id.get(r.id.as_str()) {
            Some(&(h, se_h)) if h.abs() >= threshold && h != 0.0 => {
                let (beta, se) = ratio_with_se(r.gamma, r.se, h, se_h, 0.0);
                kept.rows.push(LocalityEstimate {
                    gamma: beta,
                    se,
                    ..r.clone()
                });
            }
            _ => weak.push(r.id.clone()),
        }
    }
    kept.failed = est.failed.clone();
    (kept, weak)
}

#[derive(Serialize)]
struct ForecastOutput {
    outcome: String,
    target: &'static str,
    lambda: f64,
    selected: Vec<String>,
    empty_selection: bool,
    tau: f64,
    chi2: f64,
    gamma_bar: f64,
    pred_bar: f64,
    degenerate_predictions: bool,
    fold_of: Vec<usize>,
    excluded_weak_first_stage: Vec<String>,
    failed: Vec<String>,
}

fn covariate_matrix(
    est: &Estimates,
    path: &std::path::Path,
    weights: WeightsArg,
) -> Result<CovariateMatrix<f64>> {
    let table = CovariateTable::load(path)?;
    let ids = est.ids();
    let columns = table.aligned(&ids)?;
    CovariateMatrix::new(ids, table.names.clone(), columns, est.weights(weights))
}

pub fn forecast(args: &ForecastArgs, out: &Output) -> Result<Report> {
    let (outcome, mut est, _) = source_estimates(&args.source, None)?;
    let mut weak = Vec::new();
    if let Some(h) = &args.first_stage {
        let first = source_estimates(&args.source, Some(h))?.1;
        let (scaled, w) = per_newly_insured(&est, &first, args.weak_threshold);
        est = scaled;
        weak = w;
    }
    let x = standardize(
        &covariate_matrix(&est, &args.covariates, args.weights)?,
        args.standardize.weighted(),
    )?;
    let gamma: Vec<f64> = est.rows.iter().map(|r| r.gamma).collect();
    let cv = lasso_cv(
        &gamma,
        &x,
        &LassoOptions {
            folds: args.folds,
            seed: args.seed,
            ..LassoOptions::default()
        },
    )?;
    let (post, empty) = post_lasso_ols(&gamma, &x, &cv.fit.selected)?;
    let predictions = predict(&post, &x);
    let ev = estimate_vector(&est)?;
    let model = fit_forecast_combination(&ev, &predictions, moment_weighting(args.moments))?;
    let result = mse_forecast(&model, &ev, &predictions)?;
    out.csv("forecasts.csv", |w| {
        write_forecasts(w, &ev, &predictions, &result)
    })?;
    out.json(
        "forecast.json",
        args,
        &ForecastOutput {
            outcome,
            target: if args.first_stage.is_some() {
                "per_newly_insured"
            } else {
                "per_capita"
            },
            lambda: cv.fit.lambda.unwrap_or(0.0),
            selected: post.names.clone(),
            empty_selection: empty,
            tau: model.tau,
            chi2: model.chi2,
            gamma_bar: model.gamma_bar,
            pred_bar: model.pred_bar,
            degenerate_predictions: model.degenerate_predictions,
            fold_of: cv.fold_of.clone(),
            excluded_weak_first_stage: weak.clone(),
            failed: est.failed.clone(),
        },
    )?;
    Ok(Report {
        warnings: est.failed.len() + weak.len() + usize::from(empty),
    })
}

#[derive(Serialize)]
struct CorrelateOutput {
    outcome: String,
    bivariate_r2: BTreeMap<String, Option<f64>>,
    multivariate_r2: Option<f64>,
    lasso_lambda: Option<f64>,
    selected: Vec<String>,
    national: Option<f64>,
    errors: Vec<String>,
}

pub fn correlate(args: &CorrelateArgs, out: &Output) -> Result<Report> {
    let (outcome, est, panel) = source_estimates(&args.source, None)?;
    let raw = covariate_matrix(&est, &args.covariates, args.weights)?;
    let x = standardize(&raw, args.standardize.weighted())?;
    let gamma: Vec<f64> = est.rows.iter().map(|r| r.gamma).collect();
    let level = args.source.rd.confidence;
    let national = match (args.scale_national, est.national) {
        (false, _) => None,
        (true, Some(n)) => Some(n),
        (true, None) => {
            return Err(Error::Config(
                "--scale-national needs a national estimate in the source".into(),
            ))
        }
    };
    let scale = |f: locality_rd::FitResult| match national {
        Some(n) => scale_coefficients(&f, n),
        None => Ok(f),
    };

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut bivariate_r2 = BTreeMap::new();
    for (j, name) in x.names.iter().enumerate() {
        match weighted_bivariate(&gamma, &x.columns[j], &x.weights, name) {
            Ok(f) => {
                bivariate_r2.insert(name.clone(), f.r2);
                rows.extend(coefficient_rows(&scale(f)?, level)?);
            }
            Err(e) => {
                bivariate_r2.insert(name.clone(), None);
                errors.push(format!("bivariate {name}: {e}"));
            }
        }
    }

    let fe = match args.fe {
        FeArg::None => FixedEffects::None,
        fe => {
            let panel = panel.as_ref().ok_or_else(|| {
                Error::Config("fixed effects need --panel for the geography columns".into())
            })?;
            let label = match fe {
                FeArg::Region => "region",
                FeArg::Division => "division",
                _ => "state",
            };
            let groups = est
                .rows
                .iter()
                .map(|r| {
                    let m = &panel.meta()[&r.id];
                    match fe {
                        FeArg::Region => m.census_region.clone(),
                        FeArg::Division => m.census_division.clone(),
                        _ => m.state.clone(),
                    }
                })
                .collect();
            FixedEffects::Groups {
                label: label.into(),
                groups,
            }
        }
    };
    let multivariate_r2 = match weighted_multivariate_ols(&gamma, &x, &fe) {
        Ok(f) => {
            let r2 = f.r2;
            rows.extend(coefficient_rows(&scale(f)?, level)?);
            r2
        }
        Err(e) => {
            errors.push(format!("multivariate: {e}"));
            None
        }
    };

    let (lasso_lambda, selected) = if x.n() >= args.folds {
        let cv = lasso_cv(
            &gamma,
            &x,
            &LassoOptions {
                folds: args.folds,
                seed: args.seed,
                ..LassoOptions::default()
            },
        )?;
        match post_lasso_ols(&gamma, &x, &cv.fit.selected) {
            Ok((f, _)) => {
                let names = f.names.clone();
                rows.extend(coefficient_rows(&scale(f)?, level)?);
                (cv.fit.lambda, names)
            }
            Err(e) => {
                errors.push(format!("post-lasso: {e}"));
                (cv.fit.lambda, Vec::new())
            }
        }
    } else {
        errors.push(format!(
            "lasso skipped: {} localities for {} folds",
            x.n(),
            args.folds
        ));
        (None, Vec::new())
    };

    out.csv("coefficients.csv", |w| write_coefficients(w, &rows))?;
    out.json(
        "correlate.json",
        args,
        &CorrelateOutput {
            outcome,
            bivariate_r2,
            multivariate_r2,
            lasso_lambda,
            selected,
            national,
            errors: errors.clone(),
        },
    )?;
    Ok(Report {
        warnings: errors.len() + est.failed.len(),
    })
}

#[derive(Debug, Deserialize)]
struct DecompInputRow {
    locality_id: String,
    period: String,
    beta: f64,
    gamma_h: f64,
    weight: f64,
    #[serde(default)]
    region: Option<String>,
    #[serde(default)]
    gamma: Option<f64>,
}

type PeriodPair = (
    PeriodInputs<f64>,
    PeriodInputs<f64>,
    BTreeMap<String, String>,
);

fn decomposition_from_file(path: &std::path::Path) -> Result<PeriodPair> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut pre = PeriodInputs {
        localities: Vec::new(),
        beta: Vec::new(),
        gamma_h: Vec::new(),
        weights: Vec::new(),
        gamma: None,
    };
    let mut post = pre.clone();
    let mut pre_gamma = Vec::new();
    let mut post_gamma = Vec::new();
    let mut regions = BTreeMap::new();
    for (i, r) in rdr.deserialize::<DecompInputRow>().enumerate() {
        let r = r.map_err(|e| Error::Row {
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
        let (p, g) = match r.period.as_str() {
            "pre" => (&mut pre, &mut pre_gamma),
            "post" => (&mut post, &mut post_gamma),
            other => {
                return Err(Error::Row {
                    line: i as u64 + 2,
                    message: format!("period must be `pre` or `post`, got `{other}`"),
                })
            }
        };
        if let Some(reg) = r.region {
            regions.insert(r.locality_id.clone(), reg);
        }
        p.localities.push(r.locality_id);
        p.beta.push(r.beta);
        p.gamma_h.push(r.gamma_h);
        p.weights.push(r.weight);
        g.push(r.gamma);
    }
    let collect = |g: Vec<Option<f64>>| -> Option<Vec<f64>> {
        if g.iter().all(Option::is_some) && !g.is_empty() {
            Some(g.into_iter().flatten().collect())
        } else {
            None
        }
    };
    pre.gamma = collect(pre_gamma);
    post.gamma = collect(post_gamma);
    Ok((pre, post, regions))
}

fn decomposition_from_panel(
    args: &DecomposeArgs,
) -> Result<(PeriodPair, Vec<String>, LocalityPanel, String)> {
    let rd = &args.rd;
    let first = args
        .first_stage
        .as_ref()
        .ok_or_else(|| Error::Config("--first-stage is required with --panel".into()))?;
    let pre_set = period_set(&args.pre_periods)
        .ok_or_else(|| Error::Config("--pre-periods is required".into()))?;
    let post_set = period_set(&args.post_periods)
        .ok_or_else(|| Error::Config("--post-periods is required".into()))?;
    if let Some(p) = pre_set.intersection(&post_set).next() {
        return Err(Error::Config(format!(
            "period `{p}` is in both --pre-periods and --post-periods"
        )));
    }
    rd_config(rd)?;
    let panel = load(rd)?;
    let candidates: Vec<String> = outcomes(&panel, rd)?
        .into_iter()
        .filter(|o| o != first)
        .collect();
    let outcome = single_outcome(&candidates)?;
    if !panel.outcomes().contains(first) {
        return Err(Error::Config(format!(
            "first-stage outcome `{first}` is not in the panel"
        )));
    }
    let ids = locality_ids(&panel);
    let per: Vec<Option<[(f64, f64); 2]>> = ids
        .par_iter()
        .map(|id| {
            let one = |set: &BTreeSet<String>| -> Option<(f64, f64)> {
                let g = honest_one(&panel, id, &outcome, rd, Some(set)).ok()?;
                let h = honest_one(&panel, id, first, rd, Some(set)).ok()?;
                (h.gamma.abs() >= args.weak_threshold && h.gamma != 0.0)
                    .then(|| (g.gamma / h.gamma, h.gamma))
            };
            Some([one(&pre_set)?, one(&post_set)?])
        })
        .collect();
    let empty = PeriodInputs {
        localities: Vec::new(),
        beta: Vec::new(),
        gamma_h: Vec::new(),
        weights: Vec::new(),
        gamma: None,
    };
    let (mut pre, mut post) = (empty.clone(), empty);
    let mut excluded = Vec::new();
    let mut regions = BTreeMap::new();
    for (id, r) in ids.iter().zip(per) {
        let Some([a, b]) = r else {
            excluded.push(id.clone());
            continue;
        };
        let w = match args.weights {
            WeightsArg::Population => population(&panel, id, &outcome, rd, Some(&pre_set)),
            WeightsArg::None => 1.0,
        };
        let m = &panel.meta()[id];
        regions.insert(
            id.clone(),
            match args.group_by {
                GroupArg::Region => m.census_region.clone(),
                GroupArg::Division => m.census_division.clone(),
                GroupArg::State => m.state.clone(),
            },
        );
        for (p, (beta, h)) in [(&mut pre, a), (&mut post, b)] {
            p.localities.push(id.clone());
            p.beta.push(beta);
            p.gamma_h.push(h);
            p.weights.push(w);
        }
    }
    Ok(((pre, post, regions), excluded, panel, outcome))
}

#[derive(Serialize)]
struct Identity {
    total_change: f64,
    component_sum: f64,
    difference: f64,
}

#[derive(Serialize)]
struct DecomposeOutput {
    overall: locality_rd::DecompositionResult,
    relative: [f64; 3],
    identity: Identity,
    groups: BTreeMap<String, locality_rd::DecompositionResult>,
    differences: Vec<locality_rd::hetero_decomp::RegionDifference<f64>>,
    excluded: Vec<String>,
}

pub fn decompose(args: &DecomposeArgs, out: &Output) -> Result<Report> {
    let ((pre, post, regions), excluded, panel) = match &args.inputs {
        Some(path) => (decomposition_from_file(path)?, Vec::new(), None),
        None => {
            let (pair, ex, panel, outcome) = decomposition_from_panel(args)?;
            (pair, ex, Some((panel, outcome)))
        }
    };
    let overall = kob_decompose(&pre, &post)?;
    let total = overall.post.mean_gamma - overall.pre.mean_gamma;
    let sum = overall.eta1 + overall.eta2 + overall.eta3;
    let regional = if regions.len() == pre.localities.len() && !regions.is_empty() {
        Some(decompose_by_region(
            &pre,
            &post,
            &regions,
            args.reference.as_deref(),
        )?)
    } else {
        None
    };
    let mut warnings = excluded.len();

    if let (Some((panel, outcome)), Some(baseline)) = (&panel, period_set(&args.baseline_periods)) {
        let analysis = period_set(&args.post_periods).expect("checked");
        if let Some(bad) = baseline.intersection(&analysis).next() {
            return Err(Error::Config(format!(
                "period `{bad}` is in both --baseline-periods and --post-periods"
            )));
        }
        let cfg = DiffInDiscConfig {
            rd: rd_config(&args.rd)?,
            curvature: curvature_choice(&args.rd),
        };
        let rows: Vec<EstimateRow> = locality_ids(panel)
            .par_iter()
            .map(
                |id| match diff_in_disc(panel, id, outcome, &baseline, &analysis, &cfg) {
                    Ok(d) => EstimateRow::ok(&d.estimate, None),
                    Err(e) => EstimateRow::failed(id, outcome, "diff_in_disc", e.to_string()),
                },
            )
            .collect();
        warnings += rows.iter().filter(|r| !r.error.is_empty()).count();
        out.csv("diff_in_disc.csv", |w| write_estimates(w, &rows))?;
    }

    let relative = overall.relative();
    let (groups, differences) = match regional {
        Some(r) => (r.regions, r.differences),
        None => (BTreeMap::new(), Vec::new()),
    };
    out.json(
        "decomposition.json",
        args,
        &DecomposeOutput {
            overall,
            relative,
            identity: Identity {
                total_change: total,
                component_sum: sum,
                difference: total - sum,
            },
            groups,
            differences,
            excluded: excluded.clone(),
        },
    )?;
    Ok(Report { warnings })
}

fn read_columns(args: &BinscatterArgs) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(&args.input)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let ix = col(&args.x)?;
    let iy = col(&args.y)?;
    let iw = args.weight.as_deref().map(col).transpose()?;
    let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<Option<f64>> {
            let s = rec.get(j).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Row {
                line: i as u64 + 2,
                message: format!("`{s}` is not a number"),
            })
        };
        let (Some(a), Some(b)) = (num(ix)?, num(iy)?) else {
            continue;
        };
        x.push(a);
        y.push(b);
        w.push(match iw {
            Some(j) => num(j)?.unwrap_or(0.0),
            None => 1.0,
        });
    }
    Ok((x, y, w))
}

#[derive(Serialize)]
struct BinscatterOutput {
    n_points: usize,
    intercept: Option<f64>,
    slope: Option<f64>,
    r2: Option<f64>,
}

pub fn binscatter_cmd(args: &BinscatterArgs, out: &Output) -> Result<Report> {
    let (x, y, w) = read_columns(args)?;
    let b = binscatter(&x, &y, &w, args.bins)?;
    out.csv("binscatter.csv", |wr| write_binscatter(wr, &b))?;
    out.json(
        "binscatter.json",
        args,
        &BinscatterOutput {
            n_points: x.len(),
            intercept: b.fit.as_ref().map(|f| f.intercept),
            slope: b.fit.as_ref().map(|f| f.coefficients[0]),
            r2: b.fit.as_ref().and_then(|f| f.r2),
        },
    )?;
    Ok(Report { warnings: 0 })
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    synth: &'a SynthConfig,
    args: &'a SimulateArgs,
}

pub fn simulate(args: &SimulateArgs, out: &Output) -> Result<Report> {
    let mut synth = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = args.localities {
        synth.n_localities = n;
    }
    if let Some(s) = args.noise_sd {
        synth.noise_sd = s;
    }
    if let Some(s) = args.seed {
        synth.seed = s;
    }
    synth.validate()?;
    let config = SimulateConfig {
        synth: &synth,
        args,
    };
    if let Some(kind) = args.coverage {
        let estimator = match kind {
            CoverageArg::Honest => EstimatorSpec::HonestFixed,
            CoverageArg::Pilot => EstimatorSpec::HonestPilot {
                left_window_width: None,
            },
            CoverageArg::Conventional => EstimatorSpec::Conventional,
            CoverageArg::Parametric => EstimatorSpec::Parametric {
                order: 1,
                cluster_on_age: false,
            },
            CoverageArg::ParametricCluster => EstimatorSpec::Parametric {
                order: 1,
                cluster_on_age: true,
            },
            CoverageArg::DiffInDisc => EstimatorSpec::DiffInDisc {
                pilot: true,
                left_window_width: None,
            },
        };
        let report = coverage_study(&CoverageStudyConfig {
            synth: synth.clone(),
            estimator,
            bandwidth: args.bandwidth,
            donut: args.donut.iter().copied().collect(),
            bound_scale: args.bound_scale,
            level: args.confidence,
            replications: args.replications,
        })?;
        out.json("coverage.json", &config, &report)?;
        return Ok(Report {
            warnings: usize::try_from(report.failures).unwrap_or(usize::MAX),
        });
    }
    let data = generate(&synth)?;
    out.csv("panel.csv", |w| data.panel.write_csv(w))?;
    if let Some(c) = &data.covariates {
        out.csv("covariates.csv", |w| c.write_csv(w))?;
    }
    out.json("truth.json", &config, &data.truth)?;
    Ok(Report { warnings: 0 })
}
