//! Estimators checked against independent reference computations.

use std::collections::BTreeSet;

use approx::assert_relative_eq;
use locality_rd::correlates::{weighted_multivariate_ols, CovariateMatrix, FixedEffects};
use locality_rd::honest_rd::{
    estimate_rd, estimate_rd_parametric, folded_normal_cv, local_linear_boundary, worst_case_bias,
    HonestRdConfig, SeMode,
};
use locality_rd::panel::{AgeSeries, AgeWindow, SeriesPoint, Side};
use locality_rd::shrink_forecast::{fit_forecast_combination, EstimateVector, MomentWeighting};
use locality_rd::synth::{generate, stream_rng, CurvatureSpec, SynthConfig, SYNTH_OUTCOME};
use locality_rd::variance_functional::{phi_hat, CounterfactualSet, LocalityWeighting};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("L{i}")).collect()
}

/// `(X'WX)^-1 X'W y` and the HC1 covariance.
fn wls(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let p = x.ncols();
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let bread = (x.transpose() * &wm * x).try_inverse().unwrap();
    let b = &bread * x.transpose() * &wm * DVector::from_column_slice(y);
    let e = DVector::from_column_slice(y) - x * &b;
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * (w[i] * e[i]).powi(2);
    }
    let cov = &bread * meat * &bread * (n as f64 / (n - p) as f64);
    (b, cov)
}

fn random_series(seed: u64, with_variance: bool) -> AgeSeries<f64> {
    let mut rng = stream_rng(seed, 9, 0, 0);
    let points = (55..=75)
        .filter(|&a| a != 65)
        .map(|age| {
            let x = f64::from(age - 65);
            let weight: f64 = rng.random_range(100.0..2000.0);
            let jump = if x > 0.0 { -1.5 } else { 0.0 };
            SeriesPoint {
                age,
                offset: x,
                value: 10.0 + 0.3 * x + 0.02 * x * x + jump + rng.sample::<f64, _>(StandardNormal),
                weight,
                variance: with_variance.then(|| 400.0 / weight),
                period: String::new(),
            }
        })
        .collect();
    AgeSeries::new(points)
}

#[test]
fn multivariate_ols_matches_normal_equations() {
    let mut rng = stream_rng(1, 9, 0, 0);
    let (n, p) = (60, 4);
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + 2.0 * cols[0][i] - cols[2][i] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let names = (0..p).map(|j| format!("x{j}")).collect();
    let m = CovariateMatrix::new(ids(n), names, cols.clone(), w.clone()).unwrap();
    let fit = weighted_multivariate_ols(&y, &m, &FixedEffects::None).unwrap();

    let mut x = DMatrix::from_element(n, p + 1, 1.0);
    for j in 0..p {
        for i in 0..n {
            x[(i, j + 1)] = cols[j][i];
        }
    }
    let (b, cov) = wls(&x, &y, &w);
    assert_relative_eq!(fit.intercept, b[0], epsilon = 1e-10);
    for j in 0..p {
        assert_relative_eq!(fit.coefficients[j], b[j + 1], epsilon = 1e-10);
        assert_relative_eq!(fit.se[j], cov[(j + 1, j + 1)].sqrt(), max_relative = 1e-9);
    }
}

#[test]
fn fixed_effects_match_dummy_regression() {
    let mut rng = stream_rng(2, 9, 0, 0);
    let n = 48;
    let groups: Vec<String> = (0..n).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| [0.0, 5.0, -3.0][i % 3] + 0.7 * x[i] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let m = CovariateMatrix::new(ids(n), vec!["x".into()], vec![x.clone()], w.clone()).unwrap();
    let fit = weighted_multivariate_ols(
        &y,
        &m,
        &FixedEffects::Groups {
            label: "region".into(),
            groups,
        },
    )
    .unwrap();

    let mut d = DMatrix::zeros(n, 4);
    for i in 0..n {
        d[(i, 0)] = x[i];
        d[(i, 1 + i % 3)] = 1.0;
    }
    let (b, _) = wls(&d, &y, &w);
    assert_relative_eq!(fit.coefficients[0], b[0], epsilon = 1e-10);
}

#[test]
fn boundary_fit_matches_weighted_least_squares() {
    for seed in 0..5 {
        let s = random_series(seed, true);
        for side in [Side::Left, Side::Right] {
            let fit = local_linear_boundary(&s, side, 5).unwrap();
            let pts: Vec<&SeriesPoint<f64>> =
                s.side(side).filter(|p| p.offset.abs() <= 5.0).collect();
            let x = DMatrix::from_fn(
                pts.len(),
                2,
                |i, j| if j == 0 { 1.0 } else { pts[i].offset },
            );
            let y: Vec<f64> = pts.iter().map(|p| p.value).collect();
            let w: Vec<f64> = pts.iter().map(|p| p.weight).collect();
            let (b, _) = wls(&x, &y, &w);
            assert_relative_eq!(fit.intercept, b[0], epsilon = 1e-10);
            assert_relative_eq!(fit.slope, b[1], epsilon = 1e-10);

            let wm = DMatrix::from_diagonal(&DVector::from_column_slice(&w));
            let lin = (x.transpose() * &wm * &x).try_inverse().unwrap() * x.transpose() * &wm;
            let se2: f64 = (0..pts.len())
                .map(|i| lin[(0, i)].powi(2) * pts[i].variance.unwrap())
                .sum();
            assert_relative_eq!(fit.se, se2.sqrt(), max_relative = 1e-10);
            let k = 0.3;
            let bias: f64 = (0..pts.len())
                .map(|i| lin[(0, i)].abs() * pts[i].offset.powi(2))
                .sum::<f64>()
                * k
                / 2.0;
            assert_relative_eq!(
                worst_case_bias(&fit, k).unwrap(),
                bias,
                max_relative = 1e-10
            );
        }
    }
}

#[test]
fn critical_value_attains_the_level() {
    let z = Normal::standard();
    for &t in &[0.0, 0.1, 0.5, 1.0, 2.5, 7.0] {
        for &level in &[0.9, 0.95, 0.99] {
            let c: f64 = folded_normal_cv(t, level).unwrap();
            let coverage = z.cdf(c - t) - z.cdf(-c - t);
            assert_relative_eq!(coverage, level, epsilon = 1e-10);
        }
    }
    let q = z.inverse_cdf(0.975);
    assert_relative_eq!(folded_normal_cv(0.0, 0.95).unwrap(), q, epsilon = 1e-9);
}

#[test]
fn parametric_robust_se_matches_hc1() {
    let s = random_series(7, false);
    let e = estimate_rd_parametric(&s, 2, SeMode::Robust, 0.95).unwrap();
    let mut var = 0.0;
    let mut gamma = 0.0;
    for (side, sign) in [(Side::Left, -1.0), (Side::Right, 1.0)] {
        let pts: Vec<&SeriesPoint<f64>> = s.side(side).collect();
        let x = DMatrix::from_fn(pts.len(), 3, |i, j| pts[i].offset.powi(j as i32));
        let y: Vec<f64> = pts.iter().map(|p| p.value).collect();
        let w: Vec<f64> = pts.iter().map(|p| p.weight).collect();
        let (b, cov) = wls(&x, &y, &w);
        gamma += sign * b[0];
        var += cov[(0, 0)];
    }
    assert_relative_eq!(e.gamma, gamma, epsilon = 1e-10);
    assert_relative_eq!(e.se, var.sqrt(), max_relative = 1e-9);
}

#[test]
fn forecast_moments_recover_the_signal_model() {
    let (mut tau, mut chi2) = (0.0, 0.0);
    let reps = 20;
    for rep in 0..reps {
        let mut rng = stream_rng(40, 9, rep, 0);
        let n = 500;
        let pred: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let s = vec![0.5; n];
        let gamma: Vec<f64> = pred
            .iter()
            .map(|p| {
                2.0 * p
                    + rng.sample::<f64, _>(StandardNormal)
                    + 0.5 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let est = EstimateVector::new(ids(n), gamma, s).unwrap();
        let m = fit_forecast_combination(&est, &pred, MomentWeighting::Precision).unwrap();
        tau += m.tau / reps as f64;
        chi2 += m.chi2 / reps as f64;
    }
    assert!((tau - 2.0).abs() < 0.03, "tau {tau}");
    assert!((chi2 - 1.0).abs() < 0.05, "chi2 {chi2}");
}

#[test]
fn variance_reduction_on_noiseless_estimates() {
    let data = generate(&SynthConfig {
        n_localities: 60,
        noise_sd: 0.0,
        curvature: CurvatureSpec::Zero,
        seed: 17,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = HonestRdConfig {
        window: AgeWindow::default(),
        ..HonestRdConfig::default()
    };
    let estimates: Vec<_> = data
        .truth
        .localities
        .iter()
        .map(|id| {
            let s = locality_rd::panel::build_age_series(
                &data.panel,
                id,
                SYNTH_OUTCOME,
                &cfg.window,
                &Default::default(),
            )
            .unwrap();
            estimate_rd(&s, &cfg)
                .unwrap()
                .labelled(id.as_str(), SYNTH_OUTCOME)
        })
        .collect();
    let cf = CounterfactualSet::from_estimates(
        &estimates,
        &data.truth.population,
        LocalityWeighting::Population,
    )
    .unwrap();
    let phi = phi_hat(&cf).unwrap().phi;
    assert_relative_eq!(phi, data.truth.phi.unwrap(), epsilon = 1e-10);
}

#[test]
fn donut_ages_never_enter_the_fit() {
    let s = random_series(3, true);
    let mut with_65 = s.points.clone();
    with_65.push(SeriesPoint {
        age: 65,
        offset: 0.0,
        value: 1e6,
        weight: 1.0,
        variance: Some(1.0),
        period: String::new(),
    });
    let cfg = HonestRdConfig::default();
    let a = estimate_rd(&s, &cfg).unwrap();
    let b = estimate_rd(&AgeSeries::new(with_65), &cfg).unwrap();
    assert_eq!(a.gamma, b.gamma);
    assert_eq!(cfg.window.donut, BTreeSet::from([65]));
}
