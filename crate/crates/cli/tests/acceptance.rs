//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test --release -p locality-rd-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use locality_rd::correlates::{
    lasso_cv, lasso_fit, lasso_gradient, post_lasso_ols, predict, soft_threshold, CovariateMatrix,
    LassoOptions,
};
use locality_rd::hetero_decomp::{kob_decompose, ComponentDifference, PeriodInputs};
use locality_rd::honest_rd::{estimate_rd_with, folded_normal_cv, CurvatureChoice, HonestRdConfig};
use locality_rd::panel::{build_full_series, AgeWindow, OutcomeCell, SeriesFilter};
use locality_rd::shrink_forecast::{
    eb_shrink, fit_forecast_combination, mse_forecast, EstimateVector, ForecastModel,
    MomentWeighting, ShrinkOptions,
};
use locality_rd::synth::{
    coverage_study, generate, stream_rng, CoverageStudyConfig, CurvatureSpec, EstimatorSpec,
    GammaSpec, PolicyChange, SynthConfig, SYNTH_OUTCOME,
};
use locality_rd::variance_functional::{phi_gradient, phi_hat, CounterfactualSet};
use locality_rd::LocalityPanel;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

struct Check {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Check {
    Check {
        ok,
        detail: detail.into(),
    }
}

fn report(n: u32, title: &str, checks: &[Check], elapsed: Duration) -> bool {
    let ok = checks.iter().all(|c| c.ok);
    let details: Vec<String> = checks
        .iter()
        .map(|c| format!("{}{}", if c.ok { "" } else { "[failed] " }, c.detail))
        .collect();
    println!(
        "{} {n}. {title}: {} ({:.1}s)",
        if ok { "PASS" } else { "FAIL" },
        details.join("; "),
        elapsed.as_secs_f64()
    );
    ok
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("L{i}")).collect()
}

fn window() -> AgeWindow {
    AgeWindow::new(65.0, 5, [65]).unwrap()
}

fn coverage(synth: SynthConfig, estimator: EstimatorSpec) -> locality_rd::synth::CoverageReport {
    coverage_study(&CoverageStudyConfig {
        synth,
        estimator,
        bandwidth: 5,
        donut: BTreeSet::from([65]),
        bound_scale: 4.0,
        level: 0.95,
        replications: 500,
    })
    .unwrap()
}

fn honest_coverage() -> Vec<Check> {
    let t = Instant::now();
    let base = SynthConfig {
        n_localities: 50,
        curvature: CurvatureSpec::AtBound { opposing: false },
        k_true: 0.02,
        noise_sd: 30.0,
        seed: 11,
        ..SynthConfig::default()
    };
    let honest = coverage(base.clone(), EstimatorSpec::HonestFixed);
    let high = SynthConfig {
        curvature: CurvatureSpec::AtBound { opposing: true },
        k_true: 0.2,
        ..base
    };
    let conventional = coverage(high, EstimatorSpec::Conventional);
    let elapsed = t.elapsed();
    vec![
        check(
            honest.min_locality_coverage >= 0.93 && honest.failures == 0,
            format!(
                "honest min per-locality coverage {:.3} (mean {:.3}) over 50 x 500",
                honest.min_locality_coverage, honest.coverage
            ),
        ),
        check(
            conventional.coverage < 0.90,
            format!(
                "conventional on high curvature {:.3}",
                conventional.coverage
            ),
        ),
        check(
            elapsed < Duration::from_secs(300),
            format!("{:.1}s", elapsed.as_secs_f64()),
        ),
    ]
}

fn bias_bound() -> Vec<Check> {
    let mut total = 0;
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for (seed, curvature) in [
        (21, CurvatureSpec::Uniform),
        (22, CurvatureSpec::AtBound { opposing: false }),
        (23, CurvatureSpec::AtBound { opposing: true }),
        (24, CurvatureSpec::Uniform),
    ] {
        let k = 0.05;
        let data = generate(&SynthConfig {
            n_localities: 250,
            curvature,
            k_true: k,
            noise_sd: 0.0,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = HonestRdConfig {
            window: window(),
            curvature_bound: k,
            ..HonestRdConfig::default()
        };
        for (l, id) in data.truth.localities.iter().enumerate() {
            let s = build_full_series(
                &data.panel,
                id,
                SYNTH_OUTCOME,
                &cfg.window,
                &SeriesFilter::default(),
            )
            .unwrap();
            let (e, _) = estimate_rd_with(&s, &cfg, CurvatureChoice::Fixed).unwrap();
            let err = (e.gamma - data.truth.gamma[l]).abs();
            total += 1;
            if err <= e.bias_bound * (1.0 + 1e-9) + 1e-12 {
                within += 1;
            }
            worst = worst.max(err / e.bias_bound);
        }
    }
    vec![check(
        within == total && total == 1000,
        format!(
            "{within}/{total} noiseless localities within the bound, max error/bound {worst:.4}"
        ),
    )]
}

fn two_pass_variance(v: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let mean = v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    v.iter()
        .zip(w)
        .map(|(a, b)| b * (a - mean) * (a - mean))
        .sum::<f64>()
        / total
}

fn counterfactuals(f0: Vec<f64>, g0: Vec<f64>, w: Vec<f64>) -> CounterfactualSet<f64> {
    let n = f0.len();
    CounterfactualSet::new(
        ids(n),
        f0,
        g0,
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        w,
    )
    .unwrap()
}

fn phi_oracle() -> Vec<Check> {
    let mut worst_phi: f64 = 0.0;
    for seed in 0..20 {
        let data = generate(&SynthConfig {
            n_localities: 200,
            noise_sd: 0.0,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let t = &data.truth;
        let oracle =
            1.0 - two_pass_variance(&t.g0, &t.population) / two_pass_variance(&t.f0, &t.population);
        let cf = counterfactuals(t.f0.clone(), t.g0.clone(), t.population.clone());
        worst_phi = worst_phi.max((phi_hat(&cf).unwrap().phi - oracle).abs());
    }

    let mut rng = stream_rng(3, 0, 0, 0);
    let mut worst_grad: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(3..40);
        let f0: Vec<f64> = (0..n)
            .map(|_| 10.0 + 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let g0: Vec<f64> = (0..n)
            .map(|_| 8.0 + 1.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let phi = |f: &[f64], g: &[f64]| 1.0 - two_pass_variance(g, &w) / two_pass_variance(f, &w);
        let grad = phi_gradient(&counterfactuals(f0.clone(), g0.clone(), w.clone())).unwrap();
        let analytic: Vec<f64> = grad.d_f.iter().chain(&grad.d_g).copied().collect();
        let mut numeric = Vec::with_capacity(2 * n);
        for side in 0..2 {
            for i in 0..n {
                let (mut fp, mut gp) = (f0.clone(), g0.clone());
                let (mut fm, mut gm) = (f0.clone(), g0.clone());
                let v = if side == 0 { f0[i] } else { g0[i] };
                let h = 1e-5 * (1.0 + v.abs());
                if side == 0 {
                    fp[i] += h;
                    fm[i] -= h;
                } else {
                    gp[i] += h;
                    gm[i] -= h;
                }
                numeric.push((phi(&fp, &gp) - phi(&fm, &gm)) / (2.0 * h));
            }
        }
        let norm = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst_grad = worst_grad.max(diff / norm);
    }
    vec![
        check(
            worst_phi <= 1e-12,
            format!("max |phi_hat - oracle| {worst_phi:.2e} over 20 truths"),
        ),
        check(
            worst_grad < 1e-6,
            format!("max gradient relative error {worst_grad:.2e} over 100 inputs"),
        ),
    ]
}

fn critical_values() -> Vec<Check> {
    let c0: f64 = folded_normal_cv(0.0, 0.95).unwrap();
    let c3: f64 = folded_normal_cv(3.0, 0.95).unwrap();
    let grid: Vec<f64> = (0..=400)
        .map(|i| folded_normal_cv(f64::from(i) * 0.025, 0.95).unwrap())
        .collect();
    let monotone = grid.windows(2).all(|p| p[1] > p[0]);
    vec![
        check((c0 - 1.959964).abs() <= 1e-6, format!("cv(0) = {c0:.7}")),
        check((c3 - 4.64485).abs() <= 1e-3, format!("cv(3) = {c3:.5}")),
        check(monotone, "strictly increasing on t in [0, 10] step 0.025"),
    ]
}

fn sparse_design(rng: &mut impl Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

const ACTIVE: [(usize, f64); 3] = [(0, 1.0), (3, -0.8), (7, 0.6)];

fn sparse_gamma(x: &[Vec<f64>], rng: &mut impl Rng, sd: f64) -> Vec<f64> {
    (0..x[0].len())
        .map(|i| {
            -2.0 + ACTIVE.iter().map(|&(j, b)| b * x[j][i]).sum::<f64>()
                + sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

fn forecast_limits() -> Vec<Check> {
    let est = EstimateVector::<f64>::new(
        ids(5),
        vec![1.0, -2.0, 3.5, 0.2, 4.0],
        vec![0.0, 1.0, 0.5, 0.0, 2.0],
    )
    .unwrap();
    let pred = [0.5, -1.0, 2.0, 1.0, 2.5];
    let model = fit_forecast_combination(&est, &pred, MomentWeighting::Precision).unwrap();
    let r = mse_forecast(&model, &est, &pred).unwrap();
    let exact = [0, 3]
        .iter()
        .all(|&l| r.forecast[l] == est.gamma[l] && r.rmse[l] == 0.0);

    let flat = [1.0; 5];
    let est2 = EstimateVector::<f64>::new(
        ids(5),
        vec![1.0, -2.0, 3.5, 0.2, 4.0],
        vec![0.5, 1.0, 0.5, 0.8, 2.0],
    )
    .unwrap();
    let m2 = fit_forecast_combination(&est2, &flat, MomentWeighting::Precision).unwrap();
    let f2 = mse_forecast(&m2, &est2, &flat).unwrap();
    let eb = eb_shrink(&est2, &ShrinkOptions::default()).unwrap();
    let to_mean = f2
        .forecast
        .iter()
        .zip(&eb.shrunk)
        .all(|(a, b)| (a - b).abs() <= 1e-12)
        && m2.tau == 0.0;

    let hand = mse_forecast(
        &ForecastModel::<f64> {
            tau: 1.0,
            chi2: 1.0,
            gamma_bar: 0.0,
            pred_bar: 0.0,
            degenerate_predictions: false,
            weighting: MomentWeighting::Precision,
        },
        &EstimateVector::<f64>::new(ids(1), vec![2.0], vec![1.0]).unwrap(),
        &[1.0],
    )
    .unwrap();
    let hand_ok = (hand.forecast[0] - 1.5).abs() <= 1e-6
        && (hand.rmse[0] - 0.5f64.sqrt()).abs() <= 1e-6
        && format!("{:.5}", hand.rmse[0]) == "0.70711";

    let mut wins = 0;
    let (mut mse_f, mut mse_r) = (0.0, 0.0);
    for rep in 0..100u64 {
        let mut rng = stream_rng(500, 0, rep, 0);
        let n = 200;
        let x = sparse_design(&mut rng, n, 20);
        let gamma = sparse_gamma(&x, &mut rng, 0.5);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let raw: Vec<f64> = gamma
            .iter()
            .zip(&s)
            .map(|(g, sd)| g + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let names = (0..20).map(|j| format!("x{j}")).collect();
        let m = CovariateMatrix::new(ids(n), names, x, vec![1.0; n]).unwrap();
        let cv = lasso_cv(
            &raw,
            &m,
            &LassoOptions {
                seed: rep,
                ..LassoOptions::default()
            },
        )
        .unwrap();
        let (post, _) = post_lasso_ols(&raw, &m, &cv.fit.selected).unwrap();
        let pred = predict(&post, &m);
        let ev = EstimateVector::<f64>::new(ids(n), raw.clone(), s).unwrap();
        let model = fit_forecast_combination(&ev, &pred, MomentWeighting::Precision).unwrap();
        let f = mse_forecast(&model, &ev, &pred).unwrap();
        let mse = |v: &[f64]| {
            v.iter()
                .zip(&gamma)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / n as f64
        };
        let (a, b) = (mse(&f.forecast), mse(&raw));
        mse_f += a / 100.0;
        mse_r += b / 100.0;
        wins += usize::from(a <= b);
    }
    vec![
        check(exact, "s = 0 keeps the raw estimate with rmse 0"),
        check(
            to_mean,
            "flat predictions give empirical-Bayes shrinkage to the mean",
        ),
        check(
            hand_ok,
            format!(
                "hand example forecast {:.6}, rmse {:.6}",
                hand.forecast[0], hand.rmse[0]
            ),
        ),
        check(
            wins == 100,
            format!(
                "forecast MSE <= raw in {wins}/100 replications (mean {mse_f:.3} vs {mse_r:.3})"
            ),
        ),
    ]
}

fn lasso() -> Vec<Check> {
    let mut rng = stream_rng(600, 0, 0, 0);
    let n = 150;
    let x = sparse_design(&mut rng, n, 15);
    let gamma = sparse_gamma(&x, &mut rng, 1.0);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let names: Vec<String> = (0..15).map(|j| format!("x{j}")).collect();
    let m = CovariateMatrix::new(ids(n), names.clone(), x.clone(), w.clone()).unwrap();
    let opts = LassoOptions {
        tol: 1e-12,
        ..LassoOptions::default()
    };
    let cv = lasso_cv(&gamma, &m, &opts).unwrap();
    let mut kkt: f64 = 0.0;
    for (lam, beta) in cv.lambdas.iter().zip(&cv.path) {
        for (g, b) in lasso_gradient(&gamma, &m, beta).iter().zip(beta) {
            let v = if *b == 0.0 {
                (g.abs() - lam).max(0.0)
            } else {
                (g - lam * b.signum()).abs()
            };
            kkt = kkt.max(v);
        }
    }

    let rows = 16;
    let bit = |i: usize, b: usize| if (i >> b) & 1 == 1 { -1.0 } else { 1.0 };
    let cols: Vec<Vec<f64>> = vec![
        (0..rows).map(|i| bit(i, 0)).collect(),
        (0..rows).map(|i| bit(i, 1)).collect(),
        (0..rows).map(|i| bit(i, 2)).collect(),
        (0..rows).map(|i| bit(i, 3)).collect(),
        (0..rows).map(|i| bit(i, 0) * bit(i, 1)).collect(),
    ];
    let y: Vec<f64> = (0..rows)
        .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let om = CovariateMatrix::new(
        ids(rows),
        names[..5].to_vec(),
        cols.clone(),
        vec![1.0; rows],
    )
    .unwrap();
    let mut closed: f64 = 0.0;
    for lam in [0.0, 0.1, 0.5, 1.0, 2.0] {
        let fit = lasso_fit(&y, &om, lam, &LassoOptions::default());
        for (j, c) in cols.iter().enumerate() {
            let z = c.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / rows as f64;
            closed = closed.max((fit.coefficients[j] - soft_threshold(z, lam)).abs());
        }
    }

    let mut recovered = 0;
    for rep in 0..100u64 {
        let mut r = stream_rng(601, 0, rep, 0);
        let x = sparse_design(&mut r, 200, 20);
        let g = sparse_gamma(&x, &mut r, 1.0);
        let names = (0..20).map(|j| format!("x{j}")).collect();
        let mm = CovariateMatrix::new(ids(200), names, x, vec![1.0; 200]).unwrap();
        let fit = lasso_cv(
            &g,
            &mm,
            &LassoOptions {
                seed: rep,
                ..LassoOptions::default()
            },
        )
        .unwrap();
        recovered += usize::from(ACTIVE.iter().all(|&(j, _)| fit.fit.selected[j]));
    }

    let (post, _) = post_lasso_ols(&gamma, &m, &[true; 15]).unwrap();
    let mut design = DMatrix::<f64>::from_element(n, 16, 1.0);
    for (j, c) in x.iter().enumerate() {
        for i in 0..n {
            design[(i, j + 1)] = c[i];
        }
    }
    let wm = DMatrix::from_diagonal(&DVector::from_vec(w));
    let xtw = design.transpose() * &wm;
    let b = (&xtw * &design)
        .lu()
        .solve(&(&xtw * DVector::from_vec(gamma.clone())))
        .unwrap();
    let ols_gap = post
        .coefficients
        .iter()
        .enumerate()
        .map(|(j, c)| (c - b[j + 1]).abs())
        .fold((post.intercept - b[0]).abs(), f64::max);
    vec![
        check(
            kkt <= 1e-6,
            format!(
                "KKT violation {kkt:.2e} over {} path points",
                cv.lambdas.len()
            ),
        ),
        check(
            closed <= 1e-8,
            format!("orthonormal soft-threshold gap {closed:.2e}"),
        ),
        check(
            recovered >= 95,
            format!("true support selected in {recovered}/100"),
        ),
        check(
            ols_gap <= 1e-10,
            format!("post-lasso on all columns vs OLS {ols_gap:.2e}"),
        ),
    ]
}

fn decomposition() -> Vec<Check> {
    let mut rng = stream_rng(700, 0, 0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..60);
        let mut draw = |mean: f64, sd: f64| -> Vec<f64> {
            (0..n)
                .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let pre = PeriodInputs {
            localities: ids(n),
            beta: draw(500.0, 200.0),
            gamma_h: draw(0.08, 0.03),
            weights: draw(0.0, 1.0).iter().map(|v| v.abs() + 0.1).collect(),
            gamma: None,
        };
        let post = PeriodInputs {
            beta: draw(400.0, 200.0),
            gamma_h: draw(0.05, 0.02),
            ..pre.clone()
        };
        let d = kob_decompose(&pre, &post).unwrap();
        let gap = (d.eta1 + d.eta2 + d.eta3 - (d.post.mean_gamma - d.pre.mean_gamma)).abs();
        worst = worst.max(gap);
    }
    let hand = |beta: [f64; 2], h: [f64; 2]| PeriodInputs {
        localities: vec!["A".into(), "B".into()],
        beta: beta.to_vec(),
        gamma_h: h.to_vec(),
        weights: vec![1.0, 1.0],
        gamma: None,
    };
    let eta = kob_decompose(
        &hand([10.0, 20.0], [0.1, 0.2]),
        &hand([10.0, 20.0], [0.05, 0.1]),
    )
    .unwrap()
    .eta;
    let printed = ComponentDifference::<f64> {
        d_eta1: 0.051,
        d_eta2: 0.083,
        d_eta3: 0.065,
    }
    .total();
    vec![
        check(
            worst <= 1e-10,
            format!("identity gap {worst:.2e} over 200 random inputs"),
        ),
        check(eta == -0.5, format!("two-locality eta {eta}")),
        check(
            (printed - 0.2).abs() <= 0.001 + 1e-12,
            format!("printed components sum to {printed:.3}"),
        ),
    ]
}

fn diff_in_disc() -> Vec<Check> {
    let jump = 1.5;
    let policy = PolicyChange {
        analysis_periods: BTreeSet::from(["a".to_string()]),
        jump,
        slope: 0.0,
        quadratic: 0.0,
    };
    let data = generate(&SynthConfig {
        n_localities: 100,
        curvature: CurvatureSpec::Uniform,
        k_true: 0.05,
        noise_sd: 0.0,
        periods: vec!["b".into(), "a".into()],
        policy: Some(policy.clone()),
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = locality_rd::hetero_decomp::DiffInDiscConfig {
        rd: HonestRdConfig {
            window: window(),
            ..HonestRdConfig::default()
        },
        curvature: CurvatureChoice::Fixed,
    };
    let baseline = BTreeSet::from(["b".to_string()]);
    let worst = data
        .truth
        .localities
        .iter()
        .map(|id| {
            let d = locality_rd::hetero_decomp::diff_in_disc(
                &data.panel,
                id,
                SYNTH_OUTCOME,
                &baseline,
                &policy.analysis_periods,
                &cfg,
            )
            .unwrap();
            (d.estimate.gamma - jump).abs()
        })
        .fold(0.0, f64::max);

    let noisy = coverage(
        SynthConfig {
            n_localities: 50,
            min_age: 45,
            noise_sd: 30.0,
            periods: vec!["b".into(), "a".into()],
            policy: Some(PolicyChange {
                slope: 0.05,
                ..policy
            }),
            seed: 11,
            ..SynthConfig::default()
        },
        EstimatorSpec::DiffInDisc {
            pilot: true,
            left_window_width: None,
        },
    );
    vec![
        check(
            worst <= 1e-9,
            format!("noiseless max |d_hat - d| {worst:.2e}"),
        ),
        check(
            (0.93..=0.97).contains(&noisy.coverage),
            format!("coverage {:.4} over 50 x 500", noisy.coverage),
        ),
    ]
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_locality-rd")
}

fn run(args: &[&str], workers: usize, out: &Path) -> bool {
    Command::new(bin())
        .args(args)
        .arg("--workers")
        .arg(workers.to_string())
        .arg("--out")
        .arg(out)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn two_outcome_panel(path: &Path) {
    let cfg = SynthConfig {
        n_localities: 24,
        periods: vec!["2008".into(), "2009".into(), "2014".into(), "2015".into()],
        policy: Some(PolicyChange {
            analysis_periods: BTreeSet::from(["2014".into(), "2015".into()]),
            jump: -1.0,
            slope: 0.0,
            quadratic: 0.0,
        }),
        seed: 4,
        ..SynthConfig::default()
    };
    let outcome = generate(&cfg).unwrap();
    let coverage = generate(&SynthConfig {
        gamma: GammaSpec::Normal {
            mean: 0.1,
            sd: 0.01,
        },
        level_mean: 0.85,
        level_sd: 0.05,
        slope_mean: 0.0,
        slope_sd: 0.001,
        slope_change_sd: 0.0,
        noise_sd: 0.2,
        policy: Some(PolicyChange {
            jump: -0.04,
            ..cfg.policy.clone().unwrap()
        }),
        seed: 5,
        ..cfg.clone()
    })
    .unwrap();
    let mut cells: Vec<OutcomeCell> = outcome.panel.cells().to_vec();
    cells.extend(coverage.panel.cells().iter().cloned().map(|mut c| {
        c.outcome = "coverage".into();
        c
    }));
    LocalityPanel::from_parts(cells, outcome.panel.meta().clone())
        .unwrap()
        .save(path)
        .unwrap();
}

fn determinism() -> Vec<Check> {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    let p = |name: &str| -> String { r.join(name).to_string_lossy().into_owned() };
    let config = r#"{"n_localities": 40, "min_age": 50,
        "gamma": {"kind": "covariates", "n_covariates": 8, "active": [[0, 2.0], [2, -1.0]],
                  "intercept": -3.0, "residual_sd": 0.5},
        "curvature": {"kind": "uniform"}, "k_true": 0.02, "noise_sd": 20.0, "seed": 3}"#;
    std::fs::write(r.join("synth.json"), config).unwrap();
    let decomposition_inputs = "locality_id,period,beta,gamma_h,weight,region\n\
                  A,pre,10,0.1,1,South\nB,pre,20,0.2,1,West\nC,pre,15,0.15,2,South\n\
                  A,post,12,0.05,1,South\nB,post,18,0.1,1,West\nC,post,14,0.2,2,South\n";
    std::fs::write(r.join("inputs.csv"), decomposition_inputs).unwrap();
    two_outcome_panel(&r.join("panel2.csv"));

    let fixture = r.join("sim");
    if !run(&["simulate", "--config", &p("synth.json")], 1, &fixture) {
        return vec![check(false, "simulate fixture failed")];
    }
    let panel = p("sim/panel.csv");
    let covariates = p("sim/covariates.csv");
    if !run(&["estimate", "--panel", &panel], 1, &r.join("est")) {
        return vec![check(false, "estimate fixture failed")];
    }
    let estimates = p("est/estimates.csv");
    let inputs = p("inputs.csv");
    let synth_json = p("synth.json");
    let panel2 = p("panel2.csv");
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--config", &synth_json]),
        (
            "simulate-coverage",
            vec![
                "simulate",
                "--localities",
                "8",
                "--coverage",
                "honest",
                "--replications",
                "100",
            ],
        ),
        ("estimate", vec!["estimate", "--panel", &panel, "--sweep"]),
        (
            "estimate-parametric",
            vec![
                "estimate",
                "--panel",
                &panel,
                "--method",
                "parametric",
                "--order",
                "2",
                "--se-mode",
                "cluster-age",
            ],
        ),
        (
            "aggregate",
            vec!["aggregate", "--panel", &panel, "--level", "region"],
        ),
        ("variance", vec!["variance", "--panel", &panel]),
        ("shrink", vec!["shrink", "--estimates", &estimates]),
        (
            "forecast",
            vec!["forecast", "--panel", &panel, "--covariates", &covariates],
        ),
        (
            "correlate",
            vec![
                "correlate",
                "--panel",
                &panel,
                "--covariates",
                &covariates,
                "--fe",
                "region",
            ],
        ),
        ("decompose-inputs", vec!["decompose", "--inputs", &inputs]),
        (
            "decompose-panel",
            vec![
                "decompose",
                "--panel",
                &panel2,
                "--first-stage",
                "coverage",
                "--pre-periods",
                "2008,2009",
                "--post-periods",
                "2014,2015",
                "--baseline-periods",
                "2008,2009",
            ],
        ),
        (
            "binscatter",
            vec![
                "binscatter",
                "--input",
                &covariates,
                "--x",
                "x0",
                "--y",
                "x1",
                "--bins",
                "7",
            ],
        ),
    ];
    let mut identical = 0;
    let mut failures = Vec::new();
    for (name, args) in &commands {
        let dirs: Vec<PathBuf> = [(1, "a"), (8, "b"), (1, "c")]
            .iter()
            .map(|(w, tag)| {
                let d = r.join(format!("{name}-{tag}"));
                run(args, *w, &d).then_some(d)
            })
            .collect::<Option<Vec<_>>>()
            .unwrap_or_default();
        if dirs.len() != 3 {
            failures.push(format!("{name} failed to run"));
            continue;
        }
        let first = dir_contents(&dirs[0]);
        if !first.is_empty() && dirs[1..].iter().all(|d| dir_contents(d) == first) {
            identical += 1;
        } else {
            failures.push(format!("{name} differs"));
        }
    }
    vec![check(
        failures.is_empty(),
        format!(
            "{identical}/{} commands byte-identical across 1, 8 and 1 workers{}",
            commands.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(" ({})", failures.join(", "))
            }
        ),
    )]
}

type Criterion = (u32, &'static str, fn() -> Vec<Check>);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "honest coverage", honest_coverage),
        (2, "sharp bias bound", bias_bound),
        (3, "variance-reduction oracle", phi_oracle),
        (4, "folded-normal critical values", critical_values),
        (5, "shrinkage and forecast limits", forecast_limits),
        (6, "lasso correctness", lasso),
        (7, "decomposition identity", decomposition),
        (8, "difference in discontinuities", diff_in_disc),
        (9, "CLI determinism", determinism),
    ];
    let mut all = true;
    for (n, title, f) in criteria {
        let t = Instant::now();
        let checks = f();
        all &= report(n, title, &checks, t.elapsed());
    }
    if !all {
        std::process::exit(1);
    }
}
