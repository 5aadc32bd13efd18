//! Synthetic panels with known ground truth, and Monte-Carlo coverage studies.
//!
//! Each locality has piecewise-cubic age profiles in the offset `x = age - cutoff`:
//! `f(x) = a + b x + c x^2 + d x^3` on the left and
//! `g(x) = a + gamma + b' x + c' x^2 + d' x^3` on the right. Cells carry
//! independent Gaussian noise with variance `noise_sd^2 / population`, which
//! is emitted exactly as `value_variance`.
//!
//! Randomness is ChaCha8 seeded per `(seed, stream, replication, locality)` through
//! SplitMix64, so output does not depend on thread count or platform.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetero_decomp::{diff_in_disc, DiffInDiscConfig};
use crate::honest_rd::{
    estimate_rd_parametric, estimate_rd_with, CurvatureChoice, HonestRdConfig, SeMode,
};
use crate::panel::{
    build_full_series, CovariateTable, LocalityMeta, LocalityPanel, OutcomeCell, SeriesFilter,
};

pub const SYNTH_OUTCOME: &str = "y";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSpec {
    Constant {
        value: f64,
    },
    Values {
        values: Vec<f64>,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// `gamma = intercept + X beta + N(0, residual_sd^2)` with `X` iid standard normal.
    Covariates(CovariateSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub n_covariates: usize,
    /// `(column, coefficient)` pairs; every other column is inert.
    pub active: Vec<(usize, f64)>,
    pub intercept: f64,
    pub residual_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurvatureSpec {
    Zero,
    /// `|f''| = |g''| = k_true`. With `opposing`, the left profile is convex and
    /// the right concave, so the extrapolation biases add up; otherwise signs
    /// are drawn per side.
    AtBound {
        opposing: bool,
    },
    /// Second derivatives drawn uniformly on `[-k_true, k_true]`.
    Uniform,
    /// Same polynomial shape for every locality.
    Polynomial {
        left_quadratic: f64,
        right_quadratic: f64,
        left_cubic: f64,
        right_cubic: f64,
    },
}

/// Change applied to the analysis periods only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyChange {
    pub analysis_periods: BTreeSet<String>,
    pub jump: f64,
    pub slope: f64,
    /// Coefficient on `x^2`; counts toward the curvature bound.
    pub quadratic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_localities: usize,
    pub min_age: i32,
    pub max_age: i32,
    pub cutoff: f64,
    pub gamma: GammaSpec,
    pub curvature: CurvatureSpec,
    /// Declared bound on `|f''|` and `|g''|` over the age range.
    pub k_true: f64,
    pub level_mean: f64,
    pub level_sd: f64,
    pub slope_mean: f64,
    pub slope_sd: f64,
    /// Sd of the right-side slope around the left-side slope.
    pub slope_change_sd: f64,
    pub noise_sd: f64,
    pub population_min: f64,
    pub population_max: f64,
    pub periods: Vec<String>,
    pub policy: Option<PolicyChange>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_localities: 50,
            min_age: 55,
            max_age: 75,
            cutoff: 65.0,
            gamma: GammaSpec::Normal {
                mean: -2.0,
                sd: 1.0,
            },
            curvature: CurvatureSpec::Zero,
            k_true: 0.0,
            level_mean: 10.0,
            level_sd: 2.0,
            slope_mean: 0.2,
            slope_sd: 0.1,
            slope_change_sd: 0.05,
            noise_sd: 1.0,
            population_min: 500.0,
            population_max: 5000.0,
            periods: vec!["0".into()],
            policy: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_localities == 0 {
            return Err(Error::Config("n_localities must be positive".into()));
        }
        if self.max_age <= self.min_age {
            return Err(Error::Config("max_age must exceed min_age".into()));
        }
        if !(self.noise_sd >= 0.0) || !(self.k_true >= 0.0) {
            return Err(Error::Config(
                "noise_sd and k_true must be nonnegative".into(),
            ));
        }
        if !(self.population_min > 0.0 && self.population_max >= self.population_min) {
            return Err(Error::Config(
                "population range must be positive and ordered".into(),
            ));
        }
        if self.periods.is_empty() {
            return Err(Error::Config("at least one period is required".into()));
        }
        if let GammaSpec::Values { values } = &self.gamma {
            if values.len() != self.n_localities {
                return Err(Error::Config(format!(
                    "{} gamma values for {} localities",
                    values.len(),
                    self.n_localities
                )));
            }
        }
        if let GammaSpec::Covariates(c) = &self.gamma {
            if let Some((j, _)) = c.active.iter().find(|(j, _)| *j >= c.n_covariates) {
                return Err(Error::Config(format!("active covariate {j} out of range")));
            }
        }
        if let Some(p) = &self.policy {
            if let Some(bad) = p
                .analysis_periods
                .iter()
                .find(|q| !self.periods.contains(q))
            {
                return Err(Error::Config(format!(
                    "analysis period `{bad}` is not generated"
                )));
            }
        }
        if let CurvatureSpec::Polynomial {
            left_quadratic,
            right_quadratic,
            left_cubic,
            right_cubic,
        } = self.curvature
        {
            let lo = f64::from(self.min_age) - self.cutoff;
            let hi = f64::from(self.max_age) - self.cutoff;
            let extra = self.policy.as_ref().map_or(0.0, |p| 2.0 * p.quadratic);
            let sup = |c: f64, d: f64, a: f64, b: f64| {
                [a, b, 0.0]
                    .iter()
                    .filter(|x| (a..=b).contains(*x))
                    .map(|&x| {
                        (2.0 * c + 6.0 * d * x)
                            .abs()
                            .max((2.0 * c + extra + 6.0 * d * x).abs())
                    })
                    .fold(0.0, f64::max)
            };
            let worst = sup(left_quadratic, left_cubic, lo.min(0.0), 0.0).max(sup(
                right_quadratic,
                right_cubic,
                0.0,
                hi.max(0.0),
            ));
            if worst > self.k_true * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "declared curvature {worst} exceeds k_true {}",
                    self.k_true
                )));
            }
        } else if let Some(p) = &self.policy {
            let base = match self.curvature {
                CurvatureSpec::Zero => 0.0,
                _ => self.k_true,
            };
            if base + (2.0 * p.quadratic).abs() > self.k_true * (1.0 + 1e-12) {
                return Err(Error::Config(
                    "policy curvature pushes the profile past k_true".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn ages(&self) -> impl Iterator<Item = i32> {
        self.min_age..=self.max_age
    }

    pub fn locality_id(l: usize) -> String {
        format!("L{l:04}")
    }
}

/// True profile of one locality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub level: f64,
    pub gamma: f64,
    pub slope_left: f64,
    pub slope_right: f64,
    pub quad_left: f64,
    pub quad_right: f64,
    pub cubic_left: f64,
    pub cubic_right: f64,
}

impl Profile {
    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            self.level + self.slope_left * x + self.quad_left * x * x + self.cubic_left * x * x * x
        } else {
            self.level
                + self.gamma
                + self.slope_right * x
                + self.quad_right * x * x
                + self.cubic_right * x * x * x
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub localities: Vec<String>,
    pub gamma: Vec<f64>,
    /// Left limit at the cutoff.
    pub f0: Vec<f64>,
    /// Right limit at the cutoff.
    pub g0: Vec<f64>,
    /// Total population per locality over the generated ages, first period.
    pub population: Vec<f64>,
    pub profiles: Vec<Profile>,
    /// Population-weighted variance reduction across localities; `None` when
    /// the left limits do not vary.
    pub phi: Option<f64>,
    pub covariate_coefficients: Option<Vec<f64>>,
    pub policy_jump: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub panel: LocalityPanel,
    pub truth: SynthTruth,
    pub covariates: Option<CovariateTable>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, stream, replication, locality)`.
pub fn stream_rng(seed: u64, stream: u64, replication: u64, locality: u64) -> ChaCha8Rng {
    let s = splitmix(splitmix(splitmix(splitmix(seed) ^ stream) ^ replication) ^ locality);
    ChaCha8Rng::seed_from_u64(s)
}

const TRUTH: u64 = 1;
const NOISE: u64 = 2;
const POP: u64 = 3;
const COVARIATES: u64 = 4;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_profiles(config: &SynthConfig, x: &[Vec<f64>]) -> Vec<Profile> {
    let k = config.k_true;
    (0..config.n_localities)
        .map(|l| {
            let mut rng = stream_rng(config.seed, TRUTH, 0, l as u64);
            let level = config.level_mean + config.level_sd * normal(&mut rng);
            let slope_left = config.slope_mean + config.slope_sd * normal(&mut rng);
            let slope_right = slope_left + config.slope_change_sd * normal(&mut rng);
            let gamma = match &config.gamma {
                GammaSpec::Constant { value } => *value,
                GammaSpec::Values { values } => values[l],
                GammaSpec::Normal { mean, sd } => mean + sd * normal(&mut rng),
                GammaSpec::Covariates(c) => {
                    c.intercept
                        + c.active.iter().map(|&(j, b)| b * x[l][j]).sum::<f64>()
                        + c.residual_sd * normal(&mut rng)
                }
            };
            let (quad_left, quad_right, cubic_left, cubic_right) = match config.curvature {
                CurvatureSpec::Zero => (0.0, 0.0, 0.0, 0.0),
                CurvatureSpec::AtBound { opposing: true } => (k / 2.0, -k / 2.0, 0.0, 0.0),
                CurvatureSpec::AtBound { opposing: false } => {
                    let sl = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let sr = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    (sl * k / 2.0, sr * k / 2.0, 0.0, 0.0)
                }
                CurvatureSpec::Uniform => (
                    rng.random_range(-1.0..=1.0) * k / 2.0,
                    rng.random_range(-1.0..=1.0) * k / 2.0,
                    0.0,
                    0.0,
                ),
                CurvatureSpec::Polynomial {
                    left_quadratic,
                    right_quadratic,
                    left_cubic,
                    right_cubic,
                } => (left_quadratic, right_quadratic, left_cubic, right_cubic),
            };
            Profile {
                level,
                gamma,
                slope_left,
                slope_right,
                quad_left,
                quad_right,
                cubic_left,
                cubic_right,
            }
        })
        .collect()
}

fn draw_covariates(config: &SynthConfig) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let GammaSpec::Covariates(c) = &config.gamma else {
        return None;
    };
    let x = (0..config.n_localities)
        .map(|l| {
            let mut rng = stream_rng(config.seed, COVARIATES, 0, l as u64);
            (0..c.n_covariates).map(|_| normal(&mut rng)).collect()
        })
        .collect();
    let mut beta = vec![0.0; c.n_covariates];
    for &(j, b) in &c.active {
        beta[j] += b;
    }
    Some((x, beta))
}

fn populations(config: &SynthConfig, l: usize) -> Vec<f64> {
    let mut rng = stream_rng(config.seed, POP, 0, l as u64);
    config
        .ages()
        .map(|_| rng.random_range(config.population_min..=config.population_max))
        .collect()
}

/// Naive two-pass `1 - Var_w(g) / Var_w(f)`, `None` when `Var_w(f)` is zero.
pub fn oracle_phi(truth: &SynthTruth, weights: Option<&[f64]>) -> Option<f64> {
    let ones = vec![1.0; truth.f0.len()];
    let w = weights.unwrap_or(&ones);
    let total: f64 = w.iter().sum();
    let var = |v: &[f64]| {
        let mut mean = 0.0;
        for i in 0..v.len() {
            mean += w[i] * v[i];
        }
        mean /= total;
        let mut ss = 0.0;
        for i in 0..v.len() {
            ss += w[i] * (v[i] - mean) * (v[i] - mean);
        }
        ss / total
    };
    let pre = var(&truth.f0);
    if pre == 0.0 {
        return None;
    }
    Some(1.0 - var(&truth.g0) / pre)
}

/// Truth only; no noise is drawn.
pub fn generate_truth(config: &SynthConfig) -> Result<(SynthTruth, Option<CovariateTable>)> {
    config.validate()?;
    let cov = draw_covariates(config);
    let x = cov.as_ref().map(|c| c.0.clone()).unwrap_or_default();
    let profiles = draw_profiles(config, &x);
    let localities: Vec<String> = (0..config.n_localities)
        .map(SynthConfig::locality_id)
        .collect();
    let population: Vec<f64> = (0..config.n_localities)
        .map(|l| populations(config, l).iter().sum())
        .collect();
    let mut truth = SynthTruth {
        localities: localities.clone(),
        gamma: profiles.iter().map(|p| p.gamma).collect(),
        f0: profiles.iter().map(|p| p.level).collect(),
        g0: profiles.iter().map(|p| p.level + p.gamma).collect(),
        population,
        profiles,
        phi: None,
        covariate_coefficients: cov.as_ref().map(|c| c.1.clone()),
        policy_jump: config.policy.as_ref().map(|p| p.jump),
    };
    truth.phi = oracle_phi(&truth, Some(&truth.population));
    let table = cov.map(|(rows, _)| {
        let p = rows.first().map_or(0, Vec::len);
        CovariateTable {
            localities,
            names: (0..p).map(|j| format!("x{j}")).collect(),
            rows,
        }
    });
    Ok((truth, table))
}

/// Replication 0 of [`generate_replication`].
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    generate_replication(config, 0)
}

/// Fixed truth, fresh noise per `replication`.
pub fn generate_replication(config: &SynthConfig, replication: u64) -> Result<SynthData> {
    let (truth, covariates) = generate_truth(config)?;
    let ages: Vec<i32> = config.ages().collect();
    let cells: Vec<OutcomeCell> = (0..config.n_localities)
        .into_par_iter()
        .flat_map_iter(|l| {
            let mut rng = stream_rng(config.seed, NOISE, replication, l as u64);
            let pops = populations(config, l);
            let profile = truth.profiles[l];
            let id = truth.localities[l].clone();
            let mut out = Vec::with_capacity(ages.len() * config.periods.len());
            for period in &config.periods {
                let policy = config
                    .policy
                    .as_ref()
                    .filter(|p| p.analysis_periods.contains(period));
                for (i, &age) in ages.iter().enumerate() {
                    let x = f64::from(age) - config.cutoff;
                    let mut mean = profile.value(x);
                    if let Some(p) = policy {
                        mean += p.slope * x + p.quadratic * x * x;
                        if x > 0.0 {
                            mean += p.jump;
                        }
                    }
                    let variance = config.noise_sd * config.noise_sd / pops[i];
                    let z = normal(&mut rng);
                    out.push(OutcomeCell {
                        locality_id: id.clone(),
                        age,
                        period: period.clone(),
                        outcome: SYNTH_OUTCOME.into(),
                        value: mean + variance.sqrt() * z,
                        population: pops[i],
                        value_variance: Some(variance),
                    });
                }
            }
            out
        })
        .collect();
    let meta: BTreeMap<String, LocalityMeta> = truth
        .localities
        .iter()
        .enumerate()
        .map(|(l, id)| {
            let region = ["Northeast", "Midwest", "South", "West"][l % 4];
            (
                id.clone(),
                LocalityMeta {
                    name: format!("Locality {l}"),
                    state: format!("S{:02}", l % 10),
                    census_region: region.into(),
                    census_division: format!("{region}-{}", l % 2),
                },
            )
        })
        .collect();
    Ok(SynthData {
        panel: LocalityPanel::from_parts(cells, meta)?,
        truth,
        covariates,
    })
}

/// Estimator under study in [`coverage_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// Honest interval with `K = k_true`.
    HonestFixed,
    /// Honest interval with the pilot `K`.
    HonestPilot {
        left_window_width: Option<u32>,
    },
    /// Wald interval around the local linear estimate, bias ignored.
    Conventional,
    Parametric {
        order: usize,
        cluster_on_age: bool,
    },
    /// Difference-in-discontinuities against the non-policy periods; the
    /// truth is the policy jump.
    DiffInDisc {
        pilot: bool,
        left_window_width: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStudyConfig {
    pub synth: SynthConfig,
    pub estimator: EstimatorSpec,
    pub bandwidth: u32,
    pub donut: BTreeSet<i32>,
    pub bound_scale: f64,
    pub level: f64,
    pub replications: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub estimator: EstimatorSpec,
    pub replications: u64,
    pub level: f64,
    /// Share of all `(replication, locality)` intervals covering the truth.
    pub coverage: f64,
    pub per_locality_coverage: Vec<f64>,
    pub min_locality_coverage: f64,
    pub mean_ci_length: f64,
    pub mean_abs_error: f64,
    pub failures: u64,
}

fn coverage_for_replication(
    cfg: &CoverageStudyConfig,
    truth_targets: &[f64],
    rep: u64,
) -> Result<Vec<Option<(bool, f64, f64)>>> {
    let data = generate_replication(&cfg.synth, rep)?;
    let window = crate::panel::AgeWindow {
        cutoff: cfg.synth.cutoff,
        bandwidth: cfg.bandwidth,
        donut: cfg.donut.clone(),
    };
    let rd = HonestRdConfig {
        window: window.clone(),
        curvature_bound: cfg.synth.k_true,
        bound_scale: cfg.bound_scale,
        confidence_level: cfg.level,
    };
    let all_periods: BTreeSet<String> = cfg.synth.periods.iter().cloned().collect();
    Ok(data
        .truth
        .localities
        .iter()
        .enumerate()
        .map(|(l, id)| {
            let truth = truth_targets[l];
            let res = match &cfg.estimator {
                EstimatorSpec::DiffInDisc {
                    pilot,
                    left_window_width,
                } => {
                    let analysis = cfg
                        .synth
                        .policy
                        .as_ref()
                        .map(|p| p.analysis_periods.clone())
                        .unwrap_or_default();
                    let baseline: BTreeSet<String> =
                        all_periods.difference(&analysis).cloned().collect();
                    let choice = if *pilot {
                        CurvatureChoice::Pilot {
                            left_window_width: *left_window_width,
                        }
                    } else {
                        CurvatureChoice::Fixed
                    };
                    diff_in_disc(
                        &data.panel,
                        id,
                        SYNTH_OUTCOME,
                        &baseline,
                        &analysis,
                        &DiffInDiscConfig {
                            rd: rd.clone(),
                            curvature: choice,
                        },
                    )
                    .map(|d| (d.estimate.ci_low, d.estimate.ci_high, d.estimate.gamma))
                }
                spec => {
                    let separate = matches!(spec, EstimatorSpec::Parametric { .. });
                    build_full_series(
                        &data.panel,
                        id,
                        SYNTH_OUTCOME,
                        &window,
                        &SeriesFilter {
                            periods: None,
                            separate_periods: separate,
                        },
                    )
                    .and_then(|s| match spec {
                        EstimatorSpec::HonestFixed => {
                            estimate_rd_with(&s, &rd, CurvatureChoice::Fixed)
                                .map(|(e, _)| (e.ci_low, e.ci_high, e.gamma))
                        }
                        EstimatorSpec::HonestPilot { left_window_width } => estimate_rd_with(
                            &s,
                            &rd,
                            CurvatureChoice::Pilot {
                                left_window_width: *left_window_width,
                            },
                        )
                        .map(|(e, _)| (e.ci_low, e.ci_high, e.gamma)),
                        EstimatorSpec::Conventional => {
                            estimate_rd_with(&s, &rd, CurvatureChoice::Fixed).map(|(e, _)| {
                                let (lo, hi) = e.conventional_ci();
                                (lo, hi, e.gamma)
                            })
                        }
                        EstimatorSpec::Parametric {
                            order,
                            cluster_on_age,
                        } => {
                            let mode = if *cluster_on_age {
                                SeMode::ClusterOnAge
                            } else {
                                SeMode::Robust
                            };
                            estimate_rd_parametric(&s, *order, mode, cfg.level)
                                .map(|e| (e.ci_low, e.ci_high, e.gamma))
                        }
                        EstimatorSpec::DiffInDisc { .. } => unreachable!(),
                    })
                }
            };
            res.ok()
                .map(|(lo, hi, g)| (lo <= truth && truth <= hi, hi - lo, (g - truth).abs()))
        })
        .collect())
}

/// Replications run in parallel; the report does not depend on thread count.
pub fn coverage_study(cfg: &CoverageStudyConfig) -> Result<CoverageReport> {
    if cfg.replications < 100 {
        return Err(Error::Config(format!(
            "coverage studies need at least 100 replications, got {}",
            cfg.replications
        )));
    }
    let (truth, _) = generate_truth(&cfg.synth)?;
    let targets: Vec<f64> = match cfg.estimator {
        EstimatorSpec::DiffInDisc { .. } => {
            let jump = truth
                .policy_jump
                .ok_or_else(|| Error::Config("diff-in-disc study needs a policy change".into()))?;
            vec![jump; truth.localities.len()]
        }
        _ => truth.gamma.clone(),
    };
    let per_rep: Vec<Vec<Option<(bool, f64, f64)>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| coverage_for_replication(cfg, &targets, r))
        .collect::<Result<_>>()?;

    let l = targets.len();
    let mut hits = vec![0u64; l];
    let mut valid = vec![0u64; l];
    let mut length = 0.0;
    let mut abs_err = 0.0;
    let mut failures = 0;
    for rep in &per_rep {
        for (i, r) in rep.iter().enumerate() {
            match r {
                Some((cov, len, err)) => {
                    valid[i] += 1;
                    hits[i] += u64::from(*cov);
                    length += len;
                    abs_err += err;
                }
                None => failures += 1,
            }
        }
    }
    let n_valid: u64 = valid.iter().sum();
    let per_locality: Vec<f64> = hits
        .iter()
        .zip(&valid)
        .map(|(&h, &v)| if v == 0 { 0.0 } else { h as f64 / v as f64 })
        .collect();
    let denom = n_valid.max(1) as f64;
    Ok(CoverageReport {
        estimator: cfg.estimator.clone(),
        replications: cfg.replications,
        level: cfg.level,
        coverage: hits.iter().sum::<u64>() as f64 / denom,
        min_locality_coverage: per_locality.iter().copied().fold(f64::INFINITY, f64::min),
        per_locality_coverage: per_locality,
        mean_ci_length: length / denom,
        mean_abs_error: abs_err / denom,
        failures,
    })
}
