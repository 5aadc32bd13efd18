//! Fuzzy scaling, difference-in-discontinuities, and the
//! Kitagawa-Oaxaca-Blinder decomposition of a change in mean effects.
//!
//! `beta = gamma / gamma_h` rescales an outcome discontinuity by the coverage
//! discontinuity. It is a per-newly-insured scaling, not a causal effect of
//! insurance: nothing here imposes an exclusion restriction.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::honest_rd::{
    estimate_rd_with, CurvatureBound, CurvatureChoice, HonestRdConfig, RdEstimate,
};
use crate::moments::{weighted_covariance, weighted_mean};
use crate::panel::{build_full_series, AgeSeries, LocalityPanel, SeriesFilter, SeriesPoint};
use crate::scalar::Real;

pub const DEFAULT_WEAK_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Serialize)]
pub struct FuzzyOptions<T> {
    /// `|gamma_h|` below this flags the first stage as weak.
    pub weak_threshold: T,
    /// Covariance between the two discontinuity estimates (zero when they
    /// come from independent samples).
    pub covariance: T,
}

impl<T: Real> Default for FuzzyOptions<T> {
    fn default() -> Self {
        Self {
            weak_threshold: T::lit(DEFAULT_WEAK_THRESHOLD),
            covariance: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledEstimate<T> {
    pub locality_id: String,
    /// `None` when the first stage is weak.
    pub beta: Option<T>,
    pub se: Option<T>,
    pub gamma: T,
    pub gamma_se: T,
    pub first_stage: T,
    pub first_stage_se: T,
    pub weak_flag: bool,
}

/// Ratio and its delta-method standard error
/// `sqrt(se_g^2 + beta^2 se_h^2 - 2 beta cov) / |gamma_h|`.
pub fn ratio_with_se<T: Real>(gamma: T, se_g: T, gamma_h: T, se_h: T, cov: T) -> (T, T) {
    let beta = gamma / gamma_h;
    let two = T::lit(2.0);
    let var = (se_g * se_g + beta * beta * se_h * se_h - two * beta * cov).max(T::zero());
    (beta, var.sqrt() / gamma_h.abs())
}

pub fn fuzzy_scale<T: Real>(
    gamma: &RdEstimate<T>,
    gamma_h: &RdEstimate<T>,
    opts: &FuzzyOptions<T>,
) -> Result<ScaledEstimate<T>> {
    if gamma.locality_id != gamma_h.locality_id {
        return Err(Error::Alignment {
            context: "outcome and first-stage estimates refer to different localities".into(),
            ids: vec![gamma.locality_id.clone(), gamma_h.locality_id.clone()],
        });
    }
    if gamma_h.gamma == T::zero() {
        return Err(Error::ZeroFirstStage {
            locality: gamma.locality_id.clone(),
        });
    }
    let weak = gamma_h.gamma.abs() < opts.weak_threshold;
    let (beta, se) = ratio_with_se(
        gamma.gamma,
        gamma.se,
        gamma_h.gamma,
        gamma_h.se,
        opts.covariance,
    );
    Ok(ScaledEstimate {
        locality_id: gamma.locality_id.clone(),
        beta: (!weak).then_some(beta),
        se: (!weak).then_some(se),
        gamma: gamma.gamma,
        gamma_se: gamma.se,
        first_stage: gamma_h.gamma,
        first_stage_se: gamma_h.se,
        weak_flag: weak,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffInDiscConfig<T> {
    pub rd: HonestRdConfig<T>,
    pub curvature: CurvatureChoice,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffInDisc<T> {
    pub estimate: RdEstimate<T>,
    pub pilot: Option<CurvatureBound<T>>,
}

/// Per-age difference between the analysis-period and baseline-period means.
pub fn differenced_series(
    panel: &LocalityPanel,
    locality: &str,
    outcome: &str,
    baseline: &BTreeSet<String>,
    analysis: &BTreeSet<String>,
    rd: &HonestRdConfig<f64>,
) -> Result<AgeSeries<f64>> {
    if let Some(p) = baseline.intersection(analysis).next() {
        return Err(Error::Config(format!(
            "period `{p}` is in both the baseline and analysis sets"
        )));
    }
    let base = build_full_series(
        panel,
        locality,
        outcome,
        &rd.window,
        &SeriesFilter {
            periods: Some(baseline),
            separate_periods: false,
        },
    )?;
    let ana = build_full_series(
        panel,
        locality,
        outcome,
        &rd.window,
        &SeriesFilter {
            periods: Some(analysis),
            separate_periods: false,
        },
    )?;
    let base_by_age: BTreeMap<i32, &SeriesPoint<f64>> =
        base.points.iter().map(|p| (p.age, p)).collect();
    let missing: Vec<i32> = ana
        .points
        .iter()
        .filter(|p| !base_by_age.contains_key(&p.age))
        .map(|p| p.age)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingBaseline { ages: missing });
    }
    Ok(AgeSeries::new(
        ana.points
            .iter()
            .map(|a| {
                let b = base_by_age[&a.age];
                SeriesPoint {
                    age: a.age,
                    offset: a.offset,
                    value: a.value - b.value,
                    weight: a.weight,
                    variance: a.variance.zip(b.variance).map(|(va, vb)| va + vb),
                    period: String::new(),
                }
            })
            .collect(),
    ))
}

/// Honest RD on the baseline-differenced series, with `K` re-selected on it.
pub fn diff_in_disc(
    panel: &LocalityPanel,
    locality: &str,
    outcome: &str,
    baseline: &BTreeSet<String>,
    analysis: &BTreeSet<String>,
    config: &DiffInDiscConfig<f64>,
) -> Result<DiffInDisc<f64>> {
    let delta = differenced_series(panel, locality, outcome, baseline, analysis, &config.rd)?;
    let (estimate, pilot) = estimate_rd_with(&delta, &config.rd, config.curvature)?;
    Ok(DiffInDisc {
        estimate: estimate.labelled(locality, outcome),
        pilot,
    })
}

/// Per-locality inputs for one period of the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodInputs<T> {
    pub localities: Vec<String>,
    pub beta: Vec<T>,
    pub gamma_h: Vec<T>,
    pub weights: Vec<T>,
    /// Per-capita effects when they are not the exact product `beta * gamma_h`
    /// (e.g. shrunk forecasts).
    pub gamma: Option<Vec<T>>,
}

impl<T: Real> PeriodInputs<T> {
    fn validate(&self, which: &str) -> Result<()> {
        let l = self.localities.len();
        let ok = self.beta.len() == l
            && self.gamma_h.len() == l
            && self.weights.len() == l
            && self.gamma.as_ref().is_none_or(|g| g.len() == l);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{which}: vectors must all have length {l}"
            )));
        }
        if l == 0 {
            return Err(Error::InsufficientLocalities { needed: 1, got: 0 });
        }
        if self.weights.iter().any(|&w| !(w >= T::zero()))
            || !self.weights.iter().any(|&w| w > T::zero())
        {
            return Err(Error::InvalidArgument(format!(
                "{which}: weights must be nonnegative, not all zero"
            )));
        }
        Ok(())
    }

    fn moments(&self) -> PeriodMoments<T> {
        let w = &self.weights;
        let product: Vec<T> = self
            .beta
            .iter()
            .zip(&self.gamma_h)
            .map(|(&b, &h)| b * h)
            .collect();
        PeriodMoments {
            mean_beta: weighted_mean(&self.beta, w),
            mean_gamma_h: weighted_mean(&self.gamma_h, w),
            cov_beta_gamma_h: weighted_covariance(&self.beta, &self.gamma_h, w),
            mean_product: weighted_mean(&product, w),
            mean_gamma: weighted_mean(self.gamma.as_deref().unwrap_or(&product), w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodMoments<T> {
    pub mean_beta: T,
    pub mean_gamma_h: T,
    pub cov_beta_gamma_h: T,
    pub mean_product: T,
    /// `E(gamma)`; equals `mean_product` on exact inputs.
    pub mean_gamma: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionResult<T> {
    /// `(E(gamma_post) - E(gamma_pre)) / E(gamma_pre)`.
    pub eta: T,
    /// Change in the per-newly-insured effect at post-period coverage.
    pub eta1: T,
    /// Change in coverage at the pre-period per-newly-insured effect.
    pub eta2: T,
    /// Change in covariance, plus `residual`.
    pub eta3: T,
    /// Part of `eta3` not explained by the covariance change; nonzero only
    /// when `gamma` is not the exact product.
    pub residual: T,
    pub pre: PeriodMoments<T>,
    pub post: PeriodMoments<T>,
    pub n_localities: usize,
}

impl<T: Real> DecompositionResult<T> {
    /// Components relative to `E(gamma_pre)`; they sum to `eta`.
    pub fn relative(&self) -> [T; 3] {
        let d = self.pre.mean_gamma;
        [self.eta1 / d, self.eta2 / d, self.eta3 / d]
    }
}

fn align<T: Real>(pre: &PeriodInputs<T>, post: &PeriodInputs<T>) -> Result<PeriodInputs<T>> {
    let a: BTreeSet<&String> = pre.localities.iter().collect();
    let b: BTreeSet<&String> = post.localities.iter().collect();
    if a != b || a.len() != pre.localities.len() || b.len() != post.localities.len() {
        let ids = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
        return Err(Error::Alignment {
            context: "pre and post locality sets differ".into(),
            ids,
        });
    }
    let pos: BTreeMap<&String, usize> = post
        .localities
        .iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    let order: Vec<usize> = pre.localities.iter().map(|id| pos[id]).collect();
    let pick = |v: &[T]| order.iter().map(|&i| v[i]).collect::<Vec<T>>();
    Ok(PeriodInputs {
        localities: pre.localities.clone(),
        beta: pick(&post.beta),
        gamma_h: pick(&post.gamma_h),
        weights: pick(&post.weights),
        gamma: post.gamma.as_deref().map(pick),
    })
}

pub fn kob_decompose<T: Real>(
    pre: &PeriodInputs<T>,
    post: &PeriodInputs<T>,
) -> Result<DecompositionResult<T>> {
    pre.validate("pre")?;
    post.validate("post")?;
    let post = align(pre, post)?;
    let m0 = pre.moments();
    let m1 = post.moments();
    let eta1 = (m1.mean_beta - m0.mean_beta) * m1.mean_gamma_h;
    let eta2 = m0.mean_beta * (m1.mean_gamma_h - m0.mean_gamma_h);
    let cov_change = m1.cov_beta_gamma_h - m0.cov_beta_gamma_h;
    let total = m1.mean_gamma - m0.mean_gamma;
    let residual = if pre.gamma.is_none() && post.gamma.is_none() {
        T::zero()
    } else {
        total - (eta1 + eta2 + cov_change)
    };
    let eta3 = cov_change + residual;
    if m0.mean_gamma == T::zero() || !m0.mean_gamma.is_finite() {
        return Err(Error::DegenerateDenominator(format!(
            "pre-period mean effect is {}",
            m0.mean_gamma
        )));
    }
    let eta = total / m0.mean_gamma;
    Ok(DecompositionResult {
        eta,
        eta1,
        eta2,
        eta3,
        residual,
        pre: m0,
        post: m1,
        n_localities: pre.localities.len(),
    })
}

/// Differences in the relative components between two groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentDifference<T> {
    pub d_eta1: T,
    pub d_eta2: T,
    pub d_eta3: T,
}

impl<T: Real> ComponentDifference<T> {
    pub fn between(minuend: &DecompositionResult<T>, subtrahend: &DecompositionResult<T>) -> Self {
        let a = minuend.relative();
        let b = subtrahend.relative();
        Self {
            d_eta1: a[0] - b[0],
            d_eta2: a[1] - b[1],
            d_eta3: a[2] - b[2],
        }
    }

    pub fn total(&self) -> T {
        self.d_eta1 + self.d_eta2 + self.d_eta3
    }

    /// Share of the total attributed to each component.
    pub fn shares(&self) -> [T; 3] {
        let t = self.total();
        [self.d_eta1 / t, self.d_eta2 / t, self.d_eta3 / t]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionDifference<T> {
    pub minuend: String,
    pub subtrahend: String,
    pub d_eta: T,
    pub components: ComponentDifference<T>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionalDecomposition<T> {
    pub regions: BTreeMap<String, DecompositionResult<T>>,
    /// Every other region minus the reference region.
    pub differences: Vec<RegionDifference<T>>,
}

/// Splits both periods by `region_of` (locality -> group) and decomposes each
/// group. Differences are reported against `reference` when it is present.
pub fn decompose_by_region<T: Real>(
    pre: &PeriodInputs<T>,
    post: &PeriodInputs<T>,
    region_of: &BTreeMap<String, String>,
    reference: Option<&str>,
) -> Result<RegionalDecomposition<T>> {
    let subset = |p: &PeriodInputs<T>, region: &str| -> PeriodInputs<T> {
        let idx: Vec<usize> = (0..p.localities.len())
            .filter(|&i| region_of.get(&p.localities[i]).map(String::as_str) == Some(region))
            .collect();
        let pick = |v: &[T]| idx.iter().map(|&i| v[i]).collect::<Vec<T>>();
        PeriodInputs {
            localities: idx.iter().map(|&i| p.localities[i].clone()).collect(),
            beta: pick(&p.beta),
            gamma_h: pick(&p.gamma_h),
            weights: pick(&p.weights),
            gamma: p.gamma.as_deref().map(pick),
        }
    };
    let unknown: Vec<String> = pre
        .localities
        .iter()
        .filter(|id| !region_of.contains_key(*id))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Alignment {
            context: "localities without a region".into(),
            ids: unknown,
        });
    }
    let names: BTreeSet<&String> = pre.localities.iter().map(|id| &region_of[id]).collect();
    let mut regions = BTreeMap::new();
    for r in names {
        regions.insert(r.clone(), kob_decompose(&subset(pre, r), &subset(post, r))?);
    }
    let mut differences = Vec::new();
    if let Some(base) = reference.and_then(|r| regions.get(r).map(|d| (r, d))) {
        for (name, d) in &regions {
            if name != base.0 {
                differences.push(RegionDifference {
                    minuend: name.clone(),
                    subtrahend: base.0.to_string(),
                    d_eta: d.eta - base.1.eta,
                    components: ComponentDifference::between(d, base.1),
                });
            }
        }
    }
    Ok(RegionalDecomposition {
        regions,
        differences,
    })
}
