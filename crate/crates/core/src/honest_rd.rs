//! Donut regression discontinuity with bias-aware ("honest") inference.
//!
//! Each side of the cutoff is fit by population-weighted local linear
//! regression with a uniform kernel and evaluated at offset 0. The estimate
//! is linear in the cell values, `y(0) = sum_i w_i y_i`, with `sum w_i = 1`
//! and `sum w_i x_i = 0`. Under `|f''| <= K` the Taylor remainder obeys
//! `|r(x)| <= K x^2 / 2`, so the extrapolation bias is at most
//! `(K / 2) sum_i |w_i| x_i^2`. Confidence intervals widen the usual
//! interval with a folded-normal critical value at the bias/se ratio.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{sandwich, weighted_lstsq, Matrix};
use crate::panel::{AgeSeries, AgeWindow, SeriesPoint, Side};
use crate::scalar::Real;

/// Multiplier applied to the pilot quadratic coefficient by default.
pub const DEFAULT_BOUND_SCALE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HonestRdConfig<T> {
    pub window: AgeWindow,
    /// Bound `K` on `|f''|`, in outcome units per year squared.
    pub curvature_bound: T,
    pub bound_scale: T,
    pub confidence_level: T,
}

impl<T: Real> Default for HonestRdConfig<T> {
    fn default() -> Self {
        Self {
            window: AgeWindow::default(),
            curvature_bound: T::zero(),
            bound_scale: T::lit(DEFAULT_BOUND_SCALE),
            confidence_level: T::lit(0.95),
        }
    }
}

impl<T: Real> HonestRdConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !(self.curvature_bound >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "curvature bound must be nonnegative, got {}",
                self.curvature_bound
            )));
        }
        if !(self.bound_scale > T::zero()) {
            return Err(Error::InvalidArgument(
                "bound scale must be positive".into(),
            ));
        }
        check_level(self.confidence_level)
    }
}

fn check_level<T: Real>(level: T) -> Result<()> {
    if level > T::zero() && level < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "confidence level must be in (0, 1), got {level}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureBound<T> {
    pub k: T,
    /// Coefficient on `x^2` in the pilot fit (half the second derivative).
    pub quadratic_coef: T,
    pub n_ages: usize,
    /// Set when `K` is zero, so honest intervals collapse to conventional ones.
    pub zero_bound: bool,
}

/// Pilot curvature bound: `bound_scale * |b2|` from a population-weighted
/// quadratic fit of value on offset over the left side. `left_window_width`
/// limits the pilot to offsets in `[-width, 0]`; `None` uses every left point.
pub fn select_curvature_bound<T: Real>(
    series: &AgeSeries<T>,
    left_window_width: Option<u32>,
    bound_scale: T,
) -> Result<CurvatureBound<T>> {
    if !(bound_scale > T::zero()) {
        return Err(Error::InvalidArgument(
            "bound scale must be positive".into(),
        ));
    }
    let pts: Vec<&SeriesPoint<T>> = series
        .side(Side::Left)
        .filter(|p| p.weight > T::zero())
        .filter(|p| left_window_width.is_none_or(|w| p.offset >= -T::from_u32(w).expect("width")))
        .collect();
    let n_ages = pts
        .iter()
        .map(|p| p.age)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    if n_ages < 3 {
        return Err(Error::InsufficientSupport(format!(
            "curvature pilot needs 3 distinct left ages, found {n_ages}"
        )));
    }
    let x = Matrix::from_rows(
        &pts.iter()
            .map(|p| vec![T::one(), p.offset, p.offset * p.offset])
            .collect::<Vec<_>>(),
    );
    let y: Vec<T> = pts.iter().map(|p| p.value).collect();
    let w: Vec<T> = pts.iter().map(|p| p.weight).collect();
    let fit = weighted_lstsq(&x, &y, &w)
        .map_err(|_| Error::singular("curvature pilot design is collinear"))?;

    let mut b2 = fit.coef[2];
    let max_x2 = pts
        .iter()
        .map(|p| p.offset * p.offset)
        .fold(T::zero(), T::max);
    let max_y = y.iter().map(|v| v.abs()).fold(T::zero(), T::max);
    if b2.abs() * max_x2 <= T::rank_tol() * max_y {
        b2 = T::zero();
    }
    let k = bound_scale * b2.abs();
    Ok(CurvatureBound {
        k,
        quadratic_coef: b2,
        n_ages,
        zero_bound: k == T::zero(),
    })
}

/// One side's boundary fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideFit<T> {
    pub side: Side,
    /// Fitted value at offset 0: `y(65-)` on the left, `y(65+)` on the right.
    pub intercept: T,
    pub slope: T,
    pub offsets: Vec<T>,
    /// Linear weights with `intercept = sum w_i y_i`.
    pub weights: Vec<T>,
    pub se: T,
    pub bias_bound: T,
    pub n_cells: usize,
}

/// Population-weighted local linear fit on one side, evaluated at the cutoff.
///
/// `series` is expected to have donut ages removed already; only points with
/// `|offset| <= bandwidth` on `side` are used. Cell variances come from the
/// series when every point carries one, otherwise from the fit residuals:
/// `v_i = s2 * P / (p_i * (n - 2))` with `s2` the weighted residual variance.
pub fn local_linear_boundary<T: Real>(
    series: &AgeSeries<T>,
    side: Side,
    bandwidth: u32,
) -> Result<SideFit<T>> {
    let bw = T::from_u32(bandwidth).expect("bandwidth");
    let pts: Vec<&SeriesPoint<T>> = series
        .side(side)
        .filter(|p| p.offset.abs() <= bw && p.weight > T::zero())
        .collect();
    let distinct = pts
        .iter()
        .map(|p| p.age)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    if distinct < 2 {
        return Err(Error::singular(format!(
            "{side:?} side has {distinct} distinct offset(s) with positive weight"
        )));
    }

    let total: T = pts.iter().map(|p| p.weight).sum();
    let xbar = pts.iter().map(|p| p.weight * p.offset).sum::<T>() / total;
    let sxx: T = pts
        .iter()
        .map(|p| p.weight * (p.offset - xbar) * (p.offset - xbar))
        .sum();
    if !(sxx > T::zero()) {
        return Err(Error::singular(format!(
            "{side:?} side has no spread in age"
        )));
    }

    let weights: Vec<T> = pts
        .iter()
        .map(|p| p.weight / total - p.weight * xbar * (p.offset - xbar) / sxx)
        .collect();
    let intercept: T = weights.iter().zip(&pts).map(|(&w, p)| w * p.value).sum();
    let slope: T = pts
        .iter()
        .map(|p| p.weight * (p.offset - xbar) * p.value)
        .sum::<T>()
        / sxx;

    let variances: Vec<T> = if pts.iter().all(|p| p.variance.is_some()) {
        pts.iter().map(|p| p.variance.unwrap()).collect()
    } else {
        let s2 = pts
            .iter()
            .map(|p| {
                let e = p.value - intercept - slope * p.offset;
                p.weight * e * e
            })
            .sum::<T>()
            / total;
        let dof = T::of_usize(pts.len().saturating_sub(2).max(1));
        pts.iter().map(|p| s2 * total / (p.weight * dof)).collect()
    };
    let se = weights
        .iter()
        .zip(&variances)
        .map(|(&w, &v)| w * w * v)
        .sum::<T>()
        .sqrt();

    Ok(SideFit {
        side,
        intercept,
        slope,
        offsets: pts.iter().map(|p| p.offset).collect(),
        weights,
        se,
        bias_bound: T::zero(),
        n_cells: pts.len(),
    })
}

/// Worst-case extrapolation bias `(K / 2) sum_i |w_i| x_i^2`.
pub fn worst_case_bias<T: Real>(fit: &SideFit<T>, k: T) -> Result<T> {
    if !(k >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "curvature bound must be nonnegative, got {k}"
        )));
    }
    let s: T = fit
        .weights
        .iter()
        .zip(&fit.offsets)
        .map(|(&w, &x)| w.abs() * x * x)
        .sum();
    Ok(k * s / T::lit(2.0))
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Critical value `c` solving `Phi(c - t) - Phi(-c - t) = level`, i.e. the
/// `level` quantile of `|N(t, 1)|`.
pub fn folded_normal_cv<T: Real>(t: T, level: T) -> Result<T> {
    check_level(level)?;
    let (t, level) = (t.to_f64_lossy(), level.to_f64_lossy());
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bias/se ratio must be finite and nonnegative, got {t}"
        )));
    }
    let f = |c: f64| std_normal_cdf(c - t) - std_normal_cdf(-c - t) - level;
    let (mut lo, mut hi) = (0.0_f64, t + 1.0);
    while f(hi) < 0.0 {
        hi = t + 2.0 * (hi - t);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    debug_assert!(f(c).abs() < 1e-10);
    Ok(T::lit(c))
}

/// `estimate +/- cv(bias/se) * se`, falling back to `estimate +/- bias` when
/// `se = 0`.
pub fn honest_interval<T: Real>(estimate: T, se: T, bias: T, level: T) -> Result<(T, T)> {
    let half = if se > T::zero() {
        folded_normal_cv(bias / se, level)? * se
    } else {
        bias
    };
    Ok((estimate - half, estimate + half))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMode {
    /// HC1 over cells.
    Robust,
    /// Clustered by age value.
    ClusterOnAge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Honest,
    Parametric { order: usize, se_mode: SeMode },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdEstimate<T> {
    pub locality_id: String,
    pub outcome: String,
    pub gamma: T,
    pub y_minus: T,
    pub y_plus: T,
    pub se: T,
    pub bias_bound: T,
    pub ci_low: T,
    pub ci_high: T,
    pub se_left: T,
    pub se_right: T,
    pub bias_left: T,
    pub bias_right: T,
    pub n_cells_left: usize,
    pub n_cells_right: usize,
    pub k: T,
    pub bandwidth: u32,
    pub level: T,
    pub method: Method,
}

impl<T: Real> RdEstimate<T> {
    pub fn labelled(mut self, locality: impl Into<String>, outcome: impl Into<String>) -> Self {
        self.locality_id = locality.into();
        self.outcome = outcome.into();
        self
    }

    /// Wald interval that ignores the bias bound.
    pub fn conventional_ci(&self) -> (T, T) {
        let z = folded_normal_cv(T::zero(), self.level).expect("validated level");
        (self.gamma - z * self.se, self.gamma + z * self.se)
    }

    pub fn covers(&self, truth: T) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }
}

/// Honest donut RD estimate of the jump at the cutoff.
pub fn estimate_rd<T: Real>(
    series: &AgeSeries<T>,
    config: &HonestRdConfig<T>,
) -> Result<RdEstimate<T>> {
    config.validate()?;
    let bw = config.window.bandwidth;
    let s = series.restrict(bw, &config.window.donut);
    s.check_support("honest rd")?;
    let k = config.curvature_bound;

    let mut left = local_linear_boundary(&s, Side::Left, bw)?;
    let mut right = local_linear_boundary(&s, Side::Right, bw)?;
    left.bias_bound = worst_case_bias(&left, k)?;
    right.bias_bound = worst_case_bias(&right, k)?;

    let gamma = right.intercept - left.intercept;
    let se = (left.se * left.se + right.se * right.se).sqrt();
    let bias_bound = left.bias_bound + right.bias_bound;
    let (ci_low, ci_high) = honest_interval(gamma, se, bias_bound, config.confidence_level)?;
    Ok(RdEstimate {
        locality_id: String::new(),
        outcome: String::new(),
        gamma,
        y_minus: left.intercept,
        y_plus: right.intercept,
        se,
        bias_bound,
        ci_low,
        ci_high,
        se_left: left.se,
        se_right: right.se,
        bias_left: left.bias_bound,
        bias_right: right.bias_bound,
        n_cells_left: left.n_cells,
        n_cells_right: right.n_cells,
        k,
        bandwidth: bw,
        level: config.confidence_level,
        method: Method::Honest,
    })
}

/// Where the curvature bound comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurvatureChoice {
    /// Use `HonestRdConfig::curvature_bound` as given.
    Fixed,
    /// Pilot quadratic on the left side; `None` uses every left age.
    Pilot { left_window_width: Option<u32> },
}

impl Default for CurvatureChoice {
    fn default() -> Self {
        CurvatureChoice::Pilot {
            left_window_width: None,
        }
    }
}

/// Resolves `K` per `choice` on `full_series` (every non-donut age), then runs
/// [`estimate_rd`]. The pilot is returned when one was fit.
pub fn estimate_rd_with<T: Real>(
    full_series: &AgeSeries<T>,
    config: &HonestRdConfig<T>,
    choice: CurvatureChoice,
) -> Result<(RdEstimate<T>, Option<CurvatureBound<T>>)> {
    match choice {
        CurvatureChoice::Pilot { left_window_width } => {
            let donut_free = full_series.without_ages(&config.window.donut);
            let pilot = select_curvature_bound(&donut_free, left_window_width, config.bound_scale)?;
            let cfg = HonestRdConfig {
                curvature_bound: pilot.k,
                ..config.clone()
            };
            Ok((estimate_rd(full_series, &cfg)?, Some(pilot)))
        }
        CurvatureChoice::Fixed => Ok((estimate_rd(full_series, config)?, None)),
    }
}

struct PolySide<T> {
    intercept: T,
    var: T,
    n: usize,
}

fn fit_polynomial_side<T: Real>(
    series: &AgeSeries<T>,
    side: Side,
    order: usize,
    se_mode: SeMode,
) -> Result<PolySide<T>> {
    let pts: Vec<&SeriesPoint<T>> = series.side(side).filter(|p| p.weight > T::zero()).collect();
    let mut ages: Vec<i32> = pts.iter().map(|p| p.age).collect();
    ages.dedup();
    if ages.len() < order + 1 {
        return Err(Error::Rank(format!(
            "order {order} polynomial needs {} distinct ages on the {side:?} side, found {}",
            order + 1,
            ages.len()
        )));
    }
    let x = Matrix::from_rows(
        &pts.iter()
            .map(|p| (0..=order).map(|j| p.offset.powi(j as i32)).collect())
            .collect::<Vec<Vec<T>>>(),
    );
    let y: Vec<T> = pts.iter().map(|p| p.value).collect();
    let w: Vec<T> = pts.iter().map(|p| p.weight).collect();
    let fit = weighted_lstsq(&x, &y, &w).map_err(|e| Error::Singular {
        context: format!("{side:?} polynomial design"),
        dependent: e.dependent.iter().map(|j| format!("x^{j}")).collect(),
    })?;

    let n = pts.len();
    let p = order + 1;
    let (cov, factor) = match se_mode {
        SeMode::Robust => {
            let f = if n > p {
                T::of_usize(n) / T::of_usize(n - p)
            } else {
                T::one()
            };
            (sandwich(&x, &w, &fit, None), f)
        }
        SeMode::ClusterOnAge => {
            let ids: Vec<usize> = pts
                .iter()
                .map(|pt| ages.binary_search(&pt.age).expect("age present"))
                .collect();
            let g = ages.len();
            let f = if g > 1 && n > p {
                T::of_usize(g) / T::of_usize(g - 1) * T::of_usize(n - 1) / T::of_usize(n - p)
            } else {
                T::one()
            };
            (sandwich(&x, &w, &fit, Some(&ids)), f)
        }
    };
    Ok(PolySide {
        intercept: fit.coef[0],
        var: cov[(0, 0)] * factor,
        n,
    })
}

/// Global polynomial RD on each side over every non-donut age in `series`.
/// Conventional normal interval, no bias bound.
pub fn estimate_rd_parametric<T: Real>(
    series: &AgeSeries<T>,
    order: usize,
    se_mode: SeMode,
    level: T,
) -> Result<RdEstimate<T>> {
    check_level(level)?;
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "polynomial order must be 1, 2 or 3, got {order}"
        )));
    }
    let left = fit_polynomial_side(series, Side::Left, order, se_mode)?;
    let right = fit_polynomial_side(series, Side::Right, order, se_mode)?;
    let gamma = right.intercept - left.intercept;
    let se = (left.var + right.var).sqrt();
    let (ci_low, ci_high) = honest_interval(gamma, se, T::zero(), level)?;
    Ok(RdEstimate {
        locality_id: String::new(),
        outcome: String::new(),
        gamma,
        y_minus: left.intercept,
        y_plus: right.intercept,
        se,
        bias_bound: T::zero(),
        ci_low,
        ci_high,
        se_left: left.var.sqrt(),
        se_right: right.var.sqrt(),
        bias_left: T::zero(),
        bias_right: T::zero(),
        n_cells_left: left.n,
        n_cells_right: right.n,
        k: T::zero(),
        bandwidth: 0,
        level,
        method: Method::Parametric { order, se_mode },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::SeriesPoint;

    fn series(points: &[(i32, f64)]) -> AgeSeries<f64> {
        AgeSeries::new(
            points
                .iter()
                .map(|&(age, value)| SeriesPoint {
                    age,
                    offset: f64::from(age) - 65.0,
                    value,
                    weight: 1.0,
                    variance: Some(0.0),
                    period: String::new(),
                })
                .collect(),
        )
    }

    fn from_fn(ages: impl IntoIterator<Item = i32>, f: impl Fn(f64) -> f64) -> AgeSeries<f64> {
        let pts: Vec<(i32, f64)> = ages
            .into_iter()
            .map(|a| (a, f(f64::from(a) - 65.0)))
            .collect();
        series(&pts)
    }

    #[test]
    fn curvature_reads_quadratic_coefficient() {
        let k = select_curvature_bound(&from_fn(60..=64, |x| x * x), None, 4.0).unwrap();
        assert!((k.k - 4.0).abs() < 1e-10);
        let k = select_curvature_bound(&from_fn(60..=64, |x| 3.0 * x * x + x), None, 4.0).unwrap();
        assert!((k.k - 12.0).abs() < 1e-10);
    }

    #[test]
    fn constant_pilot_gives_zero_bound() {
        let k = select_curvature_bound(&from_fn(60..=64, |_| 7.0), None, 4.0).unwrap();
        assert_eq!(k.k, 0.0);
        assert!(k.zero_bound);
    }

    #[test]
    fn pilot_needs_three_ages() {
        let err = select_curvature_bound(&from_fn([63, 64, 66, 67], |x| x), None, 4.0).unwrap_err();
        assert!(matches!(err, Error::InsufficientSupport(_)));
    }

    #[test]
    fn pilot_window_limits_ages() {
        // quadratic only far from the cutoff, linear near it
        let s = from_fn(50..=64, |x| if x < -5.0 { (x + 5.0).powi(2) } else { x });
        let near = select_curvature_bound(&s, Some(5), 4.0).unwrap();
        assert_eq!(near.k, 0.0);
        let full = select_curvature_bound(&s, None, 4.0).unwrap();
        assert!(full.k > 0.0);
    }

    #[test]
    fn constant_side_fit() {
        let fit = local_linear_boundary(&from_fn(60..=64, |_| 5.0), Side::Left, 5).unwrap();
        assert!((fit.intercept - 5.0).abs() < 1e-12);
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn linear_side_fit_weights_match_closed_form() {
        let fit = local_linear_boundary(&from_fn(60..=64, |x| x + 10.0), Side::Left, 5).unwrap();
        assert!((fit.intercept - 10.0).abs() < 1e-12);
        assert!((fit.slope - 1.0).abs() < 1e-12);
        // w_i = 1/5 + 3 (x_i - xbar) / 10 with xbar = -3
        for (w, x) in fit.weights.iter().zip(&fit.offsets) {
            let expect = 0.2 + 3.0 * (x + 3.0) / 10.0;
            assert!((w - expect).abs() < 1e-12);
        }
        let expected = [-0.4, -0.1, 0.2, 0.5, 0.8];
        for (w, e) in fit.weights.iter().zip(expected) {
            assert!((w - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_offset_is_singular() {
        let err = local_linear_boundary(&from_fn([64, 66, 67], |x| x), Side::Left, 5).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn bias_bound_hand_value() {
        let fit = local_linear_boundary(&from_fn(60..=64, |x| x), Side::Left, 5).unwrap();
        // (1/2)(0.4*25 + 0.1*16 + 0.2*9 + 0.5*4 + 0.8*1)
        assert!((worst_case_bias(&fit, 1.0).unwrap() - 8.1).abs() < 1e-12);
        assert_eq!(worst_case_bias(&fit, 0.0).unwrap(), 0.0);
        let b1 = worst_case_bias(&fit, 1.7).unwrap();
        let b2 = worst_case_bias(&fit, 3.4).unwrap();
        assert_eq!(b2, 2.0 * b1);
        assert!(worst_case_bias(&fit, -1.0).is_err());
    }

    #[test]
    fn folded_normal_reference_values() {
        let c0: f64 = folded_normal_cv(0.0, 0.95).unwrap();
        assert!((c0 - 1.959_963_984_540_054).abs() < 1e-9);
        let c3: f64 = folded_normal_cv(3.0, 0.95).unwrap();
        assert!((c3 - 4.64485).abs() < 1e-3);
        let c1: f64 = folded_normal_cv(1.0, 0.95).unwrap();
        assert!(c0 < c1 && c1 < c3);
        assert!(folded_normal_cv(-0.1, 0.95).is_err());
        assert!(folded_normal_cv(0.0, 1.0).is_err());
    }

    #[test]
    fn folded_normal_residual_is_tiny() {
        for &t in &[0.0, 0.3, 1.0, 2.5, 7.0, 40.0] {
            for &lvl in &[0.5, 0.9, 0.95, 0.99] {
                let c: f64 = folded_normal_cv(t, lvl).unwrap();
                let r = std_normal_cdf(c - t) - std_normal_cdf(-c - t) - lvl;
                assert!(r.abs() < 1e-10, "t={t} level={lvl} r={r}");
            }
        }
    }

    #[test]
    fn step_function_gives_degenerate_interval() {
        let s = from_fn((60..=70).filter(|&a| a != 65), |x| {
            if x > 0.0 {
                3.0
            } else {
                5.0
            }
        });
        let est = estimate_rd(&s, &HonestRdConfig::default()).unwrap();
        assert!((est.gamma + 2.0).abs() < 1e-12);
        assert!((est.ci_low + 2.0).abs() < 1e-12 && (est.ci_high + 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_linear_sides() {
        let s = from_fn((60..=70).filter(|&a| a != 65), |x| {
            if x > 0.0 {
                x + 7.0
            } else {
                x + 10.0
            }
        });
        let est = estimate_rd(&s, &HonestRdConfig::default()).unwrap();
        assert!((est.gamma + 3.0).abs() < 1e-12);
        assert_eq!(est.gamma, est.y_plus - est.y_minus);
    }

    #[test]
    fn zero_se_positive_bias_gives_pure_bias_interval() {
        let s = from_fn((60..=70).filter(|&a| a != 65), |x| {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        });
        let cfg = HonestRdConfig {
            curvature_bound: 1.0,
            ..HonestRdConfig::default()
        };
        let est = estimate_rd(&s, &cfg).unwrap();
        assert_eq!(est.se, 0.0);
        assert!((est.bias_bound - 16.2).abs() < 1e-10);
        assert!((est.ci_high - est.gamma - est.bias_bound).abs() < 1e-12);
    }

    #[test]
    fn cubic_truth_recovered_by_cubic_fit() {
        let f = |x: f64| 2.0 + 0.5 * x - 0.1 * x * x + 0.01 * x.powi(3);
        let s = from_fn((55..=75).filter(|&a| a != 65), |x| {
            f(x) + if x > 0.0 { -4.0 } else { 0.0 }
        });
        let est = estimate_rd_parametric(&s, 3, SeMode::Robust, 0.95).unwrap();
        assert!((est.gamma + 4.0).abs() < 1e-9);
    }

    #[test]
    fn parametric_order_too_high() {
        let s = from_fn([62, 63, 64, 66, 67, 68], |x| x);
        let err = estimate_rd_parametric(&s, 3, SeMode::Robust, 0.95).unwrap_err();
        assert!(matches!(err, Error::Rank(_)));
    }

    #[test]
    fn single_precision_instance() {
        let s: AgeSeries<f32> = from_fn((60..=70).filter(|&a| a != 65), |x| {
            if x > 0.0 {
                x + 7.0
            } else {
                x + 10.0
            }
        })
        .cast();
        let est = estimate_rd(&s, &HonestRdConfig::<f32>::default()).unwrap();
        assert!((est.gamma + 3.0).abs() < 1e-4);
    }
}
