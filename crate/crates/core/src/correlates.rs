//! Relating locality effects to area characteristics.
//!
//! Weighted OLS (bivariate and multivariate, optionally absorbing group fixed
//! effects) with HC1 robust standard errors, and a cross-validated Lasso
//! solved by coordinate descent followed by post-Lasso OLS.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{sandwich, weighted_lstsq, Matrix};
use crate::moments::{weighted_mean, weighted_variance};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateMatrix<T> {
    pub localities: Vec<String>,
    pub names: Vec<String>,
    /// One vector per covariate, each of length `L`.
    pub columns: Vec<Vec<T>>,
    pub weights: Vec<T>,
    pub standardized: bool,
}

impl<T: Real> CovariateMatrix<T> {
    pub fn new(
        localities: Vec<String>,
        names: Vec<String>,
        columns: Vec<Vec<T>>,
        weights: Vec<T>,
    ) -> Result<Self> {
        let l = localities.len();
        if names.len() != columns.len() {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if weights.len() != l || columns.iter().any(|c| c.len() != l) {
            return Err(Error::InvalidArgument(format!(
                "every column and the weights must have {l} entries"
            )));
        }
        if weights.iter().any(|&w| !(w >= T::zero())) || !weights.iter().any(|&w| w > T::zero()) {
            return Err(Error::InvalidArgument(
                "weights must be nonnegative and not all zero".into(),
            ));
        }
        for (n, c) in names.iter().zip(&columns) {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "column `{n}` has missing values"
                )));
            }
        }
        Ok(Self {
            localities,
            names,
            columns,
            weights,
            standardized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.localities.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    /// Keeps only the columns flagged in `keep`.
    pub fn select(&self, keep: &[bool]) -> Self {
        let mut out = self.clone();
        out.names = self
            .names
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(n, _)| n.clone())
            .collect();
        out.columns = self
            .columns
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(c, _)| c.clone())
            .collect();
        out
    }
}

/// Weighted z-scores (population-variance convention). With
/// `use_weights = false` the moments are unweighted.
pub fn standardize<T: Real>(
    x: &CovariateMatrix<T>,
    use_weights: bool,
) -> Result<CovariateMatrix<T>> {
    let w = if use_weights {
        x.weights.clone()
    } else {
        vec![T::one(); x.n()]
    };
    let mut out = x.clone();
    for (name, col) in x.names.iter().zip(out.columns.iter_mut()) {
        let m = weighted_mean(col, &w);
        let v = weighted_variance(col, &w);
        let scale = col.iter().map(|c| c.abs()).fold(T::zero(), T::max);
        if !(v > T::rank_tol() * T::rank_tol() * scale * scale) {
            return Err(Error::InvalidArgument(format!(
                "covariate `{name}` has zero variance"
            )));
        }
        let sd = v.sqrt();
        for c in col.iter_mut() {
            *c = (*c - m) / sd;
        }
    }
    out.standardized = true;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Bivariate,
    Multivariate,
    Lasso,
    PostLasso,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bivariate => "bivariate",
            ModelKind::Multivariate => "multivariate",
            ModelKind::Lasso => "lasso",
            ModelKind::PostLasso => "post-lasso",
        }
    }
}

/// Group fixed effects absorbed by within-group weighted demeaning.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FixedEffects {
    #[default]
    None,
    Groups {
        /// e.g. `region`, `division`, `state`.
        label: String,
        /// Group of each locality, aligned with the data.
        groups: Vec<String>,
    },
}

impl FixedEffects {
    pub fn label(&self) -> &str {
        match self {
            FixedEffects::None => "none",
            FixedEffects::Groups { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult<T> {
    pub model: ModelKind,
    pub names: Vec<String>,
    pub coefficients: Vec<T>,
    pub intercept: T,
    /// HC1 robust standard errors; zeros for penalised fits, which carry none.
    pub se: Vec<T>,
    pub selected: Vec<bool>,
    pub lambda: Option<T>,
    pub scale_divisor: Option<T>,
    pub r2: Option<T>,
    pub fe_mode: String,
    pub n: usize,
}

fn r_squared<T: Real>(y: &[T], resid: &[T], w: &[T]) -> T {
    let total: T = w.iter().copied().sum();
    let ss_res = resid.iter().zip(w).map(|(&e, &wi)| wi * e * e).sum::<T>() / total;
    let ss_tot = weighted_variance(y, w);
    if ss_tot > T::zero() {
        T::one() - ss_res / ss_tot
    } else {
        T::one()
    }
}

fn demean_within<T: Real>(v: &[T], w: &[T], groups: &[usize], n_groups: usize) -> Vec<T> {
    let mut sw = vec![T::zero(); n_groups];
    let mut swv = vec![T::zero(); n_groups];
    for i in 0..v.len() {
        sw[groups[i]] = sw[groups[i]] + w[i];
        swv[groups[i]] = swv[groups[i]] + w[i] * v[i];
    }
    v.iter()
        .zip(groups)
        .map(|(&x, &g)| {
            if sw[g] > T::zero() {
                x - swv[g] / sw[g]
            } else {
                x
            }
        })
        .collect()
}

fn ols_core<T: Real>(
    gamma: &[T],
    x: &CovariateMatrix<T>,
    fe: &FixedEffects,
    model: ModelKind,
) -> Result<FitResult<T>> {
    let n = x.n();
    let p = x.p();
    if gamma.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} outcomes for {n} localities",
            gamma.len()
        )));
    }
    let w = &x.weights;
    let (design, y, absorbed, names): (Matrix<T>, Vec<T>, usize, Vec<String>) = match fe {
        FixedEffects::None => {
            let mut cols = vec![vec![T::one(); n]];
            cols.extend(x.columns.iter().cloned());
            let mut names = vec!["(intercept)".to_string()];
            names.extend(x.names.iter().cloned());
            (Matrix::from_columns(&cols), gamma.to_vec(), 1, names)
        }
        FixedEffects::Groups { groups, .. } => {
            if groups.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} group labels for {n} localities",
                    groups.len()
                )));
            }
            let mut index: BTreeMap<&str, usize> = BTreeMap::new();
            for g in groups {
                let next = index.len();
                index.entry(g.as_str()).or_insert(next);
            }
            let gid: Vec<usize> = groups.iter().map(|g| index[g.as_str()]).collect();
            let k = index.len();
            let cols: Vec<Vec<T>> = x
                .columns
                .iter()
                .map(|c| demean_within(c, w, &gid, k))
                .collect();
            let y = demean_within(gamma, w, &gid, k);
            (Matrix::from_columns(&cols), y, k, x.names.clone())
        }
    };
    if n <= p + absorbed {
        return Err(Error::InsufficientLocalities {
            needed: p + absorbed + 1,
            got: n,
        });
    }
    let fit = weighted_lstsq(&design, &y, w).map_err(|e| Error::Singular {
        context: format!("{} OLS ({} fixed effects)", model.as_str(), fe.label()),
        dependent: e.dependent.iter().map(|&j| names[j].clone()).collect(),
    })?;
    let dof = n - p - absorbed;
    let factor = T::of_usize(n) / T::of_usize(dof);
    let cov = sandwich(&design, w, &fit, None);
    let offset = design.cols() - p;
    let coefficients: Vec<T> = fit.coef[offset..].to_vec();
    let se: Vec<T> = (offset..design.cols())
        .map(|j| (cov[(j, j)] * factor).max(T::zero()).sqrt())
        .collect();
    let intercept = match fe {
        FixedEffects::None => fit.coef[0],
        FixedEffects::Groups { .. } => {
            let xb: T = x
                .columns
                .iter()
                .zip(&coefficients)
                .map(|(c, &b)| weighted_mean(c, w) * b)
                .sum();
            weighted_mean(gamma, w) - xb
        }
    };
    Ok(FitResult {
        model,
        names: x.names.clone(),
        coefficients,
        intercept,
        se,
        selected: vec![true; p],
        lambda: None,
        scale_divisor: None,
        r2: Some(r_squared(&y, &fit.residuals, w)),
        fe_mode: fe.label().to_string(),
        n,
    })
}

/// Weighted OLS of `gamma` on `(1, x)`.
pub fn weighted_bivariate<T: Real>(
    gamma: &[T],
    x: &[T],
    w: &[T],
    name: &str,
) -> Result<FitResult<T>> {
    if gamma.len() < 3 {
        return Err(Error::InsufficientLocalities {
            needed: 3,
            got: gamma.len(),
        });
    }
    let ids = (0..gamma.len()).map(|i| i.to_string()).collect();
    let m = CovariateMatrix::new(ids, vec![name.to_string()], vec![x.to_vec()], w.to_vec())?;
    ols_core(gamma, &m, &FixedEffects::None, ModelKind::Bivariate)
}

/// Weighted OLS of `gamma` on every column of `x`, with optional fixed effects.
pub fn weighted_multivariate_ols<T: Real>(
    gamma: &[T],
    x: &CovariateMatrix<T>,
    fe: &FixedEffects,
) -> Result<FitResult<T>> {
    ols_core(gamma, x, fe, ModelKind::Multivariate)
}

/// OLS on the selected columns. An empty selection gives an intercept-only
/// fit; the returned flag is `true` in that case.
pub fn post_lasso_ols<T: Real>(
    gamma: &[T],
    x: &CovariateMatrix<T>,
    selected: &[bool],
) -> Result<(FitResult<T>, bool)> {
    if selected.len() != x.p() {
        return Err(Error::InvalidArgument("selection length mismatch".into()));
    }
    if !selected.iter().any(|&s| s) {
        let intercept = weighted_mean(gamma, &x.weights);
        return Ok((
            FitResult {
                model: ModelKind::PostLasso,
                names: Vec::new(),
                coefficients: Vec::new(),
                intercept,
                se: Vec::new(),
                selected: selected.to_vec(),
                lambda: None,
                scale_divisor: None,
                r2: Some(T::zero()),
                fe_mode: "none".into(),
                n: x.n(),
            },
            true,
        ));
    }
    let sub = x.select(selected);
    let mut fit = ols_core(gamma, &sub, &FixedEffects::None, ModelKind::PostLasso)?;
    fit.selected = selected.to_vec();
    Ok((fit, false))
}

/// Divides coefficients, intercept and standard errors by `national`
/// (standard errors by its absolute value).
pub fn scale_coefficients<T: Real>(fit: &FitResult<T>, national: T) -> Result<FitResult<T>> {
    if national == T::zero() || !national.is_finite() {
        return Err(Error::InvalidArgument(
            "national estimate used for scaling must be finite and nonzero".into(),
        ));
    }
    let mut out = fit.clone();
    out.coefficients = fit.coefficients.iter().map(|&c| c / national).collect();
    out.se = fit.se.iter().map(|&s| s / national.abs()).collect();
    out.intercept = fit.intercept / national;
    out.scale_divisor = Some(fit.scale_divisor.map_or(national, |d| d * national));
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoOptions {
    pub folds: usize,
    pub seed: u64,
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of `lambda_max`.
    pub lambda_min_ratio: f64,
    /// Convergence when the largest coefficient change in a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            tol: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

/// Weighted-centred problem data for coordinate descent. Loss weights are
/// rescaled to mean one.
struct LassoProblem<T> {
    xc: Vec<Vec<T>>,
    yc: Vec<T>,
    w: Vec<T>,
    xbar: Vec<T>,
    ybar: T,
    d: Vec<T>,
}

impl<T: Real> LassoProblem<T> {
    fn new(columns: &[Vec<T>], y: &[T], weights: &[T], rows: &[usize]) -> Self {
        let n = rows.len();
        let raw_w: Vec<T> = rows.iter().map(|&i| weights[i]).collect();
        let total: T = raw_w.iter().copied().sum();
        let w: Vec<T> = raw_w
            .iter()
            .map(|&wi| wi * T::of_usize(n) / total)
            .collect();
        let ys: Vec<T> = rows.iter().map(|&i| y[i]).collect();
        let ybar = weighted_mean(&ys, &w);
        let yc = ys.iter().map(|&v| v - ybar).collect();
        let mut xc = Vec::with_capacity(columns.len());
        let mut xbar = Vec::with_capacity(columns.len());
        let mut d = Vec::with_capacity(columns.len());
        for col in columns {
            let xs: Vec<T> = rows.iter().map(|&i| col[i]).collect();
            let m = weighted_mean(&xs, &w);
            let c: Vec<T> = xs.iter().map(|&v| v - m).collect();
            d.push(c.iter().zip(&w).map(|(&v, &wi)| wi * v * v).sum::<T>() / T::of_usize(n));
            xbar.push(m);
            xc.push(c);
        }
        Self {
            xc,
            yc,
            w,
            xbar,
            ybar,
            d,
        }
    }

    fn n(&self) -> usize {
        self.yc.len()
    }

    fn gradient(&self, j: usize, resid: &[T]) -> T {
        self.xc[j]
            .iter()
            .zip(resid)
            .zip(&self.w)
            .map(|((&x, &r), &w)| w * x * r)
            .sum::<T>()
            / T::of_usize(self.n())
    }

    fn lambda_max(&self) -> T {
        (0..self.xc.len())
            .map(|j| self.gradient(j, &self.yc).abs())
            .fold(T::zero(), T::max)
    }

    fn residuals(&self, beta: &[T]) -> Vec<T> {
        let mut r = self.yc.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != T::zero() {
                for (ri, &x) in r.iter_mut().zip(&self.xc[j]) {
                    *ri = *ri - b * x;
                }
            }
        }
        r
    }

    fn objective(&self, beta: &[T], lambda: T) -> T {
        let r = self.residuals(beta);
        let loss = r.iter().zip(&self.w).map(|(&e, &w)| w * e * e).sum::<T>()
            / (T::lit(2.0) * T::of_usize(self.n()));
        loss + lambda * beta.iter().map(|b| b.abs()).sum::<T>()
    }

    /// Cyclic coordinate descent from `beta`. Returns the number of sweeps.
    fn solve(
        &self,
        lambda: T,
        beta: &mut [T],
        tol: T,
        max_sweeps: usize,
        mut trace: Option<&mut Vec<T>>,
    ) -> usize {
        let mut r = self.residuals(beta);
        let n = T::of_usize(self.n());
        for sweep in 1..=max_sweeps {
            let mut max_change = T::zero();
            for j in 0..beta.len() {
                if !(self.d[j] > T::zero()) {
                    beta[j] = T::zero();
                    continue;
                }
                let rho: T = self.xc[j]
                    .iter()
                    .zip(&r)
                    .zip(&self.w)
                    .map(|((&x, &ri), &w)| w * x * ri)
                    .sum::<T>()
                    / n
                    + self.d[j] * beta[j];
                let new = soft_threshold(rho, lambda) / self.d[j];
                let delta = new - beta[j];
                if delta != T::zero() {
                    for (ri, &x) in r.iter_mut().zip(&self.xc[j]) {
                        *ri = *ri - delta * x;
                    }
                    beta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(beta, lambda));
            }
            if max_change < tol {
                return sweep;
            }
        }
        max_sweeps
    }
}

pub fn soft_threshold<T: Real>(z: T, lambda: T) -> T {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoFit<T> {
    pub lambda: T,
    pub intercept: T,
    pub coefficients: Vec<T>,
    pub sweeps: usize,
    /// Objective after each sweep.
    pub objective_trace: Vec<T>,
}

/// Lasso at a fixed penalty on all rows, starting from zero.
pub fn lasso_fit<T: Real>(
    gamma: &[T],
    x: &CovariateMatrix<T>,
    lambda: T,
    opts: &LassoOptions,
) -> LassoFit<T> {
    let rows: Vec<usize> = (0..x.n()).collect();
    let prob = LassoProblem::new(&x.columns, gamma, &x.weights, &rows);
    let mut beta = vec![T::zero(); x.p()];
    let mut trace = Vec::new();
    let sweeps = prob.solve(
        lambda,
        &mut beta,
        T::lit(opts.tol),
        opts.max_sweeps,
        Some(&mut trace),
    );
    let intercept = prob.ybar - crate::scalar::dot(&prob.xbar, &beta);
    LassoFit {
        lambda,
        intercept,
        coefficients: beta,
        sweeps,
        objective_trace: trace,
    }
}

/// `lambda_max = max_j |sum_i w_i x_ij (y_i - ybar)| / sum_i w_i` on centred data.
pub fn lasso_lambda_max<T: Real>(gamma: &[T], x: &CovariateMatrix<T>) -> T {
    let rows: Vec<usize> = (0..x.n()).collect();
    LassoProblem::new(&x.columns, gamma, &x.weights, &rows).lambda_max()
}

/// Gradient of the smooth part of the Lasso objective at `beta`, per covariate.
/// At a solution `|g_j| <= lambda` for inactive and `g_j = lambda sign(b_j)`
/// for active coefficients.
pub fn lasso_gradient<T: Real>(gamma: &[T], x: &CovariateMatrix<T>, beta: &[T]) -> Vec<T> {
    let rows: Vec<usize> = (0..x.n()).collect();
    let prob = LassoProblem::new(&x.columns, gamma, &x.weights, &rows);
    let r = prob.residuals(beta);
    (0..x.p()).map(|j| prob.gradient(j, &r)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoCv<T> {
    pub fit: FitResult<T>,
    pub lambdas: Vec<T>,
    /// Mean held-out weighted MSE per lambda.
    pub cv_error: Vec<T>,
    pub best_index: usize,
    /// Fold of each locality.
    pub fold_of: Vec<usize>,
    /// Coefficients along the full-data path, one vector per lambda.
    pub path: Vec<Vec<T>>,
    pub seed: u64,
}

fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (k, &i) in perm.iter().enumerate() {
        fold_of[i] = k % folds;
    }
    fold_of
}

fn lambda_grid<T: Real>(lambda_max: T, n: usize, ratio: f64) -> Vec<T> {
    let n = n.max(1);
    if n == 1 {
        return vec![lambda_max];
    }
    (0..n)
        .map(|k| {
            let frac = k as f64 / (n - 1) as f64;
            lambda_max * T::lit(ratio.powf(frac))
        })
        .collect()
}

/// K-fold cross-validated Lasso over a log-spaced lambda path, refit on all
/// rows at the lambda with the lowest mean held-out error.
pub fn lasso_cv<T: Real>(
    gamma: &[T],
    x: &CovariateMatrix<T>,
    opts: &LassoOptions,
) -> Result<LassoCv<T>> {
    let n = x.n();
    if gamma.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} outcomes for {n} rows",
            gamma.len()
        )));
    }
    if opts.folds < 2 || opts.folds > n {
        return Err(Error::InvalidArgument(format!(
            "folds must be in [2, {n}], got {}",
            opts.folds
        )));
    }
    let tol = T::lit(opts.tol);
    let all: Vec<usize> = (0..n).collect();
    let full = LassoProblem::new(&x.columns, gamma, &x.weights, &all);
    let lambdas = lambda_grid(full.lambda_max(), opts.n_lambda, opts.lambda_min_ratio);
    let fold_of = fold_assignment(n, opts.folds, opts.seed);

    let fold_errors: Vec<Vec<T>> = (0..opts.folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] == f).collect();
            let prob = LassoProblem::new(&x.columns, gamma, &x.weights, &train);
            let mut beta = vec![T::zero(); x.p()];
            let test_w: T = test.iter().map(|&i| x.weights[i]).sum();
            lambdas
                .iter()
                .map(|&lam| {
                    prob.solve(lam, &mut beta, tol, opts.max_sweeps, None);
                    let sse: T = test
                        .iter()
                        .map(|&i| {
                            let pred = prob.ybar
                                + (0..x.p())
                                    .map(|j| beta[j] * (x.columns[j][i] - prob.xbar[j]))
                                    .sum::<T>();
                            let e = gamma[i] - pred;
                            x.weights[i] * e * e
                        })
                        .sum();
                    if test_w > T::zero() {
                        sse / test_w
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect();

    let cv_error: Vec<T> = (0..lambdas.len())
        .map(|k| fold_errors.iter().map(|e| e[k]).sum::<T>() / T::of_usize(opts.folds))
        .collect();
    let mut best_index = 0;
    for k in 1..cv_error.len() {
        if cv_error[k] < cv_error[best_index] {
            best_index = k;
        }
    }

    let mut beta = vec![T::zero(); x.p()];
    let mut path = Vec::with_capacity(lambdas.len());
    for &lam in &lambdas {
        full.solve(lam, &mut beta, tol, opts.max_sweeps, None);
        path.push(beta.clone());
    }
    let coefficients = path[best_index].clone();
    let intercept = full.ybar - crate::scalar::dot(&full.xbar, &coefficients);
    let fitted_resid: Vec<T> = full.residuals(&coefficients);
    let r2 = r_squared(&full.yc, &fitted_resid, &full.w);
    Ok(LassoCv {
        fit: FitResult {
            model: ModelKind::Lasso,
            names: x.names.clone(),
            selected: coefficients.iter().map(|&b| b != T::zero()).collect(),
            se: vec![T::zero(); x.p()],
            coefficients,
            intercept,
            lambda: Some(lambdas[best_index]),
            scale_divisor: None,
            r2: Some(r2),
            fe_mode: "none".into(),
            n,
        },
        lambdas,
        cv_error,
        best_index,
        fold_of,
        path,
        seed: opts.seed,
    })
}

/// In-sample predictions `intercept + x_i' b` from any fit over `x`'s columns
/// (`fit.names` must be a subset of `x.names`).
pub fn predict<T: Real>(fit: &FitResult<T>, x: &CovariateMatrix<T>) -> Vec<T> {
    let idx: Vec<usize> = fit
        .names
        .iter()
        .map(|n| {
            x.names
                .iter()
                .position(|m| m == n)
                .expect("fit column present")
        })
        .collect();
    (0..x.n())
        .map(|i| {
            fit.intercept
                + idx
                    .iter()
                    .zip(&fit.coefficients)
                    .map(|(&j, &b)| b * x.columns[j][i])
                    .sum::<T>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin<T> {
    pub x: T,
    pub y: T,
    pub weight: T,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binscatter<T> {
    pub bins: Vec<Bin<T>>,
    /// Weighted bivariate line through the unbinned points; `None` when it
    /// cannot be fit.
    pub fit: Option<FitResult<T>>,
}

/// Sorts by `x` (ties by input order), splits into `n_bins` bins of equal
/// point count, and reports weighted means of `x` and `y` per bin.
pub fn binscatter<T: Real>(x: &[T], y: &[T], w: &[T], n_bins: usize) -> Result<Binscatter<T>> {
    let n = x.len();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidArgument(
            "x, y and weights must have equal length".into(),
        ));
    }
    if n_bins == 0 || n_bins > n {
        return Err(Error::InvalidArgument(format!(
            "n_bins must be in [1, {n}], got {n_bins}"
        )));
    }
    if x.iter().chain(y).chain(w).any(|v| !v.is_finite()) || w.iter().any(|&v| v < T::zero()) {
        return Err(Error::InvalidArgument(
            "binscatter inputs must be finite, weights nonnegative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite").then(a.cmp(&b)));
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let idx = &order[b * n / n_bins..(b + 1) * n / n_bins];
        let sw: T = idx.iter().map(|&i| w[i]).sum();
        let mean = |v: &[T]| {
            if sw > T::zero() {
                idx.iter().map(|&i| w[i] * v[i]).sum::<T>() / sw
            } else {
                idx.iter().map(|&i| v[i]).sum::<T>() / T::of_usize(idx.len())
            }
        };
        bins.push(Bin {
            x: mean(x),
            y: mean(y),
            weight: sw,
            count: idx.len(),
        });
    }
    let fit = weighted_bivariate(y, x, w, "x").ok();
    Ok(Binscatter { bins, fit })
}
