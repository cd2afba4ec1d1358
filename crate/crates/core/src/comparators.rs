//! Baseline estimators: OLS, post-LASSO, and the two oracle benchmarks.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{Dataset, FitFrame};
use crate::error::{Error, Result};
use crate::gpe::{fit_gpe, GpeFit, GpeOptions, Init};
use crate::inference::{
    comparator_se_convention, intercept_leverage, sandwich_variance_with, summarize, Covariance, RobustSummary,
};
use crate::linalg::{axpy, dot, Qr};
use crate::normal::norm_ppf;

/// A non-grouped fit. Coefficients outside `selected` are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorFit {
    pub beta_hat: Vec<f64>,
    /// Columns of the final least-squares stage.
    pub selected: Vec<bool>,
    pub model_size: usize,
    pub residuals: Vec<f64>,
    pub intercept_hat: f64,
    /// Columns dropped from the second stage as collinear.
    pub dropped_collinear: usize,
    /// First-stage convergence (always true for plain OLS).
    pub converged: bool,
}

impl ComparatorFit {
    fn support(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&j| self.selected[j]).collect()
    }

    /// HC0 variance of `τ'β̂`, treating unselected coefficients as constants.
    pub fn variance(&self, frame: &FitFrame, tau: &[f64]) -> Result<f64> {
        self.variance_with(frame, tau, Covariance::Hc0)
    }

    pub fn variance_with(&self, frame: &FitFrame, tau: &[f64], kind: Covariance) -> Result<f64> {
        if tau.len() != self.beta_hat.len() {
            return Err(Error::Dimension("tau length differs from p".into()));
        }
        let support = self.support();
        let restricted = comparator_se_convention(&self.selected, tau);
        let c: Vec<f64> = support.iter().map(|&j| restricted[j]).collect();
        sandwich_variance_with(&frame.x().select_columns(&support), &self.residuals, &c, kind, intercept_leverage(frame))
    }

    pub fn t_test(&self, frame: &FitFrame, tau: &[f64], theta_0: f64, level: f64) -> Result<RobustSummary> {
        let var = self.variance(frame, tau)?;
        summarize(dot(tau, &self.beta_hat), var, theta_0, level, tau.to_vec())
    }
}

fn intercept_for(frame: &FitFrame, beta: &[f64]) -> f64 {
    if frame.intercept() {
        frame.y_mean() - dot(frame.column_means(), beta)
    } else {
        0.0
    }
}

/// Least squares on the columns in `support`; zero elsewhere.
fn ols_on(frame: &FitFrame, support: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut beta = vec![0.0; frame.p()];
    if support.is_empty() {
        return Ok((beta, frame.y().to_vec()));
    }
    let xs = frame.x().select_columns(support);
    let coef = Qr::new(&xs)?.solve(frame.y())?;
    for (&j, c) in support.iter().zip(&coef) {
        beta[j] = *c;
    }
    let fitted = xs.mul_vec(&coef);
    let resid = frame.y().iter().zip(&fitted).map(|(y, f)| y - f).collect();
    Ok((beta, resid))
}

/// Ordinary least squares on all columns.
pub fn ols_fit(frame: &FitFrame) -> Result<ComparatorFit> {
    let (n, p) = (frame.n(), frame.p());
    let needed = p + usize::from(frame.intercept());
    if needed >= n {
        return Err(Error::Infeasible(alloc::format!("OLS needs n > p; got n = {n}, p = {p}")));
    }
    let support: Vec<usize> = (0..p).collect();
    let (beta_hat, residuals) = ols_on(frame, &support)?;
    Ok(ComparatorFit {
        intercept_hat: intercept_for(frame, &beta_hat),
        beta_hat,
        selected: vec![true; p],
        model_size: p,
        residuals,
        dropped_collinear: 0,
        converged: true,
    })
}

/// Coordinate-descent LASSO result.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after every sweep.
    pub objective_trace: Vec<f64>,
}

pub const LASSO_TOL: f64 = 1e-9;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `E_n[(y − xβ)²] + (λ/n) Σ loadings_j |β_j|`.
pub fn lasso_objective(frame: &FitFrame, beta: &[f64], lambda: f64, loadings: &[f64]) -> f64 {
    let fitted = frame.x().mul_vec(beta);
    let n = frame.n() as f64;
    let rss: f64 = frame.y().iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    let pen: f64 = beta.iter().zip(loadings).map(|(b, l)| l * b.abs()).sum();
    (rss + lambda * pen) / n
}

/// Cyclic coordinate descent with soft-thresholding. Stops when the largest
/// coefficient change in a sweep is below `1e-9`, or after 10 000 sweeps
/// (flagged, last iterate returned).
pub fn lasso_cd(frame: &FitFrame, lambda: f64, loadings: &[f64]) -> Result<LassoFit> {
    let p = frame.p();
    if !(lambda > 0.0) {
        return Err(Error::Config("lasso penalty must be positive".into()));
    }
    if loadings.len() != p || loadings.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Config("penalty loadings must be positive, one per column".into()));
    }
    let x = frame.x();
    let ss: Vec<f64> = (0..p).map(|j| dot(x.col(j), x.col(j))).collect();
    let mut beta = vec![0.0; p];
    let mut resid = frame.y().to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if ss[j] == 0.0 {
                continue;
            }
            let xj = x.col(j);
            let old = beta[j];
            let z = dot(xj, &resid) + ss[j] * old;
            let new = soft(z, 0.5 * lambda * loadings[j]) / ss[j];
            if new != old {
                axpy(old - new, xj, &mut resid);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        let pen: f64 = beta.iter().zip(loadings).map(|(b, l)| l * b.abs()).sum();
        trace.push((dot(&resid, &resid) + lambda * pen) / frame.n() as f64);
        if max_change < LASSO_TOL {
            converged = true;
            break;
        }
    }
    Ok(LassoFit { beta, sweeps, converged, objective_trace: trace })
}

/// Plug-in penalty `2c√n σ̂ Φ⁻¹(1 − γ/(2p))` with `c = 1.1`,
/// `γ = 0.1/log(max(p, n))`.
pub fn plugin_lambda(n: usize, p: usize, sigma: f64) -> f64 {
    let gamma = 0.1 / libm::log(p.max(n) as f64);
    2.0 * 1.1 * libm::sqrt(n as f64) * sigma * norm_ppf(1.0 - gamma / (2.0 * p as f64))
}

/// Adds columns in index order, skipping any that would make the design
/// rank-deficient or leave no residual degree of freedom.
fn independent_subset(frame: &FitFrame, candidates: &[usize]) -> (Vec<usize>, usize) {
    let limit = frame.n().saturating_sub(1 + usize::from(frame.intercept()));
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = 0;
    for &j in candidates {
        if kept.len() >= limit {
            dropped += 1;
            continue;
        }
        kept.push(j);
        let full_rank = Qr::new(&frame.x().select_columns(&kept)).map(|q| q.is_full_rank()).unwrap_or(false);
        if !full_rank {
            kept.pop();
            dropped += 1;
        }
    }
    (kept, dropped)
}

/// Post-LASSO with the homoskedastic plug-in penalty and unit loadings.
///
/// `σ̂` starts at the standard deviation of `y` and is re-estimated twice from
/// post-LASSO residuals. The second stage is OLS on the selected columns
/// plus `amelioration`.
pub fn plasso_fit(frame: &FitFrame, amelioration: &BTreeSet<usize>) -> Result<ComparatorFit> {
    let (n, p) = (frame.n(), frame.p());
    if let Some(&bad) = amelioration.iter().find(|&&j| j >= p) {
        return Err(Error::ColumnIndex { index: bad, p });
    }
    let loadings = vec![1.0; p];
    let y = frame.y();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut sigma = libm::sqrt(y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>() / (n as f64 - 1.0));
    let mut first = lasso_cd(frame, plugin_lambda(n, p, sigma), &loadings)?;
    for _ in 0..2 {
        let support: Vec<usize> = (0..p).filter(|&j| first.beta[j] != 0.0).collect();
        let (kept, _) = independent_subset(frame, &support);
        let (_, resid) = ols_on(frame, &kept)?;
        sigma = libm::sqrt(dot(&resid, &resid) / n as f64);
        if !(sigma > 0.0) {
            break;
        }
        first = lasso_cd(frame, plugin_lambda(n, p, sigma), &loadings)?;
    }
    let candidates: Vec<usize> = (0..p).filter(|&j| first.beta[j] != 0.0 || amelioration.contains(&j)).collect();
    let (kept, dropped_collinear) = independent_subset(frame, &candidates);
    let (beta_hat, residuals) = ols_on(frame, &kept)?;
    let mut selected = vec![false; p];
    for &j in &kept {
        selected[j] = true;
    }
    Ok(ComparatorFit {
        intercept_hat: intercept_for(frame, &beta_hat),
        beta_hat,
        selected,
        model_size: kept.len(),
        residuals,
        dropped_collinear,
        converged: first.converged,
    })
}

/// The grouped estimator started from the true coefficients (infeasible benchmark).
pub fn oracle_gpe(frame: &FitFrame, beta_true: &[f64], options: &GpeOptions) -> Result<GpeFit> {
    if beta_true.len() != frame.p() {
        return Err(Error::Dimension(alloc::format!("beta_true has {} entries, p = {}", beta_true.len(), frame.p())));
    }
    fit_gpe(frame, &options.clone().with_init(Init::Oracle(beta_true.to_vec())))
}

/// OLS on a sample three times as large, drawn by `sampler(3n)`.
/// Returns the fit together with the frame it was computed on.
pub fn oracle_ols<F>(sampler: F, n: usize, p: usize, intercept: bool) -> Result<(ComparatorFit, FitFrame)>
where
    F: FnOnce(usize) -> Result<Dataset>,
{
    if 3 * n <= p {
        return Err(Error::Infeasible(alloc::format!("oracle OLS needs 3n > p; got n = {n}, p = {p}")));
    }
    let data = sampler(3 * n)?;
    if data.n() != 3 * n || data.p() != p {
        return Err(Error::Dimension("oracle sampler returned the wrong shape".into()));
    }
    let frame = crate::dataset::prepare(data, intercept, &BTreeSet::new())?;
    Ok((ols_fit(&frame)?, frame))
}
