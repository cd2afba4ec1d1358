//! Data-generating processes, per-replication evaluation, and metrics.
//!
//! Covariates are Gaussian with `Σ_{jj'} = 0.5^{|j−j'|}`, errors are
//! `ε = U √((1 + x₁²)/2)`, and `y = xβ + ε`. Replication `r` under base seed
//! `s` draws from streams keyed by `replication_seed(s, r)`: stream 0 for the
//! sample, stream 1 for the extra `2n` rows used by oracle OLS.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::admm::AdmmConfig;
use crate::comparators::{ols_fit, oracle_ols, plasso_fit};
use crate::dataset::{prepare, Dataset, FitFrame};
use crate::error::{Error, Result};
use crate::gpe::{GpeOptions, Init};
use crate::inference::{robust_variance_with, summarize, theta_functional, Covariance};
use crate::linalg::{dot, norm2, Matrix};
use crate::normal::{chi2_1_ppf, norm_ppf};
use crate::rng::{replication_seed, Stream};
use crate::selection::{default_k_max, select_k};

/// The named coefficient configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Dgp {
    CnS,
    CaS1,
    CaS2,
    DS1,
    MnS,
    MS,
    DnS,
    DS2,
    DaS2,
}

impl Dgp {
    pub const ALL: [Dgp; 9] = [Dgp::CnS, Dgp::CaS1, Dgp::CaS2, Dgp::DS1, Dgp::MnS, Dgp::MS, Dgp::DnS, Dgp::DS2, Dgp::DaS2];

    pub fn name(self) -> &'static str {
        match self {
            Dgp::CnS => "cns",
            Dgp::CaS1 => "cas1",
            Dgp::CaS2 => "cas2",
            Dgp::DS1 => "ds1",
            Dgp::MnS => "mns",
            Dgp::MS => "ms",
            Dgp::DnS => "dns",
            Dgp::DS2 => "ds2",
            Dgp::DaS2 => "das2",
        }
    }

    /// Centered chi-square errors for CnS and CaS1, standard normal otherwise.
    pub fn error_family(self) -> ErrorFamily {
        match self {
            Dgp::CnS | Dgp::CaS1 => ErrorFamily::CenteredChi2,
            _ => ErrorFamily::Normal,
        }
    }
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_lowercase();
        Dgp::ALL.iter().copied().find(|d| d.name() == key).ok_or_else(|| Error::UnknownDgp(s.to_string()))
    }
}

/// Distribution of `U` in `ε = U √((1 + x₁²)/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ErrorFamily {
    /// `(χ²₁ − 1)/√2`.
    CenteredChi2,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DgpSpec {
    pub dgp: Dgp,
    pub n: usize,
    pub p: usize,
    /// CnS only: use slope 4 (range [2, 6]) instead of slope 2 (range [2, 4]).
    pub cns_literal: bool,
}

impl DgpSpec {
    pub fn new(dgp: Dgp, n: usize, p: usize) -> Self {
        Self { dgp, n, p, cns_literal: false }
    }

    pub fn error_family(&self) -> ErrorFamily {
        self.dgp.error_family()
    }
}

/// `τ_j = 0.9(j − 1)/(p − 1) + 0.05` for 1-based `j`.
fn tau_grid(j: usize, p: usize) -> f64 {
    0.9 * j as f64 / (p - 1) as f64 + 0.05
}

/// True coefficients of the named design (index `j` 0-based here).
pub fn make_beta(spec: &DgpSpec) -> Result<Vec<f64>> {
    let p = spec.p;
    if p < 2 {
        return Err(Error::Config("designs need p >= 2".into()));
    }
    let lead = |j: usize| if j < 5 { 1.0 } else { 0.0 };
    let beta = (0..p)
        .map(|j| match spec.dgp {
            Dgp::CnS => {
                let slope = if spec.cns_literal { 4.0 } else { 2.0 };
                2.0 + slope * j as f64 / (p - 1) as f64
            }
            Dgp::CaS1 => norm_ppf(tau_grid(j, p)),
            Dgp::CaS2 => libm::pow(0.7, j as f64),
            Dgp::DS1 => lead(j),
            Dgp::MnS => lead(j) * norm_ppf(tau_grid(j, p)).abs() + 0.1,
            Dgp::MS => lead(j) * norm_ppf(tau_grid(j, p)),
            Dgp::DnS => lead(j) + 0.1,
            Dgp::DS2 => {
                if j < p.div_ceil(2) {
                    1.0
                } else {
                    0.0
                }
            }
            Dgp::DaS2 => lead(j) + chi2_1_ppf(tau_grid(j, p)) / libm::sqrt(2.0 * spec.n as f64),
        })
        .collect();
    Ok(beta)
}

/// One simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub beta_true: Vec<f64>,
    pub theta_true: f64,
    pub seed: u64,
}

impl Replication {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::unnamed(self.y.clone(), self.x.clone())
    }
}

/// Draws `rows` observations from `stream`.
fn draw_rows(spec: &DgpSpec, beta: &[f64], rows: usize, stream: &mut Stream) -> (Matrix, Vec<f64>) {
    let p = spec.p;
    let rho_c = libm::sqrt(0.75);
    let mut x = Matrix::zeros(rows, p);
    let mut y = vec![0.0; rows];
    let mut xi = vec![0.0; p];
    for i in 0..rows {
        for j in 0..p {
            let z = stream.standard_normal();
            xi[j] = if j == 0 { z } else { 0.5 * xi[j - 1] + rho_c * z };
            x.set(i, j, xi[j]);
        }
        let u = match spec.error_family() {
            ErrorFamily::CenteredChi2 => stream.centered_chi2(),
            ErrorFamily::Normal => stream.standard_normal(),
        };
        let eps = u * libm::sqrt(0.5 * (1.0 + xi[0] * xi[0]));
        y[i] = dot(&xi, beta) + eps;
    }
    (x, y)
}

/// Deterministic sample of `spec.n` rows for `seed`.
pub fn sample_replication(spec: &DgpSpec, seed: u64) -> Result<Replication> {
    let beta_true = make_beta(spec)?;
    let theta_true = dot(&theta_functional(spec.p), &beta_true);
    let mut stream = Stream::substream(seed, 0);
    let (x, y) = draw_rows(spec, &beta_true, spec.n, &mut stream);
    Ok(Replication { x, y, beta_true, theta_true, seed })
}

/// The replication's rows followed by `extra` fresh rows from stream 1.
pub fn extended_sample(spec: &DgpSpec, rep: &Replication, extra: usize) -> Result<Dataset> {
    let mut stream = Stream::substream(rep.seed, 1);
    let (x2, y2) = draw_rows(spec, &rep.beta_true, extra, &mut stream);
    let x = rep.x.vstack(&x2)?;
    let mut y = rep.y.clone();
    y.extend_from_slice(&y2);
    Dataset::unnamed(y, x)
}

/// Estimators compared in the Monte Carlo study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Estimator {
    Gpe,
    Plasso,
    Ols,
    OracOls,
    OracGpe,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [Estimator::Gpe, Estimator::Plasso, Estimator::Ols, Estimator::OracOls, Estimator::OracGpe];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Gpe => "gpe",
            Estimator::Plasso => "plasso",
            Estimator::Ols => "ols",
            Estimator::OracOls => "orac_ols",
            Estimator::OracGpe => "orac_gpe",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '.'], "_");
        Estimator::ALL
            .iter()
            .copied()
            .find(|e| e.name() == key)
            .ok_or_else(|| Error::Config(alloc::format!("unknown estimator `{s}` (valid: gpe, plasso, ols, orac_ols, orac_gpe)")))
    }
}

/// Settings shared by every replication.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McConfig {
    /// Selection constant.
    pub c: f64,
    /// Fit an intercept (the designs have none, so off by default).
    pub intercept: bool,
    pub level: f64,
    /// Residual weighting in every estimator's sandwich.
    pub covariance: Covariance,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub admm: AdmmConfig,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            c: crate::selection::DEFAULT_C,
            intercept: false,
            level: 0.05,
            covariance: Covariance::default(),
            admm: AdmmConfig::default(),
        }
    }
}

/// One estimator on one replication.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub theta_true: f64,
    pub theta_hat: f64,
    pub se_theta: f64,
    /// `‖β̂ − β‖/√p`.
    pub beta_error: f64,
    /// Number of groups for GPE variants, number of columns otherwise.
    pub model_size: usize,
    pub clamped: usize,
    pub exhausted: bool,
    pub error: Option<String>,
}

impl ReplicationRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// Rejects `H₀: θ = θ₀` at `level`, using the same rule as the t-test.
    pub fn rejects(&self, theta_0: f64, level: f64) -> bool {
        summarize(self.theta_hat, self.se_theta * self.se_theta, theta_0, level, Vec::new())
            .map(|s| s.reject)
            .unwrap_or(false)
    }
}

struct Outcome {
    beta: Vec<f64>,
    theta_hat: f64,
    variance: f64,
    model_size: usize,
    clamped: usize,
    exhausted: bool,
}

fn run_estimator(
    est: Estimator,
    spec: &DgpSpec,
    rep: &Replication,
    frame: &FitFrame,
    cfg: &McConfig,
) -> Result<Outcome> {
    let tau = theta_functional(spec.p);
    let gpe = |init: Init| -> Result<Outcome> {
        let template = GpeOptions::new(1).with_init(init);
        let (fit, trace) = select_k(frame, cfg.c, 1, default_k_max(frame), &template)?;
        Ok(Outcome {
            theta_hat: dot(&tau, &fit.beta_hat),
            variance: robust_variance_with(frame, &fit, &tau, cfg.covariance)?,
            beta: fit.beta_hat,
            model_size: fit.k,
            clamped: trace.clamp_count(),
            exhausted: trace.exhausted,
        })
    };
    let comparator = |fit: crate::comparators::ComparatorFit, on: &FitFrame| -> Result<Outcome> {
        Ok(Outcome {
            theta_hat: dot(&tau, &fit.beta_hat),
            variance: fit.variance_with(on, &tau, cfg.covariance)?,
            model_size: fit.model_size,
            beta: fit.beta_hat,
            clamped: 0,
            exhausted: false,
        })
    };
    match est {
        Estimator::Gpe => gpe(Init::Admm(cfg.admm.clone())),
        Estimator::OracGpe => gpe(Init::Oracle(rep.beta_true.clone())),
        Estimator::Ols => comparator(ols_fit(frame)?, frame),
        Estimator::Plasso => comparator(plasso_fit(frame, &BTreeSet::new())?, frame),
        Estimator::OracOls => {
            let (fit, big) = oracle_ols(|_| extended_sample(spec, rep, 2 * spec.n), spec.n, spec.p, cfg.intercept)?;
            comparator(fit, &big)
        }
    }
}

/// Fits every estimator on replication `index` under `base_seed`.
pub fn evaluate_replication(
    spec: &DgpSpec,
    estimators: &[Estimator],
    index: usize,
    base_seed: u64,
    cfg: &McConfig,
) -> Result<Vec<ReplicationRecord>> {
    let seed = replication_seed(base_seed, index as u64);
    let rep = sample_replication(spec, seed)?;
    let frame = prepare(rep.dataset()?, cfg.intercept, &BTreeSet::new())?;
    let root_p = libm::sqrt(spec.p as f64);
    Ok(estimators
        .iter()
        .map(|&est| {
            let base = ReplicationRecord {
                rep: index,
                seed,
                estimator: est,
                theta_true: rep.theta_true,
                theta_hat: f64::NAN,
                se_theta: f64::NAN,
                beta_error: f64::NAN,
                model_size: 0,
                clamped: 0,
                exhausted: false,
                error: None,
            };
            match run_estimator(est, spec, &rep, &frame, cfg) {
                Ok(o) => {
                    let diff: Vec<f64> = o.beta.iter().zip(&rep.beta_true).map(|(a, b)| a - b).collect();
                    ReplicationRecord {
                        theta_hat: o.theta_hat,
                        se_theta: libm::sqrt(o.variance.max(0.0)),
                        beta_error: norm2(&diff) / root_p,
                        model_size: o.model_size,
                        clamped: o.clamped,
                        exhausted: o.exhausted,
                        ..base
                    }
                }
                Err(e) => ReplicationRecord { error: Some(e.to_string()), ..base },
            }
        })
        .collect())
}

/// Aggregate metrics for one estimator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRow {
    pub estimator: Estimator,
    /// Mean of `‖β̂ − β‖/√p`.
    pub mnb: f64,
    /// Median of `|θ̂ − θ|`.
    pub mad: f64,
    /// Root mean square of `θ̂ − θ`.
    pub rmse: f64,
    /// Fraction rejecting the null at the configured level.
    pub rej: f64,
    pub med_model_size: f64,
    /// Replications that succeeded.
    pub reps: usize,
    pub failures: usize,
    pub clamped: usize,
    pub exhausted: usize,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Metrics for `estimator`; the null is `θ = θ_true + shift`.
pub fn aggregate(records: &[ReplicationRecord], estimator: Estimator, shift: f64, level: f64) -> MetricRow {
    let mine: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == estimator).collect();
    let ok: Vec<&&ReplicationRecord> = mine.iter().filter(|r| !r.failed()).collect();
    let m = ok.len() as f64;
    let mnb = ok.iter().map(|r| r.beta_error).sum::<f64>() / m;
    let mut abs_err: Vec<f64> = ok.iter().map(|r| (r.theta_hat - r.theta_true).abs()).collect();
    let rmse = libm::sqrt(ok.iter().map(|r| { let d = r.theta_hat - r.theta_true; d * d }).sum::<f64>() / m);
    let rej = ok.iter().filter(|r| r.rejects(r.theta_true + shift, level)).count() as f64 / m;
    let mut sizes: Vec<f64> = ok.iter().map(|r| r.model_size as f64).collect();
    MetricRow {
        estimator,
        mnb,
        mad: median(&mut abs_err),
        rmse,
        rej,
        med_model_size: median(&mut sizes),
        reps: ok.len(),
        failures: mine.len() - ok.len(),
        clamped: ok.iter().map(|r| r.clamped).sum(),
        exhausted: ok.iter().filter(|r| r.exhausted).count(),
    }
}

/// Null shift for power curves: `θ₀ = θ − h√p`.
pub fn power_shift(h: f64, p: usize) -> f64 {
    -h * libm::sqrt(p as f64)
}

/// Validates a power-curve grid: finite values within `[0, 0.4]`.
pub fn validate_h_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty h grid".into()));
    }
    if let Some(h) = grid.iter().find(|h| !(**h >= 0.0 && **h <= 0.4 + 1e-12)) {
        return Err(Error::Config(alloc::format!("h = {h} is outside [0, 0.4]")));
    }
    Ok(())
}

/// `start, start + step, …` up to `stop` inclusive (with rounding slack).
pub fn h_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config("grid needs start <= stop and step > 0".into()));
    }
    let count = libm::floor((stop - start) / step + 1e-9) as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| start + i as f64 * step).collect();
    validate_h_grid(&grid)?;
    Ok(grid)
}
