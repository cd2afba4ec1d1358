//! Heteroskedasticity-robust inference on linear functionals `τ'β̂`.
//!
//! For a grouped fit with design `G = X m̂` and `a = (G'G)⁻¹ m̂'τ`, the
//! variance of `τ'β̂` is estimated by `Σ_i (g_i'a)² ε̂_i²` (HC0), or with each
//! squared residual inflated by `(1 − h_i)⁻²` for leverage `h_i` (HC3). Tests
//! use the standard normal limit.

use alloc::vec::Vec;

use crate::dataset::FitFrame;
use crate::error::{Error, Result};
use crate::gpe::{grouped_design, GpeFit};
use crate::linalg::{dot, norm2, Matrix, Qr};
use crate::normal::{norm_ppf, norm_sf};

/// Outcome of a two-sided test of `H₀: τ'β = θ₀`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RobustSummary {
    pub theta_hat: f64,
    pub theta_0: f64,
    pub se_theta: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub level: f64,
    /// `p_value < level`.
    pub reject: bool,
    /// The standard error is zero, so the test is degenerate.
    pub degenerate: bool,
    pub tau: Vec<f64>,
}

/// How squared residuals enter the sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Covariance {
    /// Raw squared residuals.
    Hc0,
    /// Squared residuals divided by `(1 − h_i)²`. Conservative when the
    /// regression has many columns relative to `n`.
    #[default]
    Hc3,
}

impl core::str::FromStr for Covariance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hc0" => Ok(Covariance::Hc0),
            "hc3" => Ok(Covariance::Hc3),
            other => Err(Error::Config(alloc::format!("unknown covariance `{other}` (expected hc0 or hc3)"))),
        }
    }
}

/// HC0 variance of `c'b̂` where `b̂` is the least-squares coefficient of a
/// regression on `design` with residuals `resid`.
pub fn sandwich_variance(design: &Matrix, resid: &[f64], c: &[f64]) -> Result<f64> {
    sandwich_variance_with(design, resid, c, Covariance::Hc0, 0.0)
}

/// [`sandwich_variance`] with a choice of residual weighting. `base_leverage`
/// is added to every leverage; it is `1/n` when `design` was centered to
/// absorb an intercept.
pub fn sandwich_variance_with(
    design: &Matrix,
    resid: &[f64],
    c: &[f64],
    kind: Covariance,
    base_leverage: f64,
) -> Result<f64> {
    if resid.len() != design.rows() || c.len() != design.cols() {
        return Err(Error::Dimension("sandwich inputs do not conform".into()));
    }
    if design.cols() == 0 {
        return Ok(0.0);
    }
    let qr = Qr::new(design)?;
    let a = qr.solve_normal(c)?;
    let w = design.mul_vec(&a);
    match kind {
        Covariance::Hc0 => Ok(w.iter().zip(resid).map(|(wi, e)| wi * wi * e * e).sum()),
        Covariance::Hc3 => {
            let h = qr.leverages(design)?;
            Ok(w.iter()
                .zip(resid)
                .zip(&h)
                .map(|((wi, e), hi)| {
                    let room = 1.0 - (hi + base_leverage);
                    // a point with leverage one is fitted exactly
                    if room <= 1e-12 {
                        0.0
                    } else {
                        wi * wi * e * e / (room * room)
                    }
                })
                .sum())
        }
    }
}

/// Leverage contributed by an intercept absorbed through centering.
pub fn intercept_leverage(frame: &FitFrame) -> f64 {
    if frame.intercept() {
        1.0 / frame.n() as f64
    } else {
        0.0
    }
}

fn check_tau(tau: &[f64], p: usize) -> Result<()> {
    if tau.len() != p {
        return Err(Error::Dimension(alloc::format!("tau has {} entries, p = {p}", tau.len())));
    }
    if (norm2(tau) - 1.0).abs() > 1e-10 {
        return Err(Error::Config("tau must have unit Euclidean norm".into()));
    }
    Ok(())
}

/// Estimated HC0 variance of `τ'β̂` for a grouped fit; fixed singleton
/// groups are columns of `m̂` like any other group.
pub fn robust_variance(frame: &FitFrame, fit: &GpeFit, tau: &[f64]) -> Result<f64> {
    robust_variance_with(frame, fit, tau, Covariance::Hc0)
}

pub fn robust_variance_with(frame: &FitFrame, fit: &GpeFit, tau: &[f64], kind: Covariance) -> Result<f64> {
    check_tau(tau, frame.p())?;
    if fit.residuals.len() != frame.n() {
        return Err(Error::Dimension("fit does not belong to this frame".into()));
    }
    let g = grouped_design(frame, &fit.assignment)?;
    let mut c = alloc::vec![0.0; fit.assignment.k()];
    for (j, t) in tau.iter().enumerate() {
        c[fit.assignment.label(j)] += t;
    }
    sandwich_variance_with(&g, &fit.residuals, &c, kind, intercept_leverage(frame))
}

/// `τ = (1, …, 1)/√p`, so `τ'β = p^{-1/2} Σ β_j`.
pub fn theta_functional(p: usize) -> Vec<f64> {
    alloc::vec![1.0 / libm::sqrt(p as f64); p]
}

/// Builds the test summary from an estimate and its variance.
pub fn summarize(theta_hat: f64, variance: f64, theta_0: f64, level: f64, tau: Vec<f64>) -> Result<RobustSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config("test level must lie in (0, 1)".into()));
    }
    let se = libm::sqrt(variance.max(0.0));
    let diff = theta_hat - theta_0;
    let (t_stat, p_value, degenerate) = if se > 0.0 {
        let t = diff / se;
        (t, (2.0 * norm_sf(t.abs())).min(1.0), false)
    } else if diff == 0.0 {
        (0.0, 1.0, true)
    } else {
        (f64::INFINITY.copysign(diff), 0.0, true)
    };
    Ok(RobustSummary {
        theta_hat,
        theta_0,
        se_theta: se,
        t_stat,
        p_value,
        level,
        reject: p_value < level,
        degenerate,
        tau,
    })
}

/// Two-sided HC0 test of `H₀: τ'β = θ₀` for a grouped fit.
pub fn t_test(frame: &FitFrame, fit: &GpeFit, tau: &[f64], theta_0: f64, level: f64) -> Result<RobustSummary> {
    t_test_with(frame, fit, tau, theta_0, level, Covariance::Hc0)
}

pub fn t_test_with(
    frame: &FitFrame,
    fit: &GpeFit,
    tau: &[f64],
    theta_0: f64,
    level: f64,
    kind: Covariance,
) -> Result<RobustSummary> {
    let var = robust_variance_with(frame, fit, tau, kind)?;
    summarize(dot(tau, &fit.beta_hat), var, theta_0, level, tau.to_vec())
}

/// `τ` with entries outside the second-stage columns set to zero: coefficients
/// shrunk to zero in the first step are treated as constants.
pub fn comparator_se_convention(selected: &[bool], tau: &[f64]) -> Vec<f64> {
    tau.iter().zip(selected).map(|(&t, &s)| if s { t } else { 0.0 }).collect()
}

/// Two-sided critical value of the standard normal at `level`.
pub fn critical_value(level: f64) -> f64 {
    norm_ppf(1.0 - level / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster1d::GroupAssignment;
    use crate::dataset::{prepare, Dataset};
    use crate::gpe::{fit_gpe, GpeOptions};
    use crate::linalg::{least_squares, Cholesky};
    use crate::rng::Stream;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    fn hetero_frame(n: usize, p: usize, seed: u64, intercept: bool) -> FitFrame {
        let mut s = Stream::new(seed);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| s.standard_normal()).collect()).collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let beta: Vec<f64> = (0..p).map(|j| j as f64 / p as f64).collect();
        let mut y = x.mul_vec(&beta);
        for (i, v) in y.iter_mut().enumerate() {
            *v += s.standard_normal() * libm::sqrt(0.5 * (1.0 + cols[0][i] * cols[0][i]));
        }
        prepare(Dataset::unnamed(y, x).unwrap(), intercept, &BTreeSet::new()).unwrap()
    }

    /// `τ'(X'X)⁻¹ X' diag(e²) X (X'X)⁻¹ τ` assembled from an explicit inverse.
    fn hc0_explicit(x: &Matrix, e: &[f64], tau: &[f64]) -> f64 {
        let p = x.cols();
        let chol = Cholesky::new(&x.gram()).unwrap();
        let inv_cols: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let mut ej = vec![0.0; p];
                ej[j] = 1.0;
                chol.solve(&ej)
            })
            .collect();
        let mut meat = Matrix::zeros(p, p);
        for i in 0..x.rows() {
            let xi = x.row(i);
            for a in 0..p {
                for b in 0..p {
                    meat.set(a, b, meat.get(a, b) + xi[a] * xi[b] * e[i] * e[i]);
                }
            }
        }
        let v: Vec<f64> = (0..p).map(|j| dot(&inv_cols[j], tau)).collect();
        let mv = meat.mul_vec(&v);
        dot(&v, &mv)
    }

    #[test]
    fn k_equals_p_matches_hc0() {
        for seed in 0..20 {
            let f = hetero_frame(120, 8, seed, seed % 2 == 0);
            let fit = fit_gpe(&f, &GpeOptions::new(8)).unwrap();
            let mut s = Stream::new(seed + 99);
            let raw: Vec<f64> = (0..8).map(|_| s.standard_normal()).collect();
            let nrm = norm2(&raw);
            let tau: Vec<f64> = raw.iter().map(|v| v / nrm).collect();
            let (_, e) = least_squares(f.x(), f.y()).unwrap();
            let want = hc0_explicit(f.x(), &e, &tau);
            let got = robust_variance(&f, &fit, &tau).unwrap();
            assert!((got - want).abs() <= 1e-8 * want, "seed {seed}: {got} vs {want}");
        }
    }

    /// Explicit HC3 from the hat matrix built out of an explicit inverse,
    /// with the intercept column written out.
    fn hc3_explicit(x: &Matrix, e: &[f64], tau: &[f64], intercept: bool) -> f64 {
        let n = x.rows();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        if intercept {
            cols.push(vec![1.0; n]);
        }
        cols.extend((0..x.cols()).map(|j| x.col(j).to_vec()));
        let full = Matrix::from_columns(&cols).unwrap();
        let chol = Cholesky::new(&full.gram()).unwrap();
        let mut c = vec![0.0; full.cols()];
        c[usize::from(intercept)..].copy_from_slice(tau);
        let a = chol.solve(&c);
        (0..n)
            .map(|i| {
                let xi = full.row(i);
                let h = dot(&xi, &chol.solve(&xi));
                let w = dot(&xi, &a);
                w * w * e[i] * e[i] / ((1.0 - h) * (1.0 - h))
            })
            .sum()
    }

    #[test]
    fn k_equals_p_matches_hc3() {
        for seed in 0..10 {
            let intercept = seed % 2 == 0;
            let f = hetero_frame(60, 20, seed, intercept);
            let fit = fit_gpe(&f, &GpeOptions::new(20)).unwrap();
            let tau = theta_functional(20);
            // the uncentered design reproduces the centered fit's residuals
            let mut s = Stream::new(seed);
            let cols: Vec<Vec<f64>> = (0..20).map(|_| (0..60).map(|_| s.standard_normal()).collect()).collect();
            let x = Matrix::from_columns(&cols).unwrap();
            let want = hc3_explicit(&x, &fit.residuals, &tau, intercept);
            let got = robust_variance_with(&f, &fit, &tau, Covariance::Hc3).unwrap();
            assert!((got - want).abs() <= 1e-8 * want, "seed {seed}: {got} vs {want}");
            assert!(got > robust_variance(&f, &fit, &tau).unwrap());
        }
    }

    #[test]
    fn covariance_parses() {
        assert_eq!("HC0".parse::<Covariance>().unwrap(), Covariance::Hc0);
        assert_eq!("hc3".parse::<Covariance>().unwrap(), Covariance::Hc3);
        assert!("hc1".parse::<Covariance>().is_err());
    }

    #[test]
    fn homoskedastic_plug_in() {
        // Orthonormal grouped design: two groups of three, tau on group 0.
        let n = 5000;
        let sigma = 1.5;
        let mut s = Stream::new(21);
        let cols: Vec<Vec<f64>> = (0..6).map(|_| (0..n).map(|_| s.standard_normal()).collect()).collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let beta = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let mut y = x.mul_vec(&beta);
        for v in &mut y {
            *v += sigma * s.standard_normal();
        }
        let f = prepare(Dataset::unnamed(y, x).unwrap(), false, &BTreeSet::new()).unwrap();
        let a = GroupAssignment::new(vec![0, 0, 0, 1, 1, 1], 2, vec![false; 6]).unwrap();
        let fit = fit_gpe(&f, &GpeOptions::new(2).with_init(crate::gpe::Init::Assignment(a))).unwrap();
        let tau = [1.0 / libm::sqrt(3.0), 1.0 / libm::sqrt(3.0), 1.0 / libm::sqrt(3.0), 0.0, 0.0, 0.0];
        let var = robust_variance(&f, &fit, &tau).unwrap();
        // τ'β̂ = √3 δ̂₀ and Var(δ̂₀) ≈ σ²/(3n).
        let ratio = var / (sigma * sigma / n as f64);
        assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_residuals_give_zero_variance() {
        let mut s = Stream::new(2);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..30).map(|_| s.standard_normal()).collect()).collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let y = x.mul_vec(&[2.0, 2.0, 2.0]);
        let f = prepare(Dataset::unnamed(y, x).unwrap(), false, &BTreeSet::new()).unwrap();
        let fit = fit_gpe(&f, &GpeOptions::new(1)).unwrap();
        let tau = theta_functional(3);
        assert!(robust_variance(&f, &fit, &tau).unwrap() < 1e-20);
    }

    #[test]
    fn sign_invariance() {
        let f = hetero_frame(100, 6, 4, true);
        let fit = fit_gpe(&f, &GpeOptions::new(2)).unwrap();
        let tau = theta_functional(6);
        let neg: Vec<f64> = tau.iter().map(|t| -t).collect();
        let a = t_test(&f, &fit, &tau, 0.0, 0.05).unwrap();
        let b = t_test(&f, &fit, &neg, 0.0, 0.05).unwrap();
        assert!((a.se_theta - b.se_theta).abs() <= 1e-14 * a.se_theta);
        assert!((a.theta_hat + b.theta_hat).abs() <= 1e-14 * a.theta_hat.abs().max(1.0));
    }

    #[test]
    fn theta_functional_has_unit_norm() {
        assert_eq!(theta_functional(4), vec![0.5; 4]);
        assert_eq!(theta_functional(1), vec![1.0]);
        for p in 1..50 {
            assert!((norm2(&theta_functional(p)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_examples() {
        let s = summarize(1.0, 0.25, 1.0, 0.05, vec![1.0]).unwrap();
        assert_eq!((s.t_stat, s.p_value, s.reject), (0.0, 1.0, false));
        let s = summarize(1.96, 1.0, 0.0, 0.05, vec![1.0]).unwrap();
        assert!((s.p_value - 0.05).abs() < 1e-3);
        let s = summarize(0.5, 0.0, 0.0, 0.05, vec![1.0]).unwrap();
        assert!(s.degenerate && s.reject && s.p_value == 0.0);
        let s = summarize(0.0, 0.0, 0.0, 0.05, vec![1.0]).unwrap();
        assert!(s.degenerate && !s.reject);
        for t in [-4.0, -1.0, 0.3, 2.2, 8.0] {
            let s = summarize(t, 1.0, 0.0, 0.05, vec![1.0]).unwrap();
            assert!((0.0..=1.0).contains(&s.p_value));
            assert_eq!(s.reject, s.p_value < 0.05);
            assert_eq!(s.reject, t.abs() > critical_value(0.05));
        }
    }

    #[test]
    fn se_convention_examples() {
        let tau = theta_functional(4);
        assert_eq!(comparator_se_convention(&[true; 4], &tau), tau);
        assert_eq!(comparator_se_convention(&[false; 4], &tau), vec![0.0; 4]);
        let half = comparator_se_convention(&[true, false, true, false], &tau);
        assert!((norm2(&half) - libm::sqrt(2.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_unit_tau() {
        let f = hetero_frame(50, 3, 1, false);
        let fit = fit_gpe(&f, &GpeOptions::new(3)).unwrap();
        assert!(robust_variance(&f, &fit, &[1.0, 1.0, 0.0]).is_err());
    }
}
