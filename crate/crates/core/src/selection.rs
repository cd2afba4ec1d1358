//! Choice of the number of groups.
//!
//! `k̂ = min{k : n·φ̂(k) ≤ C}` where `φ̂(k)` is the relative drop in mean
//! squared residual from `k` to `k + 1` groups. Under a correctly grouped
//! model `n·φ̂(k)` behaves like a χ²₁ draw, so `C = 2.7` is roughly its 90th
//! percentile.

use alloc::vec;
use alloc::vec::Vec;

use crate::admm::admm_fuse;
use crate::cluster1d::{kmeans_1d_exact, GroupAssignment};
use crate::dataset::FitFrame;
use crate::error::{Error, Result};
use crate::gpe::{fit_gpe, GpeFit, GpeOptions, Init};
use crate::linalg::{dot, mean};

pub const DEFAULT_C: f64 = 2.7;

/// Hard cap on the candidate count.
pub const K_CAP: usize = 40;

/// Relative residual drop below which a fit counts as perfect.
const PERFECT_FIT: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionTrace {
    /// Values of k fitted, ascending.
    pub candidates: Vec<usize>,
    /// Mean squared residual per candidate.
    pub rss: Vec<f64>,
    /// `n·φ̂(k)` per consecutive pair, clamped at 0.
    pub statistic: Vec<f64>,
    /// Which statistic entries were negative before clamping.
    pub clamped: Vec<bool>,
    pub chosen_k: usize,
    pub c: f64,
    /// No candidate qualified; the largest was returned.
    pub exhausted: bool,
    /// Selection stopped because a candidate fitted the data exactly.
    pub perfect_fit: bool,
}

impl SelectionTrace {
    pub fn clamp_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

/// `φ̂(k) = (rss_k − rss_{k+1}) / rss_{k+1}`; may be negative.
pub fn phi_hat(rss_k: f64, rss_k1: f64) -> Result<f64> {
    if !(rss_k1 > 0.0) {
        return Err(Error::Config("perfect fit at k + 1: residual sum of squares is zero".into()));
    }
    Ok((rss_k - rss_k1) / rss_k1)
}

/// `n·φ̂(k)` clamped at zero, with a flag when clamping happened.
pub fn rule_statistic(n: usize, rss_k: f64, rss_k1: f64) -> Result<(f64, bool)> {
    let stat = n as f64 * phi_hat(rss_k, rss_k1)?;
    Ok((stat.max(0.0), stat < 0.0))
}

/// Index of the first statistic `≤ c`, if any.
pub fn first_below(statistic: &[f64], c: f64) -> Option<usize> {
    statistic.iter().position(|&s| s <= c)
}

/// `min(#groupable, min(p, n − 2) − #fixed, 40)`.
pub fn default_k_max(frame: &FitFrame) -> usize {
    let total = frame.p().min(frame.n().saturating_sub(2));
    frame
        .groupable()
        .len()
        .min(total.saturating_sub(frame.ungrouped().len()))
        .min(K_CAP)
}

/// Per-coordinate one-dimensional least-squares updates at the fit.
fn partial_updates(frame: &FitFrame, fit: &GpeFit) -> Vec<f64> {
    (0..frame.p())
        .map(|j| {
            let xj = frame.x().col(j);
            fit.beta_hat[j] + dot(xj, &fit.residuals) / dot(xj, xj)
        })
        .collect()
}

/// Splits the free group whose members' partial updates spread the most,
/// cutting it at its best two-means split.
pub fn split_widest_group(frame: &FitFrame, fit: &GpeFit) -> Result<GroupAssignment> {
    let a = &fit.assignment;
    let free_k = fit.k;
    let u = partial_updates(frame, fit);
    let members = a.members();
    let mut widest = None;
    let mut spread = -1.0;
    for (l, group) in members.iter().enumerate().take(free_k) {
        if group.len() < 2 {
            continue;
        }
        let (lo, hi) = group.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &j| (lo.min(u[j]), hi.max(u[j])));
        if hi - lo > spread {
            spread = hi - lo;
            widest = Some(l);
        }
    }
    let Some(l) = widest else {
        return Err(Error::InvalidK { k: free_k + 1, max: free_k });
    };
    let values: Vec<f64> = members[l].iter().map(|&j| u[j]).collect();
    let halves = kmeans_1d_exact(&values, 2)?;
    let mut labels: Vec<usize> = a.labels().iter().map(|&g| if g >= free_k { g + 1 } else { g }).collect();
    for (i, &j) in members[l].iter().enumerate() {
        if halves.assignment.label(i) == 1 {
            labels[j] = free_k;
        }
    }
    GroupAssignment::new(labels, a.k() + 1, a.fixed().to_vec())
}

/// Fits `k = k_min, k_min + 1, …` and stops at the first `k` with
/// `n·φ̂(k) ≤ c`.
///
/// The template's initializer is discretized at each candidate `k` (ADMM is
/// run once and reused).
pub fn select_k(
    frame: &FitFrame,
    c: f64,
    k_min: usize,
    k_max: usize,
    template: &GpeOptions,
) -> Result<(GpeFit, SelectionTrace)> {
    select_k_with(frame, c, k_min, k_max, template, false)
}

/// [`select_k`], optionally also trying a warm start that splits the previous
/// fit's widest group and keeping the lower objective.
///
/// The warm start makes residuals non-increasing in `k`, but a better
/// `k + 1` optimum inflates `n·φ̂(k)` beyond its χ²₁ calibration, so it is
/// off by default.
pub fn select_k_with(
    frame: &FitFrame,
    c: f64,
    k_min: usize,
    k_max: usize,
    template: &GpeOptions,
    warm_split: bool,
) -> Result<(GpeFit, SelectionTrace)> {
    if !(c > 0.0) {
        return Err(Error::Config("selection constant C must be positive".into()));
    }
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidK { k: k_min, max: k_max });
    }
    let init = match &template.init {
        Init::Admm(cfg) if k_min < k_max => Init::Provided(admm_fuse(frame, cfg)?.beta),
        other => other.clone(),
    };
    let y_scale = mean(&frame.y().iter().map(|v| v * v).collect::<Vec<_>>());

    let fit_at = |k: usize, previous: Option<&GpeFit>| -> Result<GpeFit> {
        let mut opts = template.clone();
        opts.k = k;
        opts.init = init.clone();
        let fresh = fit_gpe(frame, &opts)?;
        let Some(prev) = previous.filter(|_| warm_split) else { return Ok(fresh) };
        let warm = split_widest_group(frame, prev).and_then(|a| fit_gpe(frame, &opts.clone().with_init(Init::Assignment(a))));
        match warm {
            Ok(w) if w.objective < fresh.objective => Ok(w),
            _ => Ok(fresh),
        }
    };

    let mut trace = SelectionTrace {
        candidates: vec![k_min],
        rss: Vec::new(),
        statistic: Vec::new(),
        clamped: Vec::new(),
        chosen_k: k_max,
        c,
        exhausted: false,
        perfect_fit: false,
    };
    let mut current = fit_at(k_min, None)?;
    trace.rss.push(current.mean_squared_residual());
    for k in k_min..k_max {
        let next = fit_at(k + 1, Some(&current))?;
        let rss_k = current.mean_squared_residual();
        let rss_k1 = next.mean_squared_residual();
        trace.candidates.push(k + 1);
        trace.rss.push(rss_k1);
        if rss_k1 <= PERFECT_FIT * y_scale {
            trace.chosen_k = k + 1;
            trace.perfect_fit = true;
            return Ok((next, trace));
        }
        let (stat, clamped) = rule_statistic(frame.n(), rss_k, rss_k1)?;
        trace.clamped.push(clamped);
        trace.statistic.push(stat);
        if stat <= c {
            trace.chosen_k = k;
            return Ok((current, trace));
        }
        current = next;
    }
    trace.chosen_k = k_max;
    trace.exhausted = true;
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{prepare, Dataset};
    use crate::linalg::Matrix;
    use crate::rng::Stream;
    use alloc::collections::BTreeSet;

    fn data(n: usize, beta: &[f64], noise: f64, seed: u64) -> (Matrix, Vec<f64>) {
        let mut s = Stream::new(seed);
        let cols: Vec<Vec<f64>> = (0..beta.len()).map(|_| (0..n).map(|_| s.standard_normal()).collect()).collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let mut y = x.mul_vec(beta);
        for v in &mut y {
            *v += noise * s.standard_normal();
        }
        (x, y)
    }

    fn frame(x: Matrix, y: Vec<f64>) -> FitFrame {
        prepare(Dataset::unnamed(y, x).unwrap(), true, &BTreeSet::new()).unwrap()
    }

    #[test]
    fn phi_hat_examples() {
        assert_eq!(phi_hat(2.0, 2.0).unwrap(), 0.0);
        assert!((phi_hat(1.2, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((phi_hat(0.9, 1.0).unwrap() + 0.1).abs() < 1e-15);
        assert!(phi_hat(1.0, 0.0).is_err());
    }

    #[test]
    fn underfit_is_never_chosen() {
        let beta: Vec<f64> = (0..12).map(|j| if j < 6 { 0.0 } else { 1.0 }).collect();
        let (x, y) = data(300, &beta, 1.0, 3);
        let f = frame(x, y);
        let (fit, trace) = select_k(&f, DEFAULT_C, 1, default_k_max(&f), &GpeOptions::new(1)).unwrap();
        assert!(trace.statistic[0] > 100.0);
        assert!(trace.chosen_k >= 2);
        assert_eq!(fit.k, trace.chosen_k);
        assert_eq!(trace.rss.len(), trace.statistic.len() + 1);
        assert_eq!(trace.candidates.len(), trace.rss.len());
        assert_eq!(first_below(&trace.statistic, DEFAULT_C).map(|i| trace.candidates[i]), Some(trace.chosen_k));
    }

    /// With two coefficients there is a single two-group partition, so the
    /// statistic is the likelihood-ratio statistic for equal slopes and the
    /// χ²₁ calibration applies: about 90% of pure-noise samples stop at k = 1.
    #[test]
    fn chi2_calibration_with_single_partition() {
        let reps = 400;
        let mut accepted = 0;
        for seed in 0..reps {
            let (x, y) = data(500, &[0.0, 0.0], 1.0, 1000 + seed);
            let f = frame(x, y);
            let (_, t) = select_k(&f, DEFAULT_C, 1, 2, &GpeOptions::new(1)).unwrap();
            accepted += usize::from(t.chosen_k == 1);
        }
        let rate = accepted as f64 / reps as f64;
        assert!((rate - 0.9).abs() < 0.05, "acceptance {rate}");
    }

    #[test]
    fn negative_drop_is_clamped() {
        let beta = [0.0, 0.0, 0.0, 3.0, 3.0, 3.0];
        let (x, y) = data(100, &beta, 0.5, 6);
        let f = frame(x, y);
        let good = fit_gpe(&f, &GpeOptions::new(2)).unwrap();
        // A three-group partition that cuts across the true groups.
        let bad = GroupAssignment::new(vec![0, 1, 2, 0, 1, 2], 3, vec![false; 6]).unwrap();
        let delta = crate::gpe::solve_delta(&f, &bad).unwrap();
        let rss_bad = crate::gpe::objective(&f, &bad, &delta).unwrap() * 6.0;
        let (stat, clamped) = rule_statistic(f.n(), good.mean_squared_residual(), rss_bad).unwrap();
        assert!(clamped);
        assert_eq!(stat, 0.0);
        assert_eq!(first_below(&[stat], DEFAULT_C), Some(0));
    }

    #[test]
    fn scale_invariance_with_equivariant_start() {
        let beta: Vec<f64> = (0..9).map(|j| [0.0, 0.6, 1.5][j % 3]).collect();
        let (x, y) = data(150, &beta, 1.0, 5);
        let base_start: Vec<f64> = beta.iter().map(|b| b + 0.05).collect();
        let reference = {
            let f = frame(x.clone(), y.clone());
            let opts = GpeOptions::new(1).with_init(Init::Provided(base_start.clone()));
            select_k(&f, 1e6, 1, 6, &opts).unwrap().1
        };
        for c in [-3.5, 1e3, 1e-3] {
            let f = frame(x.clone(), y.iter().map(|v| v * c).collect());
            let start = base_start.iter().map(|b| b * c).collect();
            let opts = GpeOptions::new(1).with_init(Init::Provided(start));
            let t = select_k(&f, 1e6, 1, 6, &opts).unwrap().1;
            assert_eq!(t.chosen_k, reference.chosen_k);
            for (a, b) in t.statistic.iter().zip(&reference.statistic) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn chosen_k_non_increasing_in_c() {
        let beta: Vec<f64> = (0..15).map(|j| (j as f64 / 5.0).floor() * 0.4).collect();
        let (x, y) = data(200, &beta, 1.0, 9);
        let f = frame(x, y);
        let mut last = usize::MAX;
        for c in [0.5, 1.0, 2.7, 5.0, 20.0, 1e3] {
            let (_, t) = select_k(&f, c, 1, 10, &GpeOptions::new(1)).unwrap();
            assert!(t.chosen_k <= last);
            last = t.chosen_k;
        }
    }

    #[test]
    fn rss_non_increasing_with_warm_start() {
        let beta: Vec<f64> = (0..20).map(|j| j as f64 / 10.0).collect();
        let (x, y) = data(120, &beta, 1.0, 2);
        let f = frame(x, y);
        let (_, t) = select_k_with(&f, 1e-9, 1, 10, &GpeOptions::new(1), true).unwrap();
        assert!(t.exhausted);
        assert_eq!(t.chosen_k, 10);
        for w in t.rss.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn perfect_fit_short_circuits() {
        let beta: Vec<f64> = (0..6).map(|j| if j < 3 { -1.0 } else { 2.0 }).collect();
        let (x, y) = data(40, &beta, 0.0, 4);
        let f = frame(x, y);
        let (fit, t) = select_k(&f, DEFAULT_C, 1, 4, &GpeOptions::new(1)).unwrap();
        assert!(t.perfect_fit);
        assert_eq!(t.chosen_k, 2);
        assert!((fit.beta_hat[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn split_respects_fixed_singletons() {
        let (x, y) = data(80, &[0.0, 0.0, 1.0, 1.0, 3.0], 0.3, 8);
        let d = Dataset::unnamed(y, x).unwrap();
        let f = prepare(d, true, &BTreeSet::from([4])).unwrap();
        let fit = fit_gpe(&f, &GpeOptions::new(1)).unwrap();
        let a = split_widest_group(&f, &fit).unwrap();
        assert_eq!(a.k(), 3);
        assert_eq!(a.free_groups(), 2);
        assert_eq!(a.label(4), 2);
        assert!(a.label(0) == a.label(1) && a.label(2) == a.label(3) && a.label(0) != a.label(2));
    }

    #[test]
    fn invalid_ranges() {
        let (x, y) = data(30, &[1.0, 2.0, 3.0], 1.0, 1);
        let f = frame(x, y);
        assert!(select_k(&f, DEFAULT_C, 0, 2, &GpeOptions::new(1)).is_err());
        assert!(select_k(&f, DEFAULT_C, 3, 2, &GpeOptions::new(1)).is_err());
        assert!(select_k(&f, -1.0, 1, 2, &GpeOptions::new(1)).is_err());
    }
}
