//! The grouped parameter estimator.
//!
//! Minimizes `Q_n(mδ) = E_n[(y − x m δ)²] / p` over group assignments `m`
//! and group values `δ` by alternating two steps:
//!
//! * sweep the groupable coordinates in index order, replacing each by its
//!   one-dimensional least-squares update on the partial residual and moving
//!   it to the group with the nearest running mean;
//! * re-solve `δ` by least squares on the aggregated design `X m`.
//!
//! Fixed singleton columns keep their own group throughout and are only
//! updated in the second step. The best iterate seen is returned, since the
//! unweighted reassignment is not guaranteed to decrease `Q_n`.

use alloc::vec;
use alloc::vec::Vec;

use crate::admm::{admm_fuse, AdmmConfig};
use crate::cluster1d::{group_values, GroupAssignment};
use crate::dataset::FitFrame;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix, Qr};

/// How the first assignment is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Pairwise-fusion ADMM coefficients discretized at `k`.
    Admm(AdmmConfig),
    /// User-supplied starting coefficients, discretized at `k`.
    Provided(Vec<f64>),
    /// The true coefficient vector (infeasible benchmark), discretized at `k`.
    Oracle(Vec<f64>),
    /// A ready-made assignment with `k` free groups.
    Assignment(GroupAssignment),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpeOptions {
    /// Number of groups among the groupable coordinates.
    pub k: usize,
    /// Maximum number of sweeps.
    pub max_iter: usize,
    /// Convergence threshold on the decrease of `Q_n` between sweeps.
    pub tol: f64,
    pub init: Init,
    /// Always true: the best-objective iterate is returned.
    pub track_best: bool,
}

impl GpeOptions {
    pub fn new(k: usize) -> Self {
        Self { k, max_iter: 100, tol: 1e-8, init: Init::Admm(AdmmConfig::default()), track_best: true }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// A fitted grouped model.
#[derive(Debug, Clone)]
pub struct GpeFit {
    /// `β̂ = m̂ δ̂` on the working (centered) scale.
    pub beta_hat: Vec<f64>,
    pub assignment: GroupAssignment,
    /// One value per group, fixed singletons last.
    pub delta_hat: Vec<f64>,
    /// `ȳ − x̄'β̂` when an intercept was requested, else 0.
    pub intercept_hat: f64,
    pub residuals: Vec<f64>,
    /// `Q_n` at the returned iterate.
    pub objective: f64,
    /// `Q_n` after initialization and after every sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of free groups.
    pub k: usize,
    /// Coordinate values feeding the returned assignment: the last sweep's
    /// one-dimensional updates, or the starting coefficients.
    pub coordinate_updates: Vec<f64>,
}

impl GpeFit {
    /// Mean squared residual `E_n[ε̂²]`.
    pub fn mean_squared_residual(&self) -> f64 {
        self.objective * self.beta_hat.len() as f64
    }
}

/// Columns of `X m`: within-group sums of covariate columns.
pub fn grouped_design(frame: &FitFrame, assignment: &GroupAssignment) -> Result<Matrix> {
    let (n, p) = (frame.n(), frame.p());
    if assignment.p() != p {
        return Err(Error::Dimension(alloc::format!("assignment covers {} of {p} columns", assignment.p())));
    }
    let mut g = Matrix::zeros(n, assignment.k());
    for j in 0..p {
        let l = assignment.label(j);
        axpy(1.0, frame.x().col(j), g.col_mut(l));
    }
    Ok(g)
}

/// Least-squares group values for a fixed assignment.
pub fn solve_delta(frame: &FitFrame, assignment: &GroupAssignment) -> Result<Vec<f64>> {
    let g = grouped_design(frame, assignment)?;
    if g.cols() > frame.n() {
        return Err(Error::RankDeficient(0.0));
    }
    Qr::new(&g)?.solve(frame.y())
}

fn residuals_of(frame: &FitFrame, beta: &[f64]) -> Vec<f64> {
    let fitted = frame.x().mul_vec(beta);
    frame.y().iter().zip(&fitted).map(|(y, f)| y - f).collect()
}

fn q_from_residuals(r: &[f64], p: usize) -> f64 {
    dot(r, r) / (r.len() as f64 * p as f64)
}

/// `Q_n(mδ)`: mean squared residual divided by `p`.
pub fn objective(frame: &FitFrame, assignment: &GroupAssignment, delta: &[f64]) -> Result<f64> {
    if delta.len() != assignment.k() {
        return Err(Error::Dimension(alloc::format!("{} group values for {} groups", delta.len(), assignment.k())));
    }
    let beta = assignment.expand(delta);
    Ok(q_from_residuals(&residuals_of(frame, &beta), frame.p()))
}

/// One-dimensional least-squares coefficient of the partial residual
/// `y − X_{−j} β_{−j}` on column `j`.
pub fn update_coefficient(frame: &FitFrame, j: usize, beta_working: &[f64]) -> Result<f64> {
    if j >= frame.p() {
        return Err(Error::ColumnIndex { index: j, p: frame.p() });
    }
    let xj = frame.x().col(j);
    let ss = dot(xj, xj);
    if ss == 0.0 {
        return Err(Error::ZeroVariance(j));
    }
    let r = residuals_of(frame, beta_working);
    Ok(beta_working[j] + dot(xj, &r) / ss)
}

fn starting_assignment(frame: &FitFrame, options: &GpeOptions, fixed: &[bool]) -> Result<(GroupAssignment, Vec<f64>)> {
    let k = options.k;
    let free = frame.groupable().len();
    if k == 1 || k == free {
        // Only one partition exists.
        let values: Vec<f64> = (0..frame.p()).map(|j| if k == 1 { 0.0 } else { j as f64 }).collect();
        let (a, _) = group_values(&values, fixed, k)?;
        let raw = match &options.init {
            Init::Provided(b) | Init::Oracle(b) if b.len() == frame.p() => b.clone(),
            _ => vec![f64::NAN; frame.p()],
        };
        return Ok((a, raw));
    }
    match &options.init {
        Init::Admm(cfg) => {
            let state = admm_fuse(frame, cfg)?;
            let (a, _) = group_values(&state.beta, fixed, k)?;
            Ok((a, state.beta))
        }
        Init::Provided(b) | Init::Oracle(b) => {
            if b.len() != frame.p() {
                return Err(Error::Dimension(alloc::format!("start has {} entries, p = {}", b.len(), frame.p())));
            }
            let (a, _) = group_values(b, fixed, k)?;
            Ok((a, b.clone()))
        }
        Init::Assignment(a) => {
            if a.p() != frame.p() || a.fixed() != fixed || a.free_groups() != k {
                return Err(Error::Config("provided assignment does not match the frame and k".into()));
            }
            Ok((a.clone(), vec![f64::NAN; frame.p()]))
        }
    }
}

/// Checks `1 ≤ k ≤ #groupable` and `k + #fixed ≤ min(p, n − 2)`.
pub fn validate_k(frame: &FitFrame, k: usize) -> Result<()> {
    let free = frame.groupable().len();
    let total_max = frame.p().min(frame.n().saturating_sub(2));
    let fixed = frame.ungrouped().len();
    let max = free.min(total_max.saturating_sub(fixed));
    if k == 0 || k > max {
        return Err(Error::InvalidK { k, max });
    }
    Ok(())
}

struct Iterate {
    labels: Vec<usize>,
    delta: Vec<f64>,
    residuals: Vec<f64>,
    objective: f64,
    raw: Vec<f64>,
}

/// Running group sums and counts over the working coefficients.
struct RunningMeans {
    sum: Vec<f64>,
    count: Vec<usize>,
}

impl RunningMeans {
    fn nearest(&self, value: f64, free_k: usize) -> usize {
        let mut best = usize::MAX;
        let mut dist = f64::INFINITY;
        for l in 0..free_k {
            if self.count[l] == 0 {
                continue;
            }
            let d = (value - self.sum[l] / self.count[l] as f64).abs();
            if d < dist {
                dist = d;
                best = l;
            }
        }
        best
    }

    fn center(&self, l: usize) -> f64 {
        self.sum[l] / self.count[l] as f64
    }
}

/// Moves, into each empty free group, the coordinate deviating most from its
/// own group's mean (among groups with at least two members).
fn repair_empty_groups(labels: &mut [usize], working: &[f64], free: &[usize], means: &mut RunningMeans, free_k: usize) {
    while let Some(empty) = (0..free_k).find(|&l| means.count[l] == 0) {
        let mut pick = None;
        let mut worst = -1.0;
        for &j in free {
            let l = labels[j];
            if means.count[l] < 2 {
                continue;
            }
            let dev = (working[j] - means.center(l)).abs();
            if dev > worst {
                worst = dev;
                pick = Some(j);
            }
        }
        let Some(j) = pick else { return };
        let src = labels[j];
        means.sum[src] -= working[j];
        means.count[src] -= 1;
        means.sum[empty] += working[j];
        means.count[empty] += 1;
        labels[j] = empty;
    }
}

/// Fits the grouped estimator with `options.k` free groups.
pub fn fit_gpe(frame: &FitFrame, options: &GpeOptions) -> Result<GpeFit> {
    validate_k(frame, options.k)?;
    if options.max_iter == 0 || !(options.tol >= 0.0) {
        return Err(Error::Config("max_iter must be positive and tol non-negative".into()));
    }
    let p = frame.p();
    let fixed: Vec<bool> = (0..p).map(|j| frame.is_fixed(j)).collect();
    let free = frame.groupable();
    let free_k = options.k;
    let k_total = free_k + frame.ungrouped().len();

    let (start, start_raw) = starting_assignment(frame, options, &fixed)?;
    let mut assignment = start;
    let mut delta = solve_delta(frame, &assignment)?;
    let mut working = assignment.expand(&delta);
    let mut resid = residuals_of(frame, &working);
    let mut obj = q_from_residuals(&resid, p);

    let mut best = Iterate {
        labels: assignment.labels().to_vec(),
        delta: delta.clone(),
        residuals: resid.clone(),
        objective: obj,
        raw: start_raw,
    };
    let mut trace = vec![obj];
    let col_ss: Vec<f64> = (0..p).map(|j| dot(frame.x().col(j), frame.x().col(j))).collect();

    let mut converged = false;
    let mut iterations = 0;
    let mut labels = assignment.labels().to_vec();
    for sweep in 1..=options.max_iter {
        iterations = sweep;
        let previous = labels.clone();

        let mut means = RunningMeans { sum: vec![0.0; free_k], count: vec![0; free_k] };
        for &j in free {
            means.sum[labels[j]] += working[j];
            means.count[labels[j]] += 1;
        }
        for &j in free {
            let xj = frame.x().col(j);
            let old = working[j];
            let updated = old + dot(xj, &resid) / col_ss[j];
            axpy(old - updated, xj, &mut resid);
            working[j] = updated;

            let src = labels[j];
            let dst = means.nearest(updated, free_k);
            means.sum[src] -= old;
            means.count[src] -= 1;
            means.sum[dst] += updated;
            means.count[dst] += 1;
            labels[j] = dst;
        }
        repair_empty_groups(&mut labels, &working, free, &mut means, free_k);
        let raw = working.clone();

        assignment = GroupAssignment::new(labels.clone(), k_total, fixed.clone())?;
        delta = solve_delta(frame, &assignment)?;
        working = assignment.expand(&delta);
        resid = residuals_of(frame, &working);
        let new_obj = q_from_residuals(&resid, p);
        trace.push(new_obj);

        if new_obj < best.objective {
            best = Iterate {
                labels: labels.clone(),
                delta: delta.clone(),
                residuals: resid.clone(),
                objective: new_obj,
                raw,
            };
        }
        let improvement = obj - new_obj;
        obj = new_obj;
        if labels == previous && improvement < options.tol {
            converged = true;
            break;
        }
    }

    let assignment = GroupAssignment::new(best.labels, k_total, fixed)?;
    let beta_hat = assignment.expand(&best.delta);
    let intercept_hat = if frame.intercept() {
        frame.y_mean() - dot(frame.column_means(), &beta_hat)
    } else {
        0.0
    };
    Ok(GpeFit {
        beta_hat,
        assignment,
        delta_hat: best.delta,
        intercept_hat,
        residuals: best.residuals,
        objective: best.objective,
        objective_trace: trace,
        iterations,
        converged,
        k: free_k,
        coordinate_updates: best.raw,
    })
}

/// Coefficients and intercept on the scale of the original data.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OriginalScale {
    pub beta: Vec<f64>,
    /// 0 when no intercept was fitted.
    pub intercept: f64,
    pub has_intercept: bool,
}

/// Undoes centering. Slopes are unchanged; only the intercept moves.
pub fn fitted_beta_original_scale(fit: &GpeFit, frame: &FitFrame) -> Result<OriginalScale> {
    if fit.beta_hat.len() != frame.p() || fit.residuals.len() != frame.n() {
        return Err(Error::Dimension("fit does not belong to this frame".into()));
    }
    let intercept = if frame.intercept() {
        frame.y_mean() - dot(frame.column_means(), &fit.beta_hat)
    } else {
        0.0
    };
    Ok(OriginalScale { beta: fit.beta_hat.clone(), intercept, has_intercept: frame.intercept() })
}
