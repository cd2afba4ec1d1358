//! Starting values from pairwise-fusion regression.
//!
//! Solves
//!
//! ```text
//! ½‖y − Xβ‖² + Σ_{j<j'} p_γ(|η_jj'|, λ)   subject to  β_j − β_j' = η_jj'
//! ```
//!
//! over pairs of groupable coordinates by ADMM, with `p_γ` the minimax
//! concave penalty. The pairwise-difference operator `A` is never
//! materialized: `A'A = gI − 11'` on the `g` groupable coordinates.

use alloc::vec;
use alloc::vec::Vec;

use crate::cluster1d::{group_values, GroupAssignment};
use crate::dataset::FitFrame;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

/// ADMM tuning. Defaults are `(γ, λ, ω) = (2, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdmmConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub omega: f64,
    /// Bound on both `‖Aβ − η‖` and the step `‖β⁽ˢ⁺¹⁾ − β⁽ˢ⁾‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { gamma: 2.0, lambda: 1.0, omega: 1.0, tol: 1e-6, max_iter: 500 }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::Config(alloc::format!("MCP needs gamma > 1, got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0) || !(self.omega > 0.0) {
            return Err(Error::Config("lambda must be >= 0 and omega > 0".into()));
        }
        if !(self.gamma * self.omega > 1.0) {
            return Err(Error::Config(alloc::format!(
                "gamma * omega must exceed 1, got {}",
                self.gamma * self.omega
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Final ADMM iterate and diagnostics.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub beta: Vec<f64>,
    /// Pairwise splitting variables, lexicographic over groupable pairs `j < j'`.
    pub eta: Vec<f64>,
    pub nu: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub converged: bool,
    /// Augmented Lagrangian after each iteration.
    pub lagrangian_trace: Vec<f64>,
    /// Whether the all-ones ridge had to be added to factorize the system.
    pub ridged: bool,
}

/// Minimax concave penalty `λ∫₀ᵗ (1 − u/(γλ))₊ du`.
pub fn mcp_penalty(t: f64, lambda: f64, gamma: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let t = t.abs();
    if t <= gamma * lambda {
        lambda * t - t * t / (2.0 * gamma)
    } else {
        0.5 * gamma * lambda * lambda
    }
}

#[inline]
fn firm_threshold(xi: f64, lambda: f64, gamma: f64, omega: f64) -> f64 {
    let a = xi.abs();
    if a > gamma * lambda {
        return xi;
    }
    if a == 0.0 {
        return 0.0;
    }
    let shrink = (1.0 - (lambda / omega) / a).max(0.0);
    gamma / (gamma - 1.0 / omega) * xi * shrink
}

/// Minimizer over `η` of `½ω(ξ − η)² + p_γ(|η|, λ)`: scaled soft-thresholding
/// inside `|ξ| ≤ γλ`, identity outside.
pub fn eta_update(xi: f64, lambda: f64, gamma: f64, omega: f64) -> Result<f64> {
    if !(gamma * omega > 1.0) {
        return Err(Error::Config(alloc::format!("gamma * omega must exceed 1, got {}", gamma * omega)));
    }
    Ok(firm_threshold(xi, lambda, gamma, omega))
}

/// Ordered pairs of positions into the groupable list.
fn pairs(g: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..g).flat_map(move |a| ((a + 1)..g).map(move |b| (a, b)))
}

/// `A'w` scattered onto all `p` coordinates.
fn a_transpose(groupable: &[usize], w: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for ((a, b), &v) in pairs(groupable.len()).zip(w) {
        out[groupable[a]] += v;
        out[groupable[b]] -= v;
    }
    out
}

/// Runs ADMM on the prepared frame.
///
/// Hitting `max_iter` is not an error; the last state is returned with
/// `converged = false`.
pub fn admm_fuse(frame: &FitFrame, config: &AdmmConfig) -> Result<AdmmState> {
    config.validate()?;
    let p = frame.p();
    let groupable = frame.groupable();
    let g = groupable.len();
    if p < 2 {
        return Err(Error::Config("pairwise fusion needs p >= 2".into()));
    }
    let x = frame.x();
    let y = frame.y();
    let omega = config.omega;

    let mut system = x.gram();
    for (a, &ja) in groupable.iter().enumerate() {
        for (b, &jb) in groupable.iter().enumerate() {
            let ata = if a == b { g as f64 - 1.0 } else { -1.0 };
            system.set(ja, jb, system.get(ja, jb) + omega * ata);
        }
    }
    let (chol, ridged) = match Cholesky::new(&system) {
        Ok(c) => (c, false),
        Err(_) => {
            let scale = (0..p).fold(0.0f64, |m, i| m.max(system.get(i, i)));
            let mut ridged: Matrix = system.clone();
            for &ja in groupable {
                for &jb in groupable {
                    ridged.set(ja, jb, ridged.get(ja, jb) + 1e-8 * scale);
                }
            }
            (Cholesky::new(&ridged)?, true)
        }
    };

    let xty = x.tr_mul_vec(y);
    let mut beta = chol.solve(&xty);
    let d = g * g.saturating_sub(1) / 2;
    let mut eta: Vec<f64> = pairs(g).map(|(a, b)| beta[groupable[a]] - beta[groupable[b]]).collect();
    let mut nu = vec![0.0; d];
    let mut trace = Vec::new();
    let mut primal = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    let mut w = vec![0.0; d];
    for it in 0..config.max_iter {
        iterations = it + 1;
        for ((wt, &e), &v) in w.iter_mut().zip(&eta).zip(&nu) {
            *wt = omega * e - v;
        }
        let mut rhs = a_transpose(groupable, &w, p);
        for (r, v) in rhs.iter_mut().zip(&xty) {
            *r += v;
        }
        let new_beta = chol.solve(&rhs);
        let step: f64 = new_beta.iter().zip(&beta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let step = libm::sqrt(step);
        beta = new_beta;

        let mut primal_sq = 0.0;
        let mut penalty = 0.0;
        let mut coupling = 0.0;
        for (t, (a, b)) in pairs(g).enumerate() {
            let diff = beta[groupable[a]] - beta[groupable[b]];
            // argmin over η of the augmented Lagrangian with the ν(Aβ − η) term
            let xi = diff + nu[t] / omega;
            let e = firm_threshold(xi, config.lambda, config.gamma, omega);
            let r = diff - e;
            coupling += nu[t] * r + 0.5 * omega * r * r;
            nu[t] += omega * r;
            eta[t] = e;
            primal_sq += r * r;
            penalty += mcp_penalty(e, config.lambda, config.gamma);
        }
        primal = libm::sqrt(primal_sq);
        let fitted = x.mul_vec(&beta);
        let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
        trace.push(0.5 * rss + penalty + coupling);

        if primal < config.tol && step < config.tol {
            converged = true;
            break;
        }
    }

    Ok(AdmmState { beta, eta, nu, iterations, primal_residual: primal, converged, lagrangian_trace: trace, ridged })
}

/// Starting point for the grouped fit.
#[derive(Debug, Clone)]
pub struct InitialGrouping {
    pub beta0: Vec<f64>,
    pub assignment: GroupAssignment,
    pub centers: Vec<f64>,
    /// Number of pairs with `|η| < fuse_tol` (diagnostic only).
    pub fused_pairs: usize,
}

/// Discretizes the ADMM coefficients with exact 1-D k-means at `k` free
/// groups; fixed singleton columns become their own groups.
pub fn initial_grouping(frame: &FitFrame, state: &AdmmState, fuse_tol: f64, k: usize) -> Result<InitialGrouping> {
    let fixed: Vec<bool> = (0..frame.p()).map(|j| frame.is_fixed(j)).collect();
    let (assignment, centers) = group_values(&state.beta, &fixed, k)?;
    let fused_pairs = state.eta.iter().filter(|e| e.abs() < fuse_tol).count();
    Ok(InitialGrouping { beta0: state.beta.clone(), assignment, centers, fused_pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{prepare, Dataset};
    use crate::linalg::least_squares;
    use crate::rng::Stream;
    use alloc::collections::BTreeSet;

    fn random_frame(n: usize, beta: &[f64], noise: f64, seed: u64) -> FitFrame {
        let mut s = Stream::new(seed);
        let p = beta.len();
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| s.standard_normal()).collect()).collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let mut y = x.mul_vec(beta);
        for v in &mut y {
            *v += noise * s.standard_normal();
        }
        prepare(Dataset::unnamed(y, x).unwrap(), false, &BTreeSet::new()).unwrap()
    }

    #[test]
    fn mcp_values() {
        assert_eq!(mcp_penalty(0.0, 1.0, 2.0), 0.0);
        assert_eq!(mcp_penalty(2.0, 1.0, 2.0), 1.0);
        assert_eq!(mcp_penalty(7.5, 1.0, 2.0), 1.0);
        assert_eq!(mcp_penalty(1.0, 1.0, 2.0), 0.75);
        assert_eq!(mcp_penalty(3.0, 0.0, 2.0), 0.0);
    }

    /// Trapezoidal integral of the MCP derivative.
    #[test]
    fn mcp_matches_quadrature() {
        let (lambda, gamma) = (0.7, 3.0);
        for &t in &[0.3, 1.0, 2.0, 2.5] {
            let m = 20_000;
            let h = t / m as f64;
            let f = |u: f64| lambda * (1.0 - u / (gamma * lambda)).max(0.0);
            let mut s = 0.5 * (f(0.0) + f(t));
            for i in 1..m {
                s += f(i as f64 * h);
            }
            assert!((s * h - mcp_penalty(t, lambda, gamma)).abs() < 1e-8);
        }
    }

    #[test]
    fn eta_update_examples() {
        assert_eq!(eta_update(0.0, 1.0, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(eta_update(5.0, 1.0, 2.0, 1.0).unwrap(), 5.0);
        assert!((eta_update(1.5, 1.0, 2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(eta_update(1.0, 1.0, 2.0, 0.5).is_err());
    }

    #[test]
    fn eta_update_minimizes_scalar_problem() {
        let c: f64 = 1.5;
        let objective = |e: f64| 0.5 * (c - e) * (c - e) + mcp_penalty(e.abs(), 1.0, 2.0);
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=80_000 {
            let e = -4.0 + i as f64 * 1e-4;
            let v = objective(e);
            if v < best.0 {
                best = (v, e);
            }
        }
        assert!((best.1 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_penalty_gives_ols() {
        let frame = random_frame(80, &[1.0, -0.5, 2.0, 0.3, 1.1], 0.5, 1);
        let cfg = AdmmConfig { lambda: 0.0, tol: 1e-12, max_iter: 20_000, ..Default::default() };
        let st = admm_fuse(&frame, &cfg).unwrap();
        let (ols, _) = least_squares(frame.x(), frame.y()).unwrap();
        for (a, b) in st.beta.iter().zip(&ols) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(st.converged);
        assert!(st.lagrangian_trace.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn huge_penalty_fuses_everything() {
        let frame = random_frame(100, &[1.0, 1.2, 0.8, 1.1], 0.3, 2);
        let cfg = AdmmConfig { lambda: 1e6, tol: 1e-10, max_iter: 50_000, ..Default::default() };
        let st = admm_fuse(&frame, &cfg).unwrap();
        let rowsum: Vec<f64> = (0..frame.n()).map(|i| frame.x().row(i).iter().sum()).collect();
        let slope = crate::linalg::dot(&rowsum, frame.y()) / crate::linalg::dot(&rowsum, &rowsum);
        for b in &st.beta {
            assert!((b - slope).abs() < 1e-6, "{b} vs {slope}");
        }
    }

    #[test]
    fn default_config_reaches_stationary_fusion() {
        let frame = random_frame(200, &[1.0, 1.1, 0.9, 3.0, 3.2, 2.9], 1.0, 4);
        let st = admm_fuse(&frame, &AdmmConfig::default()).unwrap();
        // with several nearly fused pairs the multipliers can cycle in the
        // cycle space of the pair graph while β itself is stationary
        let longer = admm_fuse(&frame, &AdmmConfig { max_iter: 5000, ..Default::default() }).unwrap();
        for (a, b) in st.beta.iter().zip(&longer.beta) {
            assert!((a - b).abs() < 1e-6);
        }
        let (ols, _) = least_squares(frame.x(), frame.y()).unwrap();
        // penalized coefficients stay in the neighbourhood of the data
        for (b, o) in st.beta.iter().zip(&ols) {
            assert!(b.is_finite() && (b - o).abs() < 1.0, "{b} vs {o}");
        }
        let low = st.beta[..3].iter().cloned().fold(f64::MIN, f64::max);
        let high = st.beta[3..].iter().cloned().fold(f64::MAX, f64::min);
        assert!(low < high);
    }

    #[test]
    fn separated_pair_survives_fusion() {
        let frame = random_frame(50, &[0.0, 5.0], 0.1, 3);
        let st = admm_fuse(&frame, &AdmmConfig::default()).unwrap();
        assert_eq!(st.eta.len(), 1);
        assert!(st.eta[0].abs() > 1.0);
    }

    #[test]
    fn grouping_from_state() {
        let st = AdmmState {
            beta: vec![0.01, -0.02, 4.99, 5.03],
            eta: vec![],
            nu: vec![],
            iterations: 0,
            primal_residual: 0.0,
            converged: true,
            lagrangian_trace: vec![],
            ridged: false,
        };
        let frame = random_frame(10, &[0.0; 4], 1.0, 4);
        let ig = initial_grouping(&frame, &st, 1e-3, 2).unwrap();
        assert_eq!(ig.assignment.labels(), &[0, 0, 1, 1]);
        assert!((ig.centers[0] + 0.005).abs() < 1e-12);
        assert!((ig.centers[1] - 5.01).abs() < 1e-12);
        let ig = initial_grouping(&frame, &st, 1e-3, 4).unwrap();
        assert_eq!(ig.assignment.expand(&ig.centers), st.beta);
        assert!(initial_grouping(&frame, &st, 1e-3, 5).is_err());
    }

    #[test]
    fn deterministic_trace() {
        let frame = random_frame(60, &[1.0, 1.0, 3.0, 3.0, 0.0], 0.5, 5);
        let a = admm_fuse(&frame, &AdmmConfig::default()).unwrap();
        let b = admm_fuse(&frame, &AdmmConfig::default()).unwrap();
        assert_eq!(a.lagrangian_trace, b.lagrangian_trace);
        assert!(a.primal_residual.is_finite());
    }

    #[test]
    fn wide_design_is_factorizable() {
        let beta: Vec<f64> = (0..30).map(|j| if j < 5 { 1.0 } else { 0.0 }).collect();
        let frame = random_frame(20, &beta, 0.5, 6);
        let st = admm_fuse(&frame, &AdmmConfig::default()).unwrap();
        assert!(st.beta.iter().all(|b| b.is_finite()));
    }
}
