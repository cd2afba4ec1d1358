//! Exact univariate k-means and group bookkeeping.
//!
//! Least-squares partitions of a line are contiguous in sorted order, so the
//! optimal k-group clustering is found by a dynamic program over prefix sums
//! in `O(k p²)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Map from coefficients to groups. Labels are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupAssignment {
    labels: Vec<usize>,
    k: usize,
    sizes: Vec<usize>,
    fixed: Vec<bool>,
}

impl GroupAssignment {
    /// Validates that every group `0..k` is non-empty and every fixed
    /// coordinate sits alone in its group.
    pub fn new(labels: Vec<usize>, k: usize, fixed: Vec<bool>) -> Result<Self> {
        if fixed.len() != labels.len() {
            return Err(Error::Dimension(alloc::format!(
                "{} labels but {} fixed flags",
                labels.len(),
                fixed.len()
            )));
        }
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InvalidK { k: l + 1, max: k });
            }
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Config(alloc::format!("group {empty} is empty")));
        }
        for (j, &f) in fixed.iter().enumerate() {
            if f && sizes[labels[j]] != 1 {
                return Err(Error::Config(alloc::format!("fixed coordinate {j} shares its group")));
            }
        }
        Ok(Self { labels, k, sizes, fixed })
    }

    /// Every coordinate in its own group, in index order.
    pub fn identity(p: usize) -> Self {
        Self { labels: (0..p).collect(), k: p, sizes: vec![1; p], fixed: vec![false; p] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }

    /// Number of groups made of freely assigned coordinates.
    pub fn free_groups(&self) -> usize {
        self.k - self.fixed.iter().filter(|&&f| f).count()
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Members of each group, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (j, &l) in self.labels.iter().enumerate() {
            out[l].push(j);
        }
        out
    }

    /// Expands group values to coordinates: `β_j = δ[label_j]`.
    pub fn expand(&self, delta: &[f64]) -> Vec<f64> {
        self.labels.iter().map(|&l| delta[l]).collect()
    }

    /// True when both assignments induce the same partition (labels may differ).
    pub fn same_partition(&self, other: &Self) -> bool {
        if self.p() != other.p() || self.k != other.k {
            return false;
        }
        let mut map = vec![usize::MAX; self.k];
        for (a, b) in self.labels.iter().zip(&other.labels) {
            if map[*a] == usize::MAX {
                map[*a] = *b;
            } else if map[*a] != *b {
                return false;
            }
        }
        true
    }
}

/// Result of [`kmeans_1d_exact`].
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering1D {
    pub assignment: GroupAssignment,
    /// Group means, ascending.
    pub centers: Vec<f64>,
    /// Within-group sum of squared deviations.
    pub wss: f64,
}

/// Globally optimal k-group clustering of `values` under squared loss.
///
/// Labels follow the original index order; group 0 holds the smallest
/// center. With fewer distinct values than `k`, runs of duplicates are split
/// so that every group stays non-empty.
pub fn kmeans_1d_exact(values: &[f64], k: usize) -> Result<Clustering1D> {
    let p = values.len();
    if k < 1 || k > p {
        return Err(Error::InvalidK { k, max: p });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let shift = values.iter().sum::<f64>() / p as f64;
    let sorted: Vec<f64> = order.iter().map(|&i| values[i] - shift).collect();

    let mut s1 = vec![0.0; p + 1];
    let mut s2 = vec![0.0; p + 1];
    for (i, v) in sorted.iter().enumerate() {
        s1[i + 1] = s1[i] + v;
        s2[i + 1] = s2[i] + v * v;
    }
    // Cost of the segment sorted[a..b].
    let cost = |a: usize, b: usize| -> f64 {
        let m = (b - a) as f64;
        let s = s1[b] - s1[a];
        (s2[b] - s2[a] - s * s / m).max(0.0)
    };

    // best[g][j]: optimal cost of the first j sorted values in g+1 groups.
    let mut best = vec![vec![f64::INFINITY; p + 1]; k];
    let mut split = vec![vec![0usize; p + 1]; k];
    for j in 1..=p {
        best[0][j] = cost(0, j);
    }
    for g in 1..k {
        for j in (g + 1)..=p {
            let mut b = f64::INFINITY;
            let mut arg = g;
            for i in g..j {
                let c = best[g - 1][i] + cost(i, j);
                if c < b {
                    b = c;
                    arg = i;
                }
            }
            best[g][j] = b;
            split[g][j] = arg;
        }
    }

    let mut bounds = vec![0usize; k + 1];
    bounds[k] = p;
    let mut j = p;
    for g in (1..k).rev() {
        j = split[g][j];
        bounds[g] = j;
    }

    let mut labels = vec![0usize; p];
    let mut centers = vec![0.0; k];
    for g in 0..k {
        let seg = &order[bounds[g]..bounds[g + 1]];
        let sum: f64 = seg.iter().map(|&i| values[i]).sum();
        centers[g] = sum / seg.len() as f64;
        for &i in seg {
            labels[i] = g;
        }
    }
    let wss = values
        .iter()
        .zip(&labels)
        .map(|(v, &l)| (v - centers[l]) * (v - centers[l]))
        .sum();
    let assignment = GroupAssignment::new(labels, k, vec![false; p])?;
    Ok(Clustering1D { assignment, centers, wss })
}

/// Clusters the free coordinates of `values` into `k` groups and appends
/// each fixed coordinate as its own group (labels `k..`, in index order).
///
/// Returns the assignment and the group centers; a fixed group's center is
/// its coordinate value.
pub fn group_values(values: &[f64], fixed: &[bool], k: usize) -> Result<(GroupAssignment, Vec<f64>)> {
    if values.len() != fixed.len() {
        return Err(Error::Dimension("values and fixed flags differ in length".into()));
    }
    let free: Vec<usize> = (0..values.len()).filter(|&j| !fixed[j]).collect();
    let n_fixed = values.len() - free.len();
    if k > free.len() || (k == 0 && !free.is_empty()) {
        return Err(Error::InvalidK { k, max: free.len() });
    }
    let mut labels = vec![0usize; values.len()];
    let mut centers = Vec::with_capacity(k + n_fixed);
    if !free.is_empty() {
        let sub: Vec<f64> = free.iter().map(|&j| values[j]).collect();
        let c = kmeans_1d_exact(&sub, k)?;
        for (pos, &j) in free.iter().enumerate() {
            labels[j] = c.assignment.label(pos);
        }
        centers.extend_from_slice(&c.centers);
    }
    for (j, _) in fixed.iter().enumerate().filter(|(_, &f)| f) {
        labels[j] = centers.len();
        centers.push(values[j]);
    }
    let total = centers.len();
    Ok((GroupAssignment::new(labels, total, fixed.to_vec())?, centers))
}

/// Index of the center nearest to `value`; ties go to the smaller index.
pub fn nearest_center(value: f64, centers: &[f64]) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (l, c) in centers.iter().enumerate() {
        let d = (value - c).abs();
        if d < dist {
            dist = d;
            best = l;
        }
    }
    best
}

/// Upper bound `4 C_b² M² p / k²` on the within-group sum of squares of a
/// k-group clustering of values bounded by `c_b`, with `M` the largest group.
pub fn approx_bias_bound(values: &[f64], clustering: &Clustering1D, c_b: f64) -> Result<f64> {
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| v.abs() > c_b) {
        return Err(Error::BoundViolated { index, value, bound: c_b });
    }
    if clustering.assignment.p() != values.len() {
        return Err(Error::Dimension("clustering does not match values".into()));
    }
    let m = clustering.assignment.max_size() as f64;
    let k = clustering.assignment.k() as f64;
    Ok(4.0 * c_b * c_b * m * m * values.len() as f64 / (k * k))
}

/// Number of distinct values (exact comparison).
pub fn distinct_count(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}
