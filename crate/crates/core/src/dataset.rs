//! Regression data and the working frame every estimator consumes.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{mean, Matrix};

/// Response vector and covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Matrix,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Matrix, column_names: Vec<String>) -> Result<Self> {
        let n = y.len();
        if x.rows() != n {
            return Err(Error::Dimension(alloc::format!("y has {n} rows but X has {}", x.rows())));
        }
        if n < 3 {
            return Err(Error::TooFewObservations { n, min: 3 });
        }
        if x.cols() == 0 {
            return Err(Error::Dimension("X has no columns".into()));
        }
        if column_names.len() != x.cols() {
            return Err(Error::Dimension(alloc::format!(
                "{} column names for {} columns",
                column_names.len(),
                x.cols()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: usize::MAX });
        }
        for j in 0..x.cols() {
            if let Some(i) = x.col(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        Ok(Self { y, x, column_names })
    }

    /// Dataset with generated names `x1..xp`.
    pub fn unnamed(y: Vec<f64>, x: Matrix) -> Result<Self> {
        let names = (1..=x.cols()).map(|j| alloc::format!("x{j}")).collect();
        Self::new(y, x, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

/// Prepared design: centered when an intercept is requested, with the
/// fixed singleton columns recorded.
#[derive(Debug, Clone)]
pub struct FitFrame {
    dataset: Dataset,
    x: Matrix,
    y: Vec<f64>,
    centered: bool,
    intercept: bool,
    column_means: Vec<f64>,
    y_mean: f64,
    ungrouped: Vec<usize>,
    groupable: Vec<usize>,
}

/// Centers the design when `intercept` is set and marks `ungrouped`
/// (0-based) columns as fixed singleton groups.
///
/// The intercept is never a physical column: with centered data it is
/// recovered after the fit as `ȳ − x̄'β̂`.
pub fn prepare(dataset: Dataset, intercept: bool, ungrouped: &BTreeSet<usize>) -> Result<FitFrame> {
    let p = dataset.p();
    if let Some(&bad) = ungrouped.iter().find(|&&j| j >= p) {
        return Err(Error::ColumnIndex { index: bad, p });
    }
    let mut x = dataset.x().clone();
    let mut y = dataset.y().to_vec();
    let mut column_means = alloc::vec![0.0; p];
    let mut y_mean = 0.0;
    for j in 0..p {
        let col = x.col(j);
        let m = mean(col);
        let spread = col.iter().fold(0.0f64, |acc, v| acc.max((v - m).abs()));
        let constant = spread <= 1e-12 * m.abs().max(1.0);
        if constant && (!ungrouped.contains(&j) || intercept) {
            return Err(Error::ZeroVariance(j));
        }
        if ungrouped.contains(&j) && col.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroVariance(j));
        }
        if intercept {
            column_means[j] = m;
            for v in x.col_mut(j) {
                *v -= m;
            }
        }
    }
    if intercept {
        y_mean = mean(&y);
        for v in &mut y {
            *v -= y_mean;
        }
    }
    let groupable = (0..p).filter(|j| !ungrouped.contains(j)).collect();
    Ok(FitFrame {
        dataset,
        x,
        y,
        centered: intercept,
        intercept,
        column_means,
        y_mean,
        ungrouped: ungrouped.iter().copied().collect(),
        groupable,
    })
}

impl FitFrame {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Working design (centered when `centered()`).
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    /// Working response (centered when an intercept is fitted).
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    /// Fixed singleton columns, ascending.
    pub fn ungrouped(&self) -> &[usize] {
        &self.ungrouped
    }

    /// Columns subject to clustering, ascending.
    pub fn groupable(&self) -> &[usize] {
        &self.groupable
    }

    pub fn is_fixed(&self, j: usize) -> bool {
        self.ungrouped.binary_search(&j).is_ok()
    }

    /// The working design and response as a plain dataset.
    pub fn working_dataset(&self) -> Dataset {
        Dataset {
            y: self.y.clone(),
            x: self.x.clone(),
            column_names: self.dataset.column_names.clone(),
        }
    }

    /// Same data with a different set of fixed singleton columns.
    pub fn with_ungrouped(&self, ungrouped: &BTreeSet<usize>) -> Result<FitFrame> {
        prepare(self.dataset.clone(), self.intercept, ungrouped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy() -> Dataset {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![0.5, -1.0, 4.0]]).unwrap();
        Dataset::unnamed(vec![1.0, 0.0, 2.0], x).unwrap()
    }

    #[test]
    fn centers_with_intercept() {
        let f = prepare(toy(), true, &BTreeSet::new()).unwrap();
        assert_eq!(f.x().col(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(f.column_means()[0], 2.0);
        assert!((f.y_mean() - 1.0).abs() < 1e-15);
        assert!(f.centered());
    }

    #[test]
    fn untouched_without_intercept() {
        let d = toy();
        let f = prepare(d.clone(), false, &BTreeSet::new()).unwrap();
        assert_eq!(f.x(), d.x());
        assert_eq!(f.y(), d.y());
    }

    #[test]
    fn ungrouped_marks_fixed_singleton() {
        let f = prepare(toy(), true, &BTreeSet::from([1])).unwrap();
        assert!(f.is_fixed(1));
        assert_eq!(f.groupable(), &[0]);
        assert!(matches!(
            prepare(toy(), true, &BTreeSet::from([2])),
            Err(Error::ColumnIndex { index: 2, p: 2 })
        ));
    }

    #[test]
    fn zero_variance_rejected() {
        let x = Matrix::from_columns(&[vec![2.0, 2.0, 2.0], vec![1.0, 2.0, 0.0]]).unwrap();
        let d = Dataset::unnamed(vec![1.0, 2.0, 3.0], x).unwrap();
        let err = prepare(d, true, &BTreeSet::new()).unwrap_err();
        assert_eq!(err, Error::ZeroVariance(0));
        assert!(alloc::format!("{err}").contains("zero-variance column"));
    }

    #[test]
    fn invalid_datasets() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(Dataset::unnamed(vec![1.0, 2.0], x), Err(Error::TooFewObservations { .. })));
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 3.0]]).unwrap();
        let names = vec!["a".into(), "a".into()];
        assert!(matches!(Dataset::new(vec![0.0; 3], x.clone(), names), Err(Error::DuplicateColumn(_))));
        assert!(matches!(
            Dataset::unnamed(vec![0.0, f64::NAN, 1.0], x),
            Err(Error::NonFinite { row: 1, .. })
        ));
    }

    #[test]
    fn prepare_is_idempotent() {
        let f = prepare(toy(), true, &BTreeSet::new()).unwrap();
        let g = prepare(f.working_dataset(), true, &BTreeSet::new()).unwrap();
        for (a, b) in f.x().as_slice().iter().zip(g.x().as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in f.y().iter().zip(g.y()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
