use nalgebra::{DMatrix, DVector};

use crate::filter::MeasurementMoments;
use crate::linalg::{outer, symmetrize};

/// Deterministic sample set stored as a center plus exact offsets, so deviations
/// from the center never suffer cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet {
    pub center: DVector<f64>,
    /// `offsets[i]` is `X_i - center`; a zero offset marks the central point.
    pub offsets: Vec<DVector<f64>>,
    /// Mean weights, summing to one.
    pub w_mean: Vec<f64>,
    pub w_cov: Vec<f64>,
}

impl SigmaSet {
    /// `center +- scale * L_i` for every column of the lower factor, with an
    /// optional central point first.
    pub fn symmetric(
        center: &DVector<f64>,
        factor: &DMatrix<f64>,
        scale: f64,
        central: bool,
        w_mean: Vec<f64>,
        w_cov: Vec<f64>,
    ) -> Self {
        let n = center.len();
        let mut offsets = Vec::with_capacity(2 * n + usize::from(central));
        if central {
            offsets.push(DVector::zeros(n));
        }
        let cols: Vec<DVector<f64>> = (0..n).map(|i| factor.column(i) * scale).collect();
        offsets.extend(cols.iter().cloned());
        offsets.extend(cols.iter().map(|c| -c));
        debug_assert_eq!(offsets.len(), w_mean.len());
        Self {
            center: center.clone(),
            offsets,
            w_mean,
            w_cov,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.offsets.iter().map(|d| &self.center + d)
    }

    /// Same offsets and weights about a new center.
    pub fn recentered(&self, center: &DVector<f64>) -> Self {
        Self {
            center: center.clone(),
            ..self.clone()
        }
    }

    /// Weighted mean of the offsets; zero for symmetric sets.
    pub fn offset_mean(&self) -> DVector<f64> {
        weighted_mean_about(
            &self.offsets,
            &DVector::zeros(self.center.len()),
            &self.w_mean,
        )
    }
}

/// `reference + sum_i w_i (v_i - reference)`, equal to `sum_i w_i v_i` when the
/// weights sum to one. Large cancelling weights stay accurate this way.
pub fn weighted_mean_about(
    values: &[DVector<f64>],
    reference: &DVector<f64>,
    w: &[f64],
) -> DVector<f64> {
    let mut acc = DVector::zeros(reference.len());
    for (v, wi) in values.iter().zip(w) {
        acc += (v - reference) * *wi;
    }
    reference + acc
}

/// Weighted covariance of `values` about `mean`.
pub fn weighted_cov(values: &[DVector<f64>], mean: &DVector<f64>, w: &[f64]) -> DMatrix<f64> {
    let n = mean.len();
    let mut acc = DMatrix::zeros(n, n);
    for (v, wi) in values.iter().zip(w) {
        let d = v - mean;
        acc += outer(&d, &d) * *wi;
    }
    symmetrize(&acc)
}

/// Measurement moments of a sample set whose images under `h` are `ys`.
pub fn moments_from_samples(
    set: &SigmaSet,
    ys: &[DVector<f64>],
    r: &DMatrix<f64>,
) -> MeasurementMoments {
    let y_hat = weighted_mean_about(ys, &ys[0], &set.w_mean);
    let dx_mean = set.offset_mean();
    let n_x = set.center.len();
    let n_m = y_hat.len();
    let mut p_xy = DMatrix::zeros(n_x, n_m);
    let mut p_y = DMatrix::zeros(n_m, n_m);
    for ((d, y), w) in set.offsets.iter().zip(ys).zip(&set.w_cov) {
        let dy = y - &y_hat;
        p_xy += outer(&(d - &dx_mean), &dy) * *w;
        p_y += outer(&dy, &dy) * *w;
    }
    MeasurementMoments::new(y_hat, p_y, p_xy, r)
}

/// Mean and covariance of the transformed samples `ys`.
pub fn transformed_moments(set: &SigmaSet, ys: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let mean = weighted_mean_about(ys, &ys[0], &set.w_mean);
    let cov = weighted_cov(ys, &mean, &set.w_cov);
    (mean, cov)
}
