//! Closed-form landmark posterior for one cell of measurements.
//!
//! A cell is updated from the uniform / inverse-Wishart / gamma prior into a
//! normal-inverse-Wishart-gamma posterior. Missed detections (scans where the
//! cell centroid is visible but no measurement of the cell was recorded) only
//! touch the gamma rate; the resulting two-mode-per-scan gamma mixture is
//! merged into one component by moment matching on the rate.
//!
//! All evidences are natural logarithms. The undetected-landmark rate
//! `lambda0u` is not part of the cell evidence.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Matrix2;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{fov_contains, MeasurementBatch, Measurement, ModelConfig, Point, PriorParams};

/// Sufficient statistics of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub count: usize,
    pub sum: Point,
    /// Sum of `(z - mean)(z - mean)^T` over the cell.
    pub scatter: Matrix2<f64>,
    pub per_scan_counts: BTreeMap<usize, usize>,
    /// Number of scans with at least one measurement in the cell (N1).
    pub detected_scans: usize,
    /// Number of scans without cell measurements whose field of view
    /// contains the cell centroid (N-empty).
    pub empty_in_fov: usize,
}

impl CellStats {
    pub fn centroid(&self) -> Point {
        self.sum / self.count as f64
    }

    /// Statistics of the cell with `m` added, via a rank-one scatter update.
    /// The missed-detection count is re-evaluated at the moved centroid.
    pub fn with_added(&self, m: &Measurement, batch: &MeasurementBatch, model: &ModelConfig) -> Self {
        let n = self.count as f64;
        let mean = self.centroid();
        let d = m.z - mean;
        let scatter = self.scatter + d * d.transpose() * (n / (n + 1.0));
        let mut per_scan_counts = self.per_scan_counts.clone();
        *per_scan_counts.entry(m.scan).or_insert(0) += 1;
        let count = self.count + 1;
        let sum = self.sum + m.z;
        let centroid = sum / count as f64;
        let empty_in_fov = count_empty_in_fov(&centroid, &per_scan_counts, batch, model);
        Self {
            count,
            sum,
            scatter,
            detected_scans: per_scan_counts.len(),
            per_scan_counts,
            empty_in_fov,
        }
    }

    /// A cell with more than one member is only possible if its centroid is
    /// inside the field of view at every scan that contributed a measurement.
    /// Singletons are always admissible.
    pub fn is_fov_feasible(&self, batch: &MeasurementBatch, model: &ModelConfig) -> bool {
        if self.count <= 1 {
            return true;
        }
        let c = self.centroid();
        self.per_scan_counts
            .keys()
            .all(|&k| fov_contains(batch.pose(k), &c, &model.fov))
    }
}

fn count_empty_in_fov(
    centroid: &Point,
    per_scan_counts: &BTreeMap<usize, usize>,
    batch: &MeasurementBatch,
    model: &ModelConfig,
) -> usize {
    batch
        .trajectory()
        .iter()
        .filter(|pose| !per_scan_counts.contains_key(&pose.scan))
        .filter(|pose| fov_contains(pose, centroid, &model.fov))
        .count()
}

/// Sufficient statistics for the measurements `ids` of `batch`.
pub fn cell_stats(ids: &[usize], batch: &MeasurementBatch, model: &ModelConfig) -> Result<CellStats> {
    if ids.is_empty() {
        return Err(Error::EmptyCell);
    }
    let mut sum = Point::zeros();
    let mut per_scan_counts = BTreeMap::new();
    for &id in ids {
        let m = batch.measurement(id).ok_or(Error::UnknownMeasurement(id))?;
        sum += m.z;
        *per_scan_counts.entry(m.scan).or_insert(0) += 1;
    }
    let count = ids.len();
    let mean = sum / count as f64;
    let mut scatter = Matrix2::zeros();
    for &id in ids {
        let d = batch.measurements()[id].z - mean;
        scatter += d * d.transpose();
    }
    let empty_in_fov = count_empty_in_fov(&mean, &per_scan_counts, batch, model);
    Ok(CellStats {
        count,
        sum,
        scatter,
        detected_scans: per_scan_counts.len(),
        per_scan_counts,
        empty_in_fov,
    })
}

/// Normal-inverse-Wishart-gamma posterior parameters of a landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiwGammaParams {
    pub mu: Point,
    pub c: f64,
    pub s: Matrix2<f64>,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NiwGammaParams {
    pub fn extent_mean(&self) -> Matrix2<f64> {
        iw_mean(&self.s, self.nu)
    }

    /// Posterior mean of the expected detections per scan.
    pub fn rate_mean(&self) -> f64 {
        self.alpha / self.beta
    }
}

/// Mean of an inverse-Wishart with scale `s` and `nu` degrees of freedom on
/// 2x2 matrices, `s / (nu - 3)`. Requires `nu > 3`.
pub fn iw_mean(s: &Matrix2<f64>, nu: f64) -> Matrix2<f64> {
    s / (nu - 3.0)
}

pub fn posterior_params(stats: &CellStats, prior: &PriorParams, model: &ModelConfig) -> NiwGammaParams {
    let n = stats.count as f64;
    NiwGammaParams {
        mu: stats.centroid(),
        c: n,
        s: prior.s0 + stats.scatter,
        nu: prior.nu0 + n - 1.0,
        alpha: prior.alpha0 + n,
        beta: prior.beta0 + stats.detected_scans as f64 + model.p_detect * stats.empty_in_fov as f64,
    }
}

/// `ln Gamma_2(a) = ln(pi)/2 + ln Gamma(a) + ln Gamma(a - 1/2)`.
pub fn ln_multigamma2(a: f64) -> f64 {
    0.5 * PI.ln() + ln_gamma(a) + ln_gamma(a - 0.5)
}

/// Log of the landmark-origin evidence of a cell: the cell factor of the
/// partition weight with the clutter alternative left out.
pub fn log_cell_evidence(stats: &CellStats, prior: &PriorParams, model: &ModelConfig) -> Result<f64> {
    if stats.count == 0 {
        return Err(Error::EmptyCell);
    }
    let post = posterior_params(stats, prior, model);
    let det_s = post.s.determinant();
    let det_s0 = prior.s0.determinant();
    if !(det_s.is_finite() && det_s > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "updated scale matrix is not positive-definite (det = {det_s})"
        )));
    }
    let n = stats.count as f64;

    let detection = stats.detected_scans as f64 * model.p_detect.ln() - model.aoi_volume().ln();
    let gamma = prior.alpha0 * prior.beta0.ln() + ln_gamma(post.alpha)
        - post.alpha * post.beta.ln()
        - ln_gamma(prior.alpha0);
    let niw = 0.5 * prior.nu0 * det_s0.ln() + ln_multigamma2(0.5 * post.nu)
        - (n - 1.0) * PI.ln()
        - 0.5 * post.c.ln()
        - ln_multigamma2(0.5 * prior.nu0)
        - 0.5 * post.nu * det_s.ln();
    Ok(detection + gamma + niw)
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log likelihood factor of a cell: a singleton may be clutter or a
/// landmark, larger cells can only be a landmark.
pub fn log_cell_likelihood(stats: &CellStats, prior: &PriorParams, model: &ModelConfig) -> Result<f64> {
    let evidence = log_cell_evidence(stats, prior, model)?;
    if stats.count == 1 {
        Ok(log_add_exp(log_clutter_intensity(model), evidence))
    } else {
        Ok(evidence)
    }
}

fn log_clutter_intensity(model: &ModelConfig) -> f64 {
    (model.clutter_rate * model.clutter_density()).ln()
}

/// Probability that the cell originates from a landmark rather than clutter.
pub fn existence_probability(stats: &CellStats, prior: &PriorParams, model: &ModelConfig) -> Result<f64> {
    if stats.count > 1 {
        return Ok(1.0);
    }
    let evidence = log_cell_evidence(stats, prior, model)?;
    let total = log_add_exp(log_clutter_intensity(model), evidence);
    Ok((evidence - total).exp().clamp(0.0, 1.0))
}
