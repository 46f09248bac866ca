//! Sensor geometry, measurement containers and model parameters.
//!
//! The sensor field of view is a circular sector (range plus a bearing cone
//! around the heading). Landmark visibility is decided by the landmark
//! position alone; its extent plays no part.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Sensor pose at one scan. Scans are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub scan: usize,
}

impl SensorPose {
    pub fn new(x: f64, y: f64, heading: f64, scan: usize) -> Result<Self> {
        if scan == 0 {
            return Err(Error::InvalidParameter("scan index must be >= 1".into()));
        }
        if !(x.is_finite() && y.is_finite() && heading.is_finite()) {
            return Err(Error::InvalidParameter("pose must be finite".into()));
        }
        Ok(Self {
            x,
            y,
            heading: normalize_angle(heading),
            scan,
        })
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovParams {
    pub range: f64,
    pub half_angle: f64,
}

impl FovParams {
    pub fn new(range: f64, half_angle: f64) -> Result<Self> {
        if !(range.is_finite() && range > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fov range must be positive, got {range}"
            )));
        }
        if !(half_angle > 0.0 && half_angle <= PI) {
            return Err(Error::InvalidParameter(format!(
                "fov half angle must lie in (0, pi], got {half_angle}"
            )));
        }
        Ok(Self { range, half_angle })
    }
}

/// True iff `point` lies inside the sensor sector at `pose`. Points on the
/// range or bearing boundary count as inside.
pub fn fov_contains(pose: &SensorPose, point: &Point, fov: &FovParams) -> bool {
    let dx = point.x - pose.x;
    let dy = point.y - pose.y;
    let dist_sq = dx * dx + dy * dy;
    if dist_sq > fov.range * fov.range {
        return false;
    }
    if dist_sq == 0.0 || fov.half_angle >= PI {
        return true;
    }
    let bearing = normalize_angle(dy.atan2(dx) - pose.heading);
    bearing.abs() <= fov.half_angle
}

/// Area of the sensor sector, `range^2 * half_angle`.
pub fn fov_area(fov: &FovParams) -> f64 {
    0.5 * fov.range * fov.range * (2.0 * fov.half_angle)
}

/// One 2-D detection. `id` is the dense index of the measurement in its batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub z: Point,
    pub scan: usize,
    pub id: usize,
}

/// All detections of a run together with the trajectory that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    measurements: Vec<Measurement>,
    trajectory: Vec<SensorPose>,
}

impl MeasurementBatch {
    /// Validates that ids are dense `0..N`, trajectory scans are `1..=K`
    /// without gaps, and every measurement refers to an existing scan.
    pub fn new(measurements: Vec<Measurement>, trajectory: Vec<SensorPose>) -> Result<Self> {
        for (k, pose) in trajectory.iter().enumerate() {
            if pose.scan != k + 1 {
                return Err(Error::InvalidParameter(format!(
                    "trajectory must list scans 1..=K in order; position {k} has scan {}",
                    pose.scan
                )));
            }
        }
        for (i, m) in measurements.iter().enumerate() {
            if m.id != i {
                return Err(Error::InvalidParameter(format!(
                    "measurement ids must be dense; position {i} has id {}",
                    m.id
                )));
            }
            if m.scan == 0 || m.scan > trajectory.len() {
                return Err(Error::InvalidParameter(format!(
                    "measurement {i} refers to scan {} but trajectory has {} scans",
                    m.scan,
                    trajectory.len()
                )));
            }
            if !(m.z.x.is_finite() && m.z.y.is_finite()) {
                return Err(Error::InvalidParameter(format!("measurement {i} is not finite")));
            }
        }
        Ok(Self {
            measurements,
            trajectory,
        })
    }

    /// Builds a batch from `(scan, point)` pairs, assigning ids in order.
    pub fn from_points(
        points: impl IntoIterator<Item = (usize, Point)>,
        trajectory: Vec<SensorPose>,
    ) -> Result<Self> {
        let measurements = points
            .into_iter()
            .enumerate()
            .map(|(id, (scan, z))| Measurement { z, scan, id })
            .collect();
        Self::new(measurements, trajectory)
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn measurement(&self, id: usize) -> Option<&Measurement> {
        self.measurements.get(id)
    }

    pub fn trajectory(&self) -> &[SensorPose] {
        &self.trajectory
    }

    /// Pose of scan `k` (1-based).
    pub fn pose(&self, scan: usize) -> &SensorPose {
        &self.trajectory[scan - 1]
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn scan_count(&self) -> usize {
        self.trajectory.len()
    }

    /// Sub-batch restricted to `ids` (ascending), renumbered densely.
    /// Returns the batch and the local-to-global id map.
    pub fn subset(&self, ids: &[usize]) -> Result<(Self, Vec<usize>)> {
        let mut global = ids.to_vec();
        global.sort_unstable();
        global.dedup();
        let mut measurements = Vec::with_capacity(global.len());
        for (local, &g) in global.iter().enumerate() {
            let m = self.measurement(g).ok_or(Error::UnknownMeasurement(g))?;
            measurements.push(Measurement {
                z: m.z,
                scan: m.scan,
                id: local,
            });
        }
        let batch = Self::new(measurements, self.trajectory.clone())?;
        Ok((batch, global))
    }
}

/// Axis-aligned area of interest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aoi {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Aoi {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        if !(xmin.is_finite() && xmax.is_finite() && ymin.is_finite() && ymax.is_finite())
            || xmax <= xmin
            || ymax <= ymin
        {
            return Err(Error::InvalidParameter(format!(
                "area of interest must be a non-empty rectangle, got x [{xmin}, {xmax}] y [{ymin}, {ymax}]"
            )));
        }
        Ok(Self {
            xmin,
            xmax,
            ymin,
            ymax,
        })
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }
}

/// Sensor and clutter model. Detection probability is one scalar for every
/// scan and every landmark inside the field of view, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub fov: FovParams,
    pub p_detect: f64,
    /// Expected clutter detections per scan.
    pub clutter_rate: f64,
    pub aoi: Aoi,
}

impl ModelConfig {
    pub fn new(fov: FovParams, p_detect: f64, clutter_rate: f64, aoi: Aoi) -> Result<Self> {
        if !(p_detect > 0.0 && p_detect <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "detection probability must lie in (0, 1], got {p_detect}"
            )));
        }
        if !(clutter_rate.is_finite() && clutter_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "clutter rate must be >= 0, got {clutter_rate}"
            )));
        }
        Ok(Self {
            fov,
            p_detect,
            clutter_rate,
            aoi,
        })
    }

    /// Area of the region over which landmark positions are a priori uniform.
    pub fn aoi_volume(&self) -> f64 {
        self.aoi.area()
    }

    /// Clutter spatial density, uniform over the sensor sector.
    pub fn clutter_density(&self) -> f64 {
        1.0 / fov_area(&self.fov)
    }
}

/// Hyper-parameters of the conjugate landmark prior: inverse-Wishart on the
/// extent, gamma on the expected detection count, uniform position over the
/// area of interest, and the prior Poisson rate of landmarks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorParams {
    pub s0: Matrix2<f64>,
    pub nu0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub lambda0u: f64,
}

impl PriorParams {
    pub fn new(s0: Matrix2<f64>, nu0: f64, alpha0: f64, beta0: f64, lambda0u: f64) -> Result<Self> {
        if !is_spd(&s0) {
            return Err(Error::InvalidParameter(
                "prior scale matrix must be symmetric positive-definite".into(),
            ));
        }
        if !(nu0.is_finite() && nu0 > 3.0) {
            return Err(Error::InvalidParameter(format!(
                "prior degrees of freedom must exceed 3, got {nu0}"
            )));
        }
        if !(alpha0 > 0.0 && alpha0.is_finite() && beta0 > 0.0 && beta0.is_finite()) {
            return Err(Error::InvalidParameter(
                "gamma prior shape and rate must be positive".into(),
            ));
        }
        if !(lambda0u.is_finite() && lambda0u >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prior undetected rate must be >= 0, got {lambda0u}"
            )));
        }
        Ok(Self {
            s0,
            nu0,
            alpha0,
            beta0,
            lambda0u,
        })
    }

    /// Prior mean of the extent matrix.
    pub fn extent_mean(&self) -> Matrix2<f64> {
        crate::conjugacy::iw_mean(&self.s0, self.nu0)
    }
}

impl Default for PriorParams {
    /// S0 = 5 I, nu0 = 5, alpha0 = 0.1, beta0 = 0.2, one expected landmark.
    fn default() -> Self {
        Self {
            s0: Matrix2::identity() * 5.0,
            nu0: 5.0,
            alpha0: 0.1,
            beta0: 0.2,
            lambda0u: 1.0,
        }
    }
}

/// Symmetric positive-definite check for a 2x2 matrix.
pub fn is_spd(m: &Matrix2<f64>) -> bool {
    let sym_tol = 1e-9 * m[(0, 1)].abs().max(1.0);
    (m[(0, 1)] - m[(1, 0)]).abs() <= sym_tol
        && m[(0, 0)] > 0.0
        && m.determinant() > 0.0
        && m.iter().all(|v| v.is_finite())
}
