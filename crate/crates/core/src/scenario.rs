//! Ground-truth scenarios and synthetic detections.
//!
//! The default scenario is one lap around a 200 m × 100 m rectangular track
//! with twenty landmarks placed alternately left and right of the road.

use nalgebra::{Cholesky, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Poisson, StandardNormal};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{
    fov_contains, is_spd, Aoi, FovParams, MeasurementBatch, ModelConfig, Point, PriorParams,
    SensorPose,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthLandmark {
    pub position: Point,
    pub extent: Matrix2<f64>,
    /// Expected detections per scan while in view.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub landmarks: Vec<GroundTruthLandmark>,
    pub trajectory: Vec<SensorPose>,
    pub model: ModelConfig,
    /// Sensor noise covariance added to each landmark extent.
    pub measurement_noise: Matrix2<f64>,
}

/// Detections plus the landmark index behind each one (`None` for clutter).
/// The association is for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub batch: MeasurementBatch,
    pub sources: Vec<Option<usize>>,
}

/// Poses at equal arc-length steps along the closed polyline through
/// `waypoints`, heading along the local tangent. A pose on a vertex takes
/// the heading of the segment ending there.
pub fn generate_trajectory(waypoints: &[Point], step_count: usize) -> Result<Vec<SensorPose>> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidParameter("at least two waypoints are required".into()));
    }
    if step_count < 2 {
        return Err(Error::InvalidParameter("at least two steps are required".into()));
    }
    let m = waypoints.len();
    let segments: Vec<(Point, Point, f64)> = (0..m)
        .map(|i| {
            let a = waypoints[i];
            let b = waypoints[(i + 1) % m];
            (a, b, (b - a).norm())
        })
        .collect();
    let total: f64 = segments.iter().map(|s| s.2).sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateGeometry("trajectory polyline has zero length".into()));
    }

    let mut poses = Vec::with_capacity(step_count);
    for j in 0..step_count {
        let s = j as f64 * total / step_count as f64;
        let mut start = 0.0;
        let mut chosen = None;
        for (a, b, len) in &segments {
            if *len == 0.0 {
                continue;
            }
            let end = start + len;
            if s == 0.0 || s <= end {
                chosen = Some((*a, *b, *len, s - start));
                break;
            }
            start = end;
        }
        let (a, b, len, t) = chosen.expect("arc length lies on the polyline");
        let dir = (b - a) / len;
        let p = a + dir * t;
        poses.push(SensorPose::new(p.x, p.y, dir.y.atan2(dir.x), j + 1)?);
    }
    Ok(poses)
}

/// Draw from an inverse-Wishart with scale `s` and `nu` degrees of freedom,
/// via the Bartlett decomposition of the Wishart-distributed precision.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(s: &Matrix2<f64>, nu: f64, rng: &mut R) -> Result<Matrix2<f64>> {
    if nu <= 1.0 {
        return Err(Error::InvalidParameter("inverse-Wishart needs nu > 1".into()));
    }
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("scale matrix is singular".into()))?;
    let l = Cholesky::new(s_inv)
        .ok_or_else(|| Error::InvalidParameter("scale matrix is not SPD".into()))?
        .l();
    let chi = |k: f64, rng: &mut R| -> Result<f64> {
        let d = ChiSquared::new(k).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(d.sample(rng).sqrt())
    };
    let a11 = chi(nu, rng)?;
    let a22 = chi(nu - 1.0, rng)?;
    let a21: f64 = rng.sample(StandardNormal);
    let a = Matrix2::new(a11, 0.0, a21, a22);
    let la = l * a;
    let w = la * la.transpose();
    let sigma = w
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("singular Wishart draw".into()))?;
    Ok((sigma + sigma.transpose()) * 0.5)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(d.sample(rng) as usize)
}

/// Samples detections scan by scan: every landmark whose center is in view
/// is detected with probability `pD` and then yields Poisson(ω) points from
/// N(μ, Σ + R); clutter is Poisson(λc) points uniform over the sector.
pub fn generate_measurements<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<GeneratedData> {
    let model = &scenario.model;
    let fov = &model.fov;
    let factors: Vec<Matrix2<f64>> = scenario
        .landmarks
        .iter()
        .map(|l| {
            Cholesky::new(l.extent + scenario.measurement_noise)
                .map(|c| c.l())
                .ok_or_else(|| Error::InvalidParameter("landmark extent is not SPD".into()))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut sources = Vec::new();
    for pose in &scenario.trajectory {
        for (i, l) in scenario.landmarks.iter().enumerate() {
            if !fov_contains(pose, &l.position, fov) {
                continue;
            }
            let u: f64 = rng.random();
            if u >= model.p_detect {
                continue;
            }
            for _ in 0..poisson(l.omega, rng)? {
                let e = Point::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                points.push((pose.scan, l.position + factors[i] * e));
                sources.push(Some(i));
            }
        }
        for _ in 0..poisson(model.clutter_rate, rng)? {
            let r = fov.range * rng.random::<f64>().sqrt();
            let phi = pose.heading + fov.half_angle * (2.0 * rng.random::<f64>() - 1.0);
            points.push((pose.scan, pose.position() + Point::new(r * phi.cos(), r * phi.sin())));
            sources.push(None);
        }
    }
    let batch = MeasurementBatch::from_points(points, scenario.trajectory.clone())?;
    Ok(GeneratedData { batch, sources })
}

/// Knobs of the default layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOptions {
    /// Seed for landmark placement, extents and rates.
    pub layout_seed: u64,
    /// Multiplier on the drawn extents; values other than one make the
    /// prior misspecified.
    pub extent_scale: f64,
    pub p_detect: f64,
    pub clutter_rate: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            layout_seed: 7,
            extent_scale: 1.0,
            p_detect: 1.0,
            clutter_rate: 1.0,
        }
    }
}

pub const TRACK_CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (200.0, 0.0), (200.0, 100.0), (0.0, 100.0)];
pub const DEFAULT_STEPS: usize = 190;
pub const DEFAULT_LANDMARKS: usize = 20;
const AOI_MARGIN: f64 = 70.0;

/// Rectangular-lap scenario with twenty landmarks whose extents are drawn
/// from the prior of `prior`.
pub fn build_scenario(opts: &ScenarioOptions, prior: &PriorParams) -> Result<Scenario> {
    let waypoints: Vec<Point> = TRACK_CORNERS.iter().map(|&(x, y)| Point::new(x, y)).collect();
    let trajectory = generate_trajectory(&waypoints, DEFAULT_STEPS)?;
    let perimeter: f64 = 600.0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.layout_seed);

    let mut landmarks = Vec::with_capacity(DEFAULT_LANDMARKS);
    for i in 0..DEFAULT_LANDMARKS {
        let s = perimeter * (i as f64 + 0.5) / DEFAULT_LANDMARKS as f64;
        let (base, dir) = point_on_track(&waypoints, s);
        let normal = Point::new(-dir.y, dir.x);
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        let offset = side * rng.random_range(6.0..10.0);
        let extent = sample_inverse_wishart(&prior.s0, prior.nu0, &mut rng)? * opts.extent_scale;
        if !is_spd(&extent) {
            return Err(Error::DegenerateGeometry("drawn extent is not SPD".into()));
        }
        landmarks.push(GroundTruthLandmark {
            position: base + normal * offset,
            extent,
            omega: rng.random_range(1.0..2.0),
        });
    }

    let aoi = Aoi::new(-AOI_MARGIN, 200.0 + AOI_MARGIN, -AOI_MARGIN, 100.0 + AOI_MARGIN)?;
    let model = ModelConfig::new(FovParams::new(60.0, PI / 6.0)?, opts.p_detect, opts.clutter_rate, aoi)?;
    Ok(Scenario {
        landmarks,
        trajectory,
        model,
        measurement_noise: Matrix2::identity() * 0.01f64.powi(2),
    })
}

fn point_on_track(waypoints: &[Point], s: f64) -> (Point, Point) {
    let m = waypoints.len();
    let mut start = 0.0;
    for i in 0..m {
        let a = waypoints[i];
        let b = waypoints[(i + 1) % m];
        let len = (b - a).norm();
        if s < start + len {
            let dir = (b - a) / len;
            return (a + dir * (s - start), dir);
        }
        start += len;
    }
    let dir = (waypoints[0] - waypoints[m - 1]).normalize();
    (waypoints[0], dir)
}

/// The reference scenario: 20 landmarks, 190 scans, 60 m / ±30° field of
/// view, pD = 1, λc = 1, extents from the default prior.
pub fn default_scenario() -> Scenario {
    build_scenario(&ScenarioOptions::default(), &PriorParams::default()).expect("default layout is valid")
}
