//! Intensity of landmarks that were never detected.
//!
//! A landmark at a position seen `n` times survives undetected with
//! probability `E[(1 - pD + pD e^{-ω})^n]` under the gamma rate prior. The
//! position density of undetected landmarks is the prior density scaled by
//! that factor.

use rayon::prelude::*;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::model::{fov_contains, Aoi, FovParams, ModelConfig, Point, PriorParams, SensorPose};

/// Regular grid over an area of interest. Cells are `resolution` wide; the
/// last row and column are clipped to the area.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub aoi: Aoi,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(aoi: Aoi, resolution: f64) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidParameter("grid resolution must be positive".into()));
        }
        let nx = ((aoi.xmax - aoi.xmin) / resolution).ceil().max(1.0) as usize;
        let ny = ((aoi.ymax - aoi.ymin) / resolution).ceil().max(1.0) as usize;
        Ok(Self {
            aoi,
            resolution,
            nx,
            ny,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center of cell `(i, j)`, column `i` and row `j`.
    pub fn center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.aoi.xmin + (i as f64 + 0.5) * self.resolution,
            self.aoi.ymin + (j as f64 + 0.5) * self.resolution,
        )
    }

    /// Area of cell `(i, j)` inside the area of interest.
    pub fn cell_area(&self, i: usize, j: usize) -> f64 {
        let w = (self.aoi.xmax - self.aoi.xmin - i as f64 * self.resolution).min(self.resolution);
        let h = (self.aoi.ymax - self.aoi.ymin - j as f64 * self.resolution).min(self.resolution);
        w * h
    }
}

/// Number of scans whose field of view contains each cell center, row-major.
pub fn visit_counts(trajectory: &[SensorPose], fov: &FovParams, grid: &Grid) -> Vec<u32> {
    (0..grid.ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            (0..grid.nx).map(move |i| {
                let c = grid.center(i, j);
                trajectory.iter().filter(|p| fov_contains(p, &c, fov)).count() as u32
            })
        })
        .collect()
}

fn log_term(n: u64, m: u64, p_detect: f64, alpha0: f64, beta0: f64) -> f64 {
    // skip 0 * ln 0 when pD is 0 or 1
    let miss = if n == m { 0.0 } else { (n - m) as f64 * (1.0 - p_detect).ln() };
    let hit = if m == 0 { 0.0 } else { m as f64 * p_detect.ln() };
    ln_binomial(n, m) + miss + hit + alpha0 * (beta0 / (beta0 + m as f64)).ln()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn validate(p_detect: f64, alpha0: f64, beta0: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_detect) {
        return Err(Error::InvalidParameter("detection probability must lie in [0, 1]".into()));
    }
    if !(alpha0 > 0.0 && beta0 > 0.0) {
        return Err(Error::InvalidParameter("gamma parameters must be positive".into()));
    }
    Ok(())
}

/// Probability that a landmark seen from `n` scans was never detected,
/// averaged over the gamma prior on its rate.
pub fn missed_detection_factor(n: u32, p_detect: f64, alpha0: f64, beta0: f64) -> Result<f64> {
    validate(p_detect, alpha0, beta0)?;
    let n = u64::from(n);
    let terms: Vec<f64> = (0..=n).map(|m| log_term(n, m, p_detect, alpha0, beta0)).collect();
    Ok(log_sum_exp(&terms).exp())
}

/// One term of the posterior rate mixture `Gamma(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaComponent {
    pub weight: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Rate posterior of an undetected landmark seen from `n` scans: a mixture
/// over the number `m` of scans with a detection opportunity, with
/// normalized weights.
pub fn undetected_rate_mixture(n: u32, p_detect: f64, alpha0: f64, beta0: f64) -> Result<Vec<GammaComponent>> {
    validate(p_detect, alpha0, beta0)?;
    let n = u64::from(n);
    let terms: Vec<f64> = (0..=n).map(|m| log_term(n, m, p_detect, alpha0, beta0)).collect();
    let total = log_sum_exp(&terms);
    Ok(terms
        .iter()
        .enumerate()
        .map(|(m, t)| GammaComponent {
            weight: (t - total).exp(),
            alpha: alpha0,
            beta: beta0 + m as f64,
        })
        .collect())
}

/// Undetected-landmark density over a grid, landmarks per square meter.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityRaster {
    pub grid: Grid,
    /// Row-major values, row `j` holding cells with `y` index `j`.
    pub values: Vec<f64>,
}

impl IntensityRaster {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    /// Expected number of undetected landmarks in the area.
    pub fn total_rate(&self) -> f64 {
        let mut total = 0.0;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                total += self.value(i, j) * self.grid.cell_area(i, j);
            }
        }
        total
    }
}

pub fn undetected_raster(
    prior: &PriorParams,
    model: &ModelConfig,
    grid: &Grid,
    counts: &[u32],
) -> Result<IntensityRaster> {
    if counts.len() != grid.len() {
        return Err(Error::InvalidParameter(format!(
            "{} visit counts for a grid of {} cells",
            counts.len(),
            grid.len()
        )));
    }
    let base = prior.lambda0u / model.aoi_volume();
    let max = counts.iter().copied().max().unwrap_or(0);
    let factors: Vec<f64> = (0..=max)
        .map(|n| missed_detection_factor(n, model.p_detect, prior.alpha0, prior.beta0))
        .collect::<Result<_>>()?;
    Ok(IntensityRaster {
        grid: grid.clone(),
        values: counts.iter().map(|&n| base * factors[n as usize]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_visits_leaves_prior() {
        assert_eq!(missed_detection_factor(0, 0.7, 0.1, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn single_certain_detection() {
        let f = missed_detection_factor(1, 1.0, 0.1, 0.2).unwrap();
        assert!((f - (0.2f64 / 1.2).powf(0.1)).abs() < 1e-15);
        assert!((f - 0.8359).abs() < 1e-4);
    }

    #[test]
    fn never_detecting_sensor() {
        for n in [0, 1, 10, 300] {
            assert!((missed_detection_factor(n, 0.0, 0.1, 0.2).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn vanishes_for_many_visits() {
        let mut prev = 1.0;
        for n in [1, 10, 100, 1000, 10_000, 1_000_000] {
            let f = missed_detection_factor(n, 1.0, 0.1, 0.2).unwrap();
            assert!(f < prev);
            prev = f;
        }
        assert!(prev < 0.5);
    }

    #[test]
    fn mixture_weights_sum_to_one() {
        let mix = undetected_rate_mixture(12, 0.6, 0.1, 0.2).unwrap();
        assert_eq!(mix.len(), 13);
        assert!((mix.iter().map(|c| c.weight).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(mix[5].beta, 5.2);
    }

    fn setup() -> (PriorParams, ModelConfig, Grid) {
        let aoi = Aoi::new(-50.0, 50.0, -30.0, 30.5).unwrap();
        let model = ModelConfig::new(FovParams::new(20.0, PI / 6.0).unwrap(), 0.9, 1.0, aoi).unwrap();
        let grid = Grid::new(aoi, 1.0).unwrap();
        (PriorParams::default(), model, grid)
    }

    #[test]
    fn grid_clips_last_row() {
        let (_, _, grid) = setup();
        assert_eq!((grid.nx, grid.ny), (100, 61));
        assert_eq!(grid.cell_area(0, 60), 0.5);
        let area: f64 = (0..grid.ny)
            .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
            .map(|(i, j)| grid.cell_area(i, j))
            .sum();
        assert!((area - grid.aoi.area()).abs() < 1e-9);
    }

    #[test]
    fn static_pose_counts_are_all_or_nothing() {
        let (prior, model, grid) = setup();
        let traj: Vec<SensorPose> = (1..=7).map(|k| SensorPose::new(0.0, 0.0, 0.3, k).unwrap()).collect();
        let counts = visit_counts(&traj, &model.fov, &grid);
        assert!(counts.iter().all(|&c| c == 0 || c == 7));
        assert!(counts.contains(&7));
        let raster = undetected_raster(&prior, &model, &grid, &counts).unwrap();
        let prior_density = prior.lambda0u / model.aoi_volume();
        for (v, c) in raster.values.iter().zip(&counts) {
            if *c == 0 {
                assert_eq!(*v, prior_density);
            } else {
                assert!(*v < prior_density);
            }
        }
        assert!(raster.total_rate() < prior.lambda0u);
    }

    #[test]
    fn more_scans_lower_total_rate() {
        let (prior, model, grid) = setup();
        let traj: Vec<SensorPose> = (1..=20)
            .map(|k| SensorPose::new(-40.0 + 4.0 * k as f64, 0.0, 0.0, k).unwrap())
            .collect();
        let mut prev = prior.lambda0u;
        for k in [1, 5, 10, 20] {
            let counts = visit_counts(&traj[..k], &model.fov, &grid);
            let total = undetected_raster(&prior, &model, &grid, &counts).unwrap().total_rate();
            assert!(total < prev + 1e-12);
            prev = total;
        }
    }

    proptest! {
        #[test]
        fn factor_decreasing_in_visits(n in 0u32..400, p in 0.01..1.0f64, a in 0.05..5.0f64, b in 0.05..5.0f64) {
            let f0 = missed_detection_factor(n, p, a, b).unwrap();
            let f1 = missed_detection_factor(n + 1, p, a, b).unwrap();
            prop_assert!(f1 < f0);
            prop_assert!(f1 > 0.0);
        }
    }
}
