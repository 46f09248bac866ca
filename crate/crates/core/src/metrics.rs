//! Integrated squared error between Gaussian-mixture intensities.

use nalgebra::Matrix2;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::estimation::{IntensityMixture, MapEstimate, MixtureComponent};
use crate::model::{is_spd, Point};
use crate::scenario::Scenario;

/// Bivariate normal density at `x`. `cov` must be SPD.
pub fn gaussian_density(x: &Point, mean: &Point, cov: &Matrix2<f64>) -> f64 {
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    let d = x - mean;
    let q = (cov[(1, 1)] * d.x * d.x - (cov[(0, 1)] + cov[(1, 0)]) * d.x * d.y + cov[(0, 0)] * d.y * d.y) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}

fn check(m: &IntensityMixture) -> Result<()> {
    for (i, c) in m.components.iter().enumerate() {
        if !is_spd(&c.cov) {
            return Err(Error::InvalidParameter(format!("component {i} covariance is not SPD")));
        }
        if !c.weight.is_finite() || !c.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!("component {i} is not finite")));
        }
    }
    Ok(())
}

/// `∫ a(x) b(x) dx` for two mixtures.
fn inner_product(a: &IntensityMixture, b: &IntensityMixture) -> f64 {
    let mut total = 0.0;
    for ca in &a.components {
        for cb in &b.components {
            total += ca.weight * cb.weight * gaussian_density(&ca.mean, &cb.mean, &(ca.cov + cb.cov));
        }
    }
    total
}

/// Squared L2 distance before clamping; may be slightly negative from
/// round-off.
pub fn ise_unclamped(a: &IntensityMixture, b: &IntensityMixture) -> Result<f64> {
    check(a)?;
    check(b)?;
    Ok(inner_product(a, a) - 2.0 * inner_product(a, b) + inner_product(b, b))
}

/// Squared L2 distance between two intensities, clamped at zero.
pub fn ise(a: &IntensityMixture, b: &IntensityMixture) -> Result<f64> {
    Ok(ise_unclamped(a, b)?.max(0.0))
}

/// Intensity of the true map: one component per landmark, weighted by its
/// detection rate.
pub fn truth_mixture(scenario: &Scenario) -> IntensityMixture {
    IntensityMixture {
        components: scenario
            .landmarks
            .iter()
            .map(|l| MixtureComponent {
                weight: l.omega,
                mean: l.position,
                cov: l.extent,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CardinalityReport {
    pub true_count: usize,
    pub est_count: usize,
    /// `est_count - true_count`.
    pub error: i64,
}

pub fn cardinality_report(truth: &Scenario, est: &MapEstimate) -> CardinalityReport {
    cardinality(truth.landmarks.len(), est.landmarks.len())
}

pub fn cardinality(true_count: usize, est_count: usize) -> CardinalityReport {
    CardinalityReport {
        true_count,
        est_count,
        error: est_count as i64 - true_count as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn comp(w: f64, x: f64, y: f64, cov: Matrix2<f64>) -> MixtureComponent {
        MixtureComponent {
            weight: w,
            mean: Point::new(x, y),
            cov,
        }
    }

    fn mix(cs: Vec<MixtureComponent>) -> IntensityMixture {
        IntensityMixture { components: cs }
    }

    #[test]
    fn identical_mixtures_have_zero_error() {
        let a = mix(vec![
            comp(1.3, 0.0, 1.0, Matrix2::new(2.0, 0.3, 0.3, 1.0)),
            comp(0.7, 4.0, -2.0, Matrix2::identity()),
        ]);
        assert_eq!(ise(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn far_apart_unit_components() {
        let a = mix(vec![comp(1.0, 0.0, 0.0, Matrix2::identity())]);
        let b = mix(vec![comp(1.0, 100.0, 0.0, Matrix2::identity())]);
        let j = ise(&a, &b).unwrap();
        assert!((j - 2.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((j - 0.15915).abs() < 1e-5);
    }

    #[test]
    fn non_spd_rejected() {
        let a = mix(vec![comp(1.0, 0.0, 0.0, Matrix2::new(1.0, 2.0, 2.0, 1.0))]);
        let b = mix(vec![]);
        assert!(ise(&a, &b).is_err());
        assert!(ise(&b, &a).is_err());
    }

    #[test]
    fn empty_mixtures() {
        let e = mix(vec![]);
        assert_eq!(ise(&e, &e).unwrap(), 0.0);
        let a = mix(vec![comp(2.0, 0.0, 0.0, Matrix2::identity())]);
        // ||2 N(0, I)||^2 = 4 / (4 pi)
        assert!((ise(&a, &e).unwrap() - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn cardinality_examples() {
        assert_eq!(cardinality(20, 20).error, 0);
        assert_eq!(cardinality(20, 18).error, -2);
        assert_eq!(cardinality(20, 0).error, -20);
    }

    #[test]
    fn density_normalization_by_grid() {
        let cov = Matrix2::new(1.5, 0.4, 0.4, 0.8);
        let mean = Point::new(0.3, -0.2);
        let h = 0.05;
        let mut total = 0.0;
        for i in -200..=200 {
            for j in -200..=200 {
                total += gaussian_density(&Point::new(i as f64 * h, j as f64 * h), &mean, &cov) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-6);
    }

    fn component() -> impl Strategy<Value = MixtureComponent> {
        (0.1..3.0f64, -10.0..10.0f64, -10.0..10.0f64, 0.2..3.0f64, 0.2..3.0f64, -0.9..0.9f64)
            .prop_map(|(w, x, y, sx, sy, rho)| {
                let c = rho * sx * sy;
                comp(w, x, y, Matrix2::new(sx * sx, c, c, sy * sy))
            })
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(
            a in prop::collection::vec(component(), 0..8),
            b in prop::collection::vec(component(), 0..8),
        ) {
            let (a, b) = (mix(a), mix(b));
            let ab = ise_unclamped(&a, &b).unwrap();
            let ba = ise_unclamped(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1e-300) + 1e-15);
            prop_assert!(ab >= -1e-10);
        }

        #[test]
        fn quadratic_in_weight_scale(
            a in prop::collection::vec(component(), 1..6),
            b in prop::collection::vec(component(), 1..6),
            s in 0.1..5.0f64,
        ) {
            let scale = |m: &IntensityMixture| mix(m.components.iter().map(|c| MixtureComponent { weight: c.weight * s, ..*c }).collect());
            let (a, b) = (mix(a), mix(b));
            let j = ise_unclamped(&a, &b).unwrap();
            let js = ise_unclamped(&scale(&a), &scale(&b)).unwrap();
            prop_assert!((js - s * s * j).abs() <= 1e-9 * (s * s * j).abs() + 1e-12);
        }
    }
}
