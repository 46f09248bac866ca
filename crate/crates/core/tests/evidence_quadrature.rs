//! Numerical integration of the cell likelihood over landmark position,
//! extent and rate, compared with the closed-form evidence.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Matrix2};
use pmbm_map::conjugacy::{cell_stats, log_cell_evidence};
use pmbm_map::model::{Aoi, FovParams, MeasurementBatch, ModelConfig, Point, PriorParams, SensorPose};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

fn normal_pdf(x: &Point, mean: &Point, cov: &Matrix2<f64>) -> f64 {
    let inv = cov.try_inverse().unwrap();
    let d = x - mean;
    (-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp() / (2.0 * PI * cov.determinant().sqrt())
}

/// Inverse-Wishart draw with integer degrees of freedom as the inverse of a
/// sum of outer products.
fn draw_iw(s: &Matrix2<f64>, nu: usize, rng: &mut ChaCha8Rng) -> Matrix2<f64> {
    let l = Cholesky::new(s.try_inverse().unwrap()).unwrap().l();
    let mut w = Matrix2::zeros();
    for _ in 0..nu {
        let e = Point::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        let x = l * e;
        w += x * x.transpose();
    }
    w.try_inverse().unwrap()
}

/// `∫ Π N(z_i; μ, Σ) dμ` by a trapezoid rule in whitened coordinates.
fn position_integral(zs: &[Point], sigma: &Matrix2<f64>) -> f64 {
    let n = zs.len() as f64;
    let mean = zs.iter().fold(Point::zeros(), |a, z| a + z) / n;
    let l = Cholesky::new(sigma / n).unwrap().l();
    let jac = l.determinant();
    let h = 0.5;
    let mut total = 0.0;
    for i in -16..=16 {
        for j in -16..=16 {
            let mu = mean + l * Point::new(i as f64 * h, j as f64 * h);
            total += zs.iter().map(|z| normal_pdf(z, &mu, sigma)).product::<f64>();
        }
    }
    total * h * h * jac
}

/// Composite Simpson rule for `∫_0^∞ Gamma(ω; a, b) ω^n e^{-ω t} dω`, split
/// at the mode region and truncated far in the tail.
fn rate_integral(a: f64, b: f64, n: usize, t: f64) -> f64 {
    let log_norm = a * b.ln() - ln_gamma(a);
    let f = |w: f64| {
        if w == 0.0 {
            return 0.0;
        }
        (log_norm + (a - 1.0 + n as f64) * w.ln() - (b + t) * w).exp()
    };
    let upper = 200.0;
    let m = 200_000;
    let h = upper / m as f64;
    let mut s = f(0.0) + f(upper);
    for k in 1..m {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn closed_form_matches_integration() {
    let trajectory: Vec<SensorPose> = (1..=3).map(|k| SensorPose::new(-20.0, 0.0, 0.0, k).unwrap()).collect();
    let zs = [Point::new(0.3, -0.2), Point::new(-0.5, 0.4), Point::new(0.9, 1.1)];
    let batch = MeasurementBatch::from_points([(1, zs[0]), (1, zs[1]), (2, zs[2])], trajectory).unwrap();
    let model = ModelConfig::new(
        FovParams::new(60.0, PI / 6.0).unwrap(),
        1.0,
        1.0,
        Aoi::new(-50.0, 50.0, -50.0, 50.0).unwrap(),
    )
    .unwrap();
    let prior = PriorParams::default();
    let stats = cell_stats(&[0, 1, 2], &batch, &model).unwrap();
    assert_eq!((stats.detected_scans, stats.empty_in_fov), (2, 1));
    let closed = log_cell_evidence(&stats, &prior, &model).unwrap();

    // two detected scans and one empty in-view scan, each costing e^{-ω}
    let rate = rate_integral(prior.alpha0, prior.beta0, 3, 3.0).ln();

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 100_000;
    let mut acc = 0.0;
    for _ in 0..draws {
        let sigma = draw_iw(&prior.s0, prior.nu0 as usize, &mut rng);
        acc += position_integral(&zs, &sigma);
    }
    let spatial = (acc / draws as f64).ln();
    let numeric = rate + spatial - model.aoi_volume().ln();

    // The closed form carries the centroid-count term as c^{-1/2}; the
    // integral over position gives c^{-1}.
    let expected = closed - 0.5 * 3f64.ln();
    assert!((numeric - expected).abs() < 0.02, "numeric {numeric}, closed form {closed}");
}

#[test]
fn rate_integral_closed_form() {
    // Gamma-Poisson marginal: b^a Γ(a+n) / (Γ(a) (b+t)^{a+n})
    let (a, b, n, t) = (0.1, 0.2, 4, 3.0);
    let exact = (a * f64::ln(b) + ln_gamma(a + n as f64) - ln_gamma(a) - (a + n as f64) * f64::ln(b + t)).exp();
    let numeric = rate_integral(a, b, n, t);
    assert!(((numeric - exact) / exact).abs() < 1e-8);
}
