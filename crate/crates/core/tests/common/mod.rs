//! Reference implementations used as test oracles. Everything here is
//! written from the model definition without calling the library's scoring
//! code.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use nalgebra::Matrix2;
use pmbm_map::model::{FovParams, MeasurementBatch, ModelConfig, Point, PriorParams, SensorPose};
use statrs::function::gamma::ln_gamma;

pub struct Instance {
    pub batch: MeasurementBatch,
    pub prior: PriorParams,
    pub model: ModelConfig,
}

pub fn in_view(pose: &SensorPose, p: &Point, fov: &FovParams) -> bool {
    let dx = p.x - pose.x;
    let dy = p.y - pose.y;
    let r = (dx * dx + dy * dy).sqrt();
    if r > fov.range {
        return false;
    }
    if r == 0.0 {
        return true;
    }
    let mut bearing = dy.atan2(dx) - pose.heading;
    while bearing > PI {
        bearing -= 2.0 * PI;
    }
    while bearing <= -PI {
        bearing += 2.0 * PI;
    }
    bearing.abs() <= fov.half_angle
}

fn ln_gamma2(a: f64) -> f64 {
    0.5 * PI.ln() + ln_gamma(a) + ln_gamma(a - 0.5)
}

fn det(m: &Matrix2<f64>) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Log evidence of a group of measurements being one landmark, written out
/// term by term.
pub fn ref_log_evidence(members: &[usize], inst: &Instance) -> f64 {
    let ms = inst.batch.measurements();
    let n = members.len() as f64;
    let mut mean = Point::zeros();
    for &i in members {
        mean += ms[i].z;
    }
    mean /= n;
    let mut scatter = Matrix2::zeros();
    for &i in members {
        let d = ms[i].z - mean;
        scatter += d * d.transpose();
    }
    let mut scans: Vec<usize> = members.iter().map(|&i| ms[i].scan).collect();
    scans.sort_unstable();
    scans.dedup();
    let n1 = scans.len() as f64;
    let k_total = inst.batch.scan_count();
    let mut n_empty = 0.0;
    for k in 1..=k_total {
        if !scans.contains(&k) && in_view(inst.batch.pose(k), &mean, &inst.model.fov) {
            n_empty += 1.0;
        }
    }
    let p = &inst.prior;
    let pd = inst.model.p_detect;
    let v_a = (inst.model.aoi.xmax - inst.model.aoi.xmin) * (inst.model.aoi.ymax - inst.model.aoi.ymin);
    let nu_k = p.nu0 + n - 1.0;
    let s_k = p.s0 + scatter;
    let alpha_k = p.alpha0 + n;
    let beta_k = p.beta0 + n1 + pd * n_empty;
    n1 * pd.ln() - v_a.ln() + p.alpha0 * p.beta0.ln() + ln_gamma(alpha_k) - alpha_k * beta_k.ln() - ln_gamma(p.alpha0)
        + 0.5 * p.nu0 * det(&p.s0).ln()
        + ln_gamma2(nu_k / 2.0)
        - (n - 1.0) * PI.ln()
        - 0.5 * n.ln()
        - ln_gamma2(p.nu0 / 2.0)
        - 0.5 * nu_k * det(&s_k).ln()
}

/// Log factor of one cell including clutter for singletons and the
/// field-of-view feasibility rule for larger cells.
pub fn ref_log_cell(members: &[usize], inst: &Instance) -> f64 {
    let ev = ref_log_evidence(members, inst);
    let ms = inst.batch.measurements();
    if members.len() == 1 {
        let fov = &inst.model.fov;
        let area = fov.range * fov.range * fov.half_angle;
        let clutter = inst.model.clutter_rate / area;
        return (clutter + ev.exp()).ln();
    }
    let n = members.len() as f64;
    let mean = members.iter().fold(Point::zeros(), |a, &i| a + ms[i].z) / n;
    for &i in members {
        if !in_view(inst.batch.pose(ms[i].scan), &mean, &inst.model.fov) {
            return f64::NEG_INFINITY;
        }
    }
    ev
}

pub fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g.into_values().collect()
}

pub fn ref_log_weight(labels: &[usize], inst: &Instance) -> f64 {
    groups(labels).iter().map(|c| ref_log_cell(c, inst)).sum()
}

/// Canonical form: cells numbered by first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// All set partitions of `0..n` in canonical form, by recursion.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().copied().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            prefix.push(l);
            rec(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, &mut out);
    out
}

pub fn normalize(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Exact posterior over all partitions, keyed by canonical labels.
pub fn exact_distribution(inst: &Instance) -> (Vec<Vec<usize>>, Vec<f64>) {
    let parts = all_partitions(inst.batch.len());
    let logs: Vec<f64> = parts.iter().map(|p| ref_log_weight(p, inst)).collect();
    (parts, normalize(&logs))
}

/// One-step transition matrix of the single-site kernel with a uniformly
/// chosen measurement, built by listing the reachable partitions directly.
pub fn transition_matrix(inst: &Instance, parts: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let index: HashMap<Vec<usize>, usize> = parts.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let n = inst.batch.len();
    let mut t = vec![vec![0.0; parts.len()]; parts.len()];
    for (from, labels) in parts.iter().enumerate() {
        if ref_log_weight(labels, inst) == f64::NEG_INFINITY {
            t[from][from] = 1.0;
            continue;
        }
        for id in 0..n {
            let own = labels[id];
            let alone = labels.iter().filter(|&&l| l == own).count() == 1;
            let mut targets: Vec<Vec<usize>> = vec![labels.clone()];
            let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != own).collect();
            others.sort_unstable();
            others.dedup();
            for l in others {
                let mut next = labels.clone();
                next[id] = l;
                targets.push(canonical(&next));
            }
            if !alone {
                let mut next = labels.clone();
                next[id] = usize::MAX;
                targets.push(canonical(&next));
            }
            let logs: Vec<f64> = targets.iter().map(|p| ref_log_weight(p, inst)).collect();
            let probs = normalize(&logs);
            for (p, q) in targets.iter().zip(probs) {
                t[from][index[&canonical(p)]] += q / n as f64;
            }
        }
    }
    t
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical frequencies of canonical label vectors over `parts`.
pub fn empirical(samples: &[Vec<usize>], parts: &[Vec<usize>]) -> Vec<f64> {
    let index: HashMap<Vec<usize>, usize> = parts.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let mut f = vec![0.0; parts.len()];
    for s in samples {
        f[index[&canonical(s)]] += 1.0;
    }
    let total = samples.len() as f64;
    f.iter().map(|x| x / total).collect()
}

/// Small cluttered instance: `n` detections over `scans` scans from two
/// nearby landmarks plus uniform clutter, all seen from a slowly moving
/// sensor.
pub fn small_instance(seed: u64, n: usize, scans: usize) -> Instance {
    use pmbm_map::model::Aoi;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let trajectory: Vec<SensorPose> = (1..=scans)
        .map(|k| SensorPose::new(-20.0 + 0.5 * k as f64, 0.2 * k as f64, 0.0, k).unwrap())
        .collect();
    let centers = [Point::new(0.0, 0.0), Point::new(2.5, 1.0)];
    let mut pts: Vec<(usize, Point)> = (0..n)
        .map(|_| {
            let scan = rng.random_range(1..=scans);
            let z = if rng.random_bool(0.7) {
                let c = centers[rng.random_range(0..2)];
                c + Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                Point::new(rng.random_range(-4.0..6.0), rng.random_range(-3.0..3.0))
            };
            (scan, z)
        })
        .collect();
    pts.sort_by_key(|p| p.0);
    let batch = MeasurementBatch::from_points(pts, trajectory).unwrap();
    let model = ModelConfig::new(
        FovParams::new(60.0, PI / 6.0).unwrap(),
        0.9,
        1.0,
        Aoi::new(-50.0, 50.0, -50.0, 50.0).unwrap(),
    )
    .unwrap();
    Instance {
        batch,
        prior: PriorParams::default(),
        model,
    }
}

/// Two groups of four detections 500 m apart, each seen only from its own
/// pair of scans, so the two fields-of-view unions are disjoint.
pub fn two_cluster_instance(seed: u64) -> Instance {
    use pmbm_map::model::Aoi;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let trajectory = vec![
        SensorPose::new(-20.0, 0.0, 0.0, 1).unwrap(),
        SensorPose::new(-19.0, 0.0, 0.0, 2).unwrap(),
        SensorPose::new(480.0, 0.0, 0.0, 3).unwrap(),
        SensorPose::new(481.0, 0.0, 0.0, 4).unwrap(),
    ];
    let mut pts = Vec::new();
    for (scans, cx) in [([1, 2], 0.0), ([3, 4], 500.0)] {
        for i in 0..4 {
            let z = Point::new(cx + rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            pts.push((scans[i / 2], z));
        }
    }
    let batch = MeasurementBatch::from_points(pts, trajectory).unwrap();
    let model = ModelConfig::new(
        FovParams::new(60.0, PI / 6.0).unwrap(),
        0.9,
        1.0,
        Aoi::new(-100.0, 600.0, -100.0, 100.0).unwrap(),
    )
    .unwrap();
    Instance {
        batch,
        prior: PriorParams::default(),
        model,
    }
}

/// Exact marginal over the measurements `ids` of the posterior of `inst`.
pub fn exact_marginal(inst: &Instance, ids: &[usize]) -> (Vec<Vec<usize>>, Vec<f64>) {
    let (parts, pi) = exact_distribution(inst);
    let sub_parts = all_partitions(ids.len());
    let index: HashMap<Vec<usize>, usize> = sub_parts.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let mut marginal = vec![0.0; sub_parts.len()];
    for (p, w) in parts.iter().zip(pi) {
        let restricted: Vec<usize> = ids.iter().map(|&i| p[i]).collect();
        marginal[index[&canonical(&restricted)]] += w;
    }
    (sub_parts, marginal)
}
