//! Map extraction from sampled partitions.
//!
//! Each snapshot is turned into a list of landmarks (cells that pass the
//! existence test), landmarks from all snapshots are clustered by position,
//! and every cluster that appears often enough is averaged into one map
//! entry.

use std::collections::{BTreeSet, HashMap};

use nalgebra::Matrix2;

use crate::conjugacy::{cell_stats, existence_probability, posterior_params, NiwGammaParams};
use crate::error::{Error, Result};
use crate::gating::UnionFind;
use crate::model::{is_spd, MeasurementBatch, ModelConfig, Point, PriorParams};
use crate::partition::Partition;
use crate::sampler::{SampleTrace, Snapshot};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub existence_threshold: f64,
    /// Landmarks from different samples closer than this are associated.
    pub assoc_radius: f64,
    /// Clusters present in fewer than this fraction of samples are dropped.
    pub spurious_fraction: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            existence_threshold: 0.5,
            assoc_radius: 1.0,
            spurious_fraction: 0.05,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.existence_threshold > 0.0 && self.existence_threshold < 1.0) {
            return Err(Error::InvalidParameter("existence threshold must lie in (0, 1)".into()));
        }
        if !(self.assoc_radius.is_finite() && self.assoc_radius > 0.0) {
            return Err(Error::InvalidParameter("association radius must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.spurious_fraction) {
            return Err(Error::InvalidParameter("spurious fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A cell accepted as a landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedLandmark {
    pub params: NiwGammaParams,
    pub size: usize,
    pub existence: f64,
}

/// Landmark point estimate from a single sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLandmark {
    pub position: Point,
    pub extent: Matrix2<f64>,
    pub weight: f64,
}

impl From<&NiwGammaParams> for SampleLandmark {
    fn from(p: &NiwGammaParams) -> Self {
        Self {
            position: p.mu,
            extent: p.extent_mean(),
            weight: p.rate_mean(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkEstimate {
    pub position: Point,
    pub extent: Matrix2<f64>,
    pub weight: f64,
    /// Fraction of samples containing this landmark.
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapEstimate {
    pub landmarks: Vec<LandmarkEstimate>,
    pub clutter_rate_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Point,
    pub cov: Matrix2<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntensityMixture {
    pub components: Vec<MixtureComponent>,
}

enum CellVerdict {
    Landmark(ExtractedLandmark),
    Clutter,
    Rejected,
}

fn judge_cell(
    members: &[usize],
    batch: &MeasurementBatch,
    prior: &PriorParams,
    model: &ModelConfig,
    threshold: f64,
) -> Result<CellVerdict> {
    let stats = cell_stats(members, batch, model)?;
    let existence = existence_probability(&stats, prior, model)?;
    if existence < threshold {
        return Ok(CellVerdict::Clutter);
    }
    let params = posterior_params(&stats, prior, model);
    if !is_spd(&params.extent_mean()) {
        log::warn!("cell with {} members has a non-SPD extent mean; skipped", members.len());
        return Ok(CellVerdict::Rejected);
    }
    Ok(CellVerdict::Landmark(ExtractedLandmark {
        params,
        size: members.len(),
        existence,
    }))
}

/// Landmarks of one partition: every multi-member cell, plus singletons whose
/// existence probability reaches `threshold`.
pub fn extract_landmarks(
    p: &Partition,
    batch: &MeasurementBatch,
    prior: &PriorParams,
    model: &ModelConfig,
    threshold: f64,
) -> Result<Vec<ExtractedLandmark>> {
    let mut out = Vec::new();
    for cell in p.cells() {
        if let CellVerdict::Landmark(l) = judge_cell(&cell.members, batch, prior, model, threshold)? {
            out.push(l);
        }
    }
    Ok(out)
}

/// Landmarks and clutter-cell count of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotLandmarks {
    pub iteration: usize,
    pub landmarks: Vec<SampleLandmark>,
    pub clutter_cells: usize,
}

fn cells_of(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut cells: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (id, &key) in labels.iter().enumerate() {
        cells.entry(key).or_default().push(id);
    }
    cells.into_values().collect()
}

/// Per-snapshot extraction, memoized over recurring cells.
pub fn snapshot_landmarks(
    snapshots: &[Snapshot],
    batch: &MeasurementBatch,
    prior: &PriorParams,
    model: &ModelConfig,
    threshold: f64,
) -> Result<Vec<SnapshotLandmarks>> {
    let mut memo: HashMap<Vec<usize>, Option<Option<SampleLandmark>>> = HashMap::new();
    let mut out = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        if snap.labels.len() != batch.len() {
            return Err(Error::Format(format!(
                "snapshot at iteration {} labels {} measurements, batch has {}",
                snap.iteration,
                snap.labels.len(),
                batch.len()
            )));
        }
        let mut landmarks = Vec::new();
        let mut clutter_cells = 0;
        for members in cells_of(&snap.labels) {
            // Some(l) for a landmark, None for clutter; rejected cells are Some(None)
            let entry = match memo.get(&members) {
                Some(e) => *e,
                None => {
                    let e = match judge_cell(&members, batch, prior, model, threshold)? {
                        CellVerdict::Landmark(l) => Some(Some(SampleLandmark::from(&l.params))),
                        CellVerdict::Clutter => None,
                        CellVerdict::Rejected => Some(None),
                    };
                    memo.insert(members, e);
                    e
                }
            };
            match entry {
                Some(Some(l)) => landmarks.push(l),
                Some(None) => {}
                None => clutter_cells += 1,
            }
        }
        out.push(SnapshotLandmarks {
            iteration: snap.iteration,
            landmarks,
            clutter_cells,
        });
    }
    Ok(out)
}

/// Mean number of sub-threshold singleton cells per scan, averaged over
/// samples.
pub fn estimate_clutter_rate(samples: &[SnapshotLandmarks], scan_count: usize) -> Result<f64> {
    if scan_count == 0 {
        return Err(Error::InvalidParameter("scan count must be positive".into()));
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    let total: usize = samples.iter().map(|s| s.clutter_cells).sum();
    Ok(total as f64 / scan_count as f64 / samples.len() as f64)
}

fn cmp_landmarks(a: &SampleLandmark, b: &SampleLandmark) -> std::cmp::Ordering {
    let key = |l: &SampleLandmark| {
        [
            l.position.x,
            l.position.y,
            l.extent[(0, 0)],
            l.extent[(0, 1)],
            l.extent[(1, 1)],
            l.weight,
        ]
    };
    let (ka, kb) = (key(a), key(b));
    ka.iter()
        .zip(kb.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Single-linkage clustering of per-sample landmarks, then component-wise
/// averaging of clusters supported by at least `spurious_fraction` of the
/// samples. Landmarks are returned sorted by position.
pub fn associate_and_average(
    samples: &[Vec<SampleLandmark>],
    assoc_radius: f64,
    spurious_fraction: f64,
) -> Result<MapEstimate> {
    if !(assoc_radius.is_finite() && assoc_radius > 0.0) {
        return Err(Error::InvalidParameter("association radius must be positive".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    let flat: Vec<(usize, SampleLandmark)> = samples
        .iter()
        .enumerate()
        .flat_map(|(s, ls)| ls.iter().map(move |l| (s, *l)))
        .collect();

    let cell_of = |p: &Point| ((p.x / assoc_radius).floor() as i64, (p.y / assoc_radius).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, (_, l)) in flat.iter().enumerate() {
        grid.entry(cell_of(&l.position)).or_default().push(i);
    }
    let r2 = assoc_radius * assoc_radius;
    let mut uf = UnionFind::new(flat.len());
    for (i, (_, l)) in flat.iter().enumerate() {
        let (gx, gy) = cell_of(&l.position);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for &j in grid.get(&(gx + dx, gy + dy)).into_iter().flatten() {
                    if j > i && (flat[j].1.position - l.position).norm_squared() <= r2 {
                        uf.union(i, j);
                    }
                }
            }
        }
    }

    let mut landmarks = Vec::new();
    for group in uf.groups() {
        let supporting: BTreeSet<usize> = group.iter().map(|&i| flat[i].0).collect();
        let support = supporting.len() as f64 / samples.len() as f64;
        if support < spurious_fraction {
            continue;
        }
        let mut members: Vec<SampleLandmark> = group.iter().map(|&i| flat[i].1).collect();
        members.sort_by(cmp_landmarks);
        let k = members.len() as f64;
        let position = members.iter().fold(Point::zeros(), |acc, l| acc + l.position) / k;
        let extent = members.iter().fold(Matrix2::zeros(), |acc, l| acc + l.extent) / k;
        let weight = members.iter().map(|l| l.weight).sum::<f64>() / k;
        landmarks.push(LandmarkEstimate {
            position,
            extent,
            weight,
            support,
        });
    }
    landmarks.sort_by(|a, b| {
        a.position
            .x
            .total_cmp(&b.position.x)
            .then(a.position.y.total_cmp(&b.position.y))
    });
    Ok(MapEstimate {
        landmarks,
        clutter_rate_estimate: 0.0,
    })
}

/// Full map estimate from a trace.
pub fn estimate_map(
    trace: &SampleTrace,
    batch: &MeasurementBatch,
    prior: &PriorParams,
    model: &ModelConfig,
    cfg: &EstimationConfig,
) -> Result<MapEstimate> {
    cfg.validate()?;
    if trace.snapshots.is_empty() {
        return Err(Error::Format("trace has no snapshots".into()));
    }
    let per_sample = snapshot_landmarks(&trace.snapshots, batch, prior, model, cfg.existence_threshold)?;
    let lists: Vec<Vec<SampleLandmark>> = per_sample.iter().map(|s| s.landmarks.clone()).collect();
    let mut map = associate_and_average(&lists, cfg.assoc_radius, cfg.spurious_fraction)?;
    map.clutter_rate_estimate = estimate_clutter_rate(&per_sample, batch.scan_count())?;
    Ok(map)
}

/// One weighted Gaussian per landmark.
pub fn intensity_mixture(map: &MapEstimate) -> IntensityMixture {
    IntensityMixture {
        components: map
            .landmarks
            .iter()
            .map(|l| MixtureComponent {
                weight: l.weight,
                mean: l.position,
                cov: l.extent,
            })
            .collect(),
    }
}

/// Mixture of a single sample's landmarks.
pub fn sample_mixture(landmarks: &[SampleLandmark]) -> IntensityMixture {
    IntensityMixture {
        components: landmarks
            .iter()
            .map(|l| MixtureComponent {
                weight: l.weight,
                mean: l.position,
                cov: l.extent,
            })
            .collect(),
    }
}
