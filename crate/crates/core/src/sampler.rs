//! Collapsed Gibbs kernel over partitions and the chain driver.
//!
//! One step picks a measurement and redraws its cell from the full
//! conditional over {stay, each other cell, a fresh cell}. The fresh option
//! is dropped when the measurement is already alone, so no partition is
//! reachable twice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::enumerate::normalize_log_weights;
use crate::error::{Error, Result};
use crate::gating::gating_components;
use crate::model::{MeasurementBatch, ModelConfig, PriorParams};
use crate::partition::{CellModel, MoveTarget, Partition};

/// Interval, in iterations, between logged log-weight checkpoints.
pub const CHECKPOINT_INTERVAL: usize = 10_000;

/// Default spatial gate in meters.
pub const DEFAULT_GATE_DISTANCE: f64 = 10.0;

/// Order in which measurements are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// One uniformly drawn measurement per iteration.
    #[default]
    Random,
    /// Measurements visited cyclically, one per iteration.
    Systematic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Spatial gate in meters; `f64::INFINITY` disables gating.
    pub gate_distance: f64,
    pub existence_threshold: f64,
    pub sweep: SweepOrder,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 120_000,
            burn_in: 80_000,
            thinning: 1,
            seed: 0,
            gate_distance: DEFAULT_GATE_DISTANCE,
            existence_threshold: 0.5,
            sweep: SweepOrder::Random,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be at least 1".into()));
        }
        if self.gate_distance.is_nan() || self.gate_distance <= 0.0 {
            return Err(Error::InvalidParameter("gate distance must be positive".into()));
        }
        if !(self.existence_threshold > 0.0 && self.existence_threshold < 1.0) {
            return Err(Error::InvalidParameter("existence threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One option of the full conditional for a selected measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// `None` keeps the current partition.
    pub target: Option<MoveTarget>,
    /// Log weight change relative to the current partition.
    pub log_delta: f64,
    pub probability: f64,
}

/// Full conditional of measurement `id` given the rest of the partition.
/// The current partition must have positive weight.
pub fn transition_distribution(p: &Partition, id: usize, cm: &CellModel) -> Result<Vec<Candidate>> {
    let source_key = p.cell_of(id).ok_or(Error::UnknownMeasurement(id))?;
    if p.log_weight() == f64::NEG_INFINITY {
        return Err(Error::InvalidMove("current partition has zero weight".into()));
    }
    let source = p.cell(source_key).expect("live cell");
    let leave = if source.len() == 1 {
        -source.log_likelihood
    } else {
        let rest: Vec<usize> = source.members.iter().copied().filter(|&m| m != id).collect();
        cm.cell(rest)?.log_likelihood - source.log_likelihood
    };

    let mut candidates = vec![Candidate {
        target: None,
        log_delta: 0.0,
        probability: 0.0,
    }];
    for cell in p.cells() {
        if cell.key() == source_key {
            continue;
        }
        let joined = cm.log_factor_with_added(cell, id)?;
        let log_delta = if joined == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            leave + joined - cell.log_likelihood
        };
        candidates.push(Candidate {
            target: Some(MoveTarget::Cell(cell.key())),
            log_delta,
            probability: 0.0,
        });
    }
    if source.len() > 1 {
        let single = cm.cell(vec![id])?.log_likelihood;
        candidates.push(Candidate {
            target: Some(MoveTarget::Fresh),
            log_delta: leave + single,
            probability: 0.0,
        });
    }

    let logs: Vec<f64> = candidates.iter().map(|c| c.log_delta).collect();
    let probs = normalize_log_weights(&logs);
    if probs.iter().all(|&q| q == 0.0) {
        return Err(Error::NoFeasibleCandidate);
    }
    for (c, q) in candidates.iter_mut().zip(probs) {
        c.probability = q;
    }
    Ok(candidates)
}

/// Redraws the cell of measurement `id`. Returns whether the partition
/// changed.
pub fn gibbs_update<R: Rng + ?Sized>(p: &mut Partition, id: usize, rng: &mut R, cm: &CellModel) -> Result<bool> {
    let candidates = transition_distribution(p, id, cm)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for c in &candidates {
        if c.probability == 0.0 {
            continue;
        }
        chosen = Some(c);
        acc += c.probability;
        if u < acc {
            break;
        }
    }
    match chosen.and_then(|c| c.target) {
        Some(target) => {
            p.move_measurement(id, target, cm)?;
            Ok(true)
        }
        None => Ok(false),
    }
}

/// One iteration with a uniformly drawn measurement.
pub fn gibbs_step<R: Rng + ?Sized>(p: &mut Partition, rng: &mut R, cm: &CellModel) -> Result<bool> {
    let id = rng.random_range(0..p.len());
    gibbs_update(p, id, rng, cm)
}

/// Recorded chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub log_weight: f64,
    /// Cell key per measurement id.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleTrace {
    pub snapshots: Vec<Snapshot>,
    /// Number of iterations that changed the partition.
    pub accepted_moves: usize,
    /// Number of Gibbs updates attempted, summed over blocks.
    pub updates: usize,
    /// `(iteration, log weight)` every [`CHECKPOINT_INTERVAL`] iterations.
    pub checkpoints: Vec<(usize, f64)>,
}

fn should_record(iteration: usize, cfg: &SamplerConfig) -> bool {
    iteration > cfg.burn_in && (iteration - cfg.burn_in).is_multiple_of(cfg.thinning)
}

/// Runs one chain over the whole batch from the all-singletons state,
/// using `cfg.seed` as the stream seed.
pub fn run_chain(
    batch: &MeasurementBatch,
    prior: &PriorParams,
    model: &ModelConfig,
    cfg: &SamplerConfig,
) -> Result<SampleTrace> {
    cfg.validate()?;
    run_stream(batch, prior, model, cfg, cfg.seed)
}

fn run_stream(
    batch: &MeasurementBatch,
    prior: &PriorParams,
    model: &ModelConfig,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<SampleTrace> {
    let cm = CellModel::new(batch, prior, model).with_gate(cfg.gate_distance);
    let mut p = Partition::init_singletons(&cm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = SampleTrace::default();
    let n = p.len();
    for i in 1..=cfg.iterations {
        if n > 1 {
            let id = match cfg.sweep {
                SweepOrder::Random => rng.random_range(0..n),
                SweepOrder::Systematic => (i - 1) % n,
            };
            trace.updates += 1;
            if gibbs_update(&mut p, id, &mut rng, &cm)? {
                trace.accepted_moves += 1;
            }
        }
        if i % CHECKPOINT_INTERVAL == 0 {
            trace.checkpoints.push((i, p.log_weight()));
        }
        if should_record(i, cfg) {
            trace.snapshots.push(Snapshot {
                iteration: i,
                log_weight: p.log_weight(),
                labels: p.labels().to_vec(),
            });
        }
    }
    Ok(trace)
}

/// Splits the batch into gating blocks and runs an independent chain on each
/// in parallel. Block `b` uses seed `cfg.seed ^ b`; every block runs the full
/// iteration schedule, so snapshots line up and are merged by iteration.
pub fn run_blocked(
    batch: &MeasurementBatch,
    prior: &PriorParams,
    model: &ModelConfig,
    cfg: &SamplerConfig,
) -> Result<SampleTrace> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let blocks = gating_components(batch, model, cfg.gate_distance);
    let runs: Vec<(Vec<usize>, SampleTrace)> = blocks
        .par_iter()
        .enumerate()
        .map(|(b, ids)| {
            let (sub, global) = batch.subset(ids)?;
            let trace = run_stream(&sub, prior, model, cfg, cfg.seed ^ b as u64)?;
            log::debug!("block {b}: {} measurements, {} moves", ids.len(), trace.accepted_moves);
            Ok((global, trace))
        })
        .collect::<Result<_>>()?;

    let mut merged = SampleTrace::default();
    let first = &runs[0].1;
    for (s, snap) in first.snapshots.iter().enumerate() {
        let mut labels = vec![0; batch.len()];
        let mut log_weight = 0.0;
        for (global, trace) in &runs {
            let local = &trace.snapshots[s];
            debug_assert_eq!(local.iteration, snap.iteration);
            for (i, &key) in local.labels.iter().enumerate() {
                labels[global[i]] = global[key];
            }
            log_weight += local.log_weight;
        }
        merged.snapshots.push(Snapshot {
            iteration: snap.iteration,
            log_weight,
            labels,
        });
    }
    merged.accepted_moves = runs.iter().map(|(_, t)| t.accepted_moves).sum();
    merged.updates = runs.iter().map(|(_, t)| t.updates).sum();
    merged.checkpoints = first
        .checkpoints
        .iter()
        .enumerate()
        .map(|(c, &(iter, _))| (iter, runs.iter().map(|(_, t)| t.checkpoints[c].1).sum()))
        .collect();
    for &(iter, w) in &merged.checkpoints {
        log::info!("iteration {iter}: log weight {w:.4}");
    }
    Ok(merged)
}
