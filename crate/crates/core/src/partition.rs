//! Partitions of a measurement batch with cached per-cell likelihoods.
//!
//! Cells are keyed by their smallest member id, so two partitions with the
//! same grouping compare equal regardless of construction history.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::conjugacy::{cell_stats, log_cell_likelihood, CellStats};
use crate::error::{Error, Result};
use crate::model::{MeasurementBatch, ModelConfig, PriorParams};

/// Everything needed to score a cell: data, prior, sensor model and the
/// optional spatial gate.
///
/// With a finite gate, a cell is admissible only if its members are
/// connected under the "within gate distance" relation. This keeps the gate
/// a property of the partition itself, so the target distribution stays
/// well defined.
#[derive(Debug, Clone, Copy)]
pub struct CellModel<'a> {
    pub batch: &'a MeasurementBatch,
    pub prior: &'a PriorParams,
    pub model: &'a ModelConfig,
    gate: f64,
}

impl<'a> CellModel<'a> {
    pub fn new(batch: &'a MeasurementBatch, prior: &'a PriorParams, model: &'a ModelConfig) -> Self {
        Self {
            batch,
            prior,
            model,
            gate: f64::INFINITY,
        }
    }

    /// Sets the spatial gate distance; `f64::INFINITY` disables gating.
    pub fn with_gate(mut self, gate: f64) -> Self {
        self.gate = gate;
        self
    }

    pub fn gate(&self) -> f64 {
        self.gate
    }

    fn within_gate(&self, a: usize, b: usize) -> bool {
        let za = self.batch.measurements()[a].z;
        let zb = self.batch.measurements()[b].z;
        (za - zb).norm_squared() <= self.gate * self.gate
    }

    /// Connectivity of `members` under the gate relation.
    pub fn gate_connected(&self, members: &[usize]) -> bool {
        if !self.gate.is_finite() || members.len() <= 1 {
            return true;
        }
        let mut reached = vec![false; members.len()];
        let mut stack = vec![0];
        reached[0] = true;
        let mut seen = 1;
        while let Some(i) = stack.pop() {
            for j in 0..members.len() {
                if !reached[j] && self.within_gate(members[i], members[j]) {
                    reached[j] = true;
                    seen += 1;
                    stack.push(j);
                }
            }
        }
        seen == members.len()
    }

    /// Log factor of a cell, `-inf` when the cell is infeasible.
    pub fn log_factor(&self, stats: &CellStats, members: &[usize]) -> Result<f64> {
        if !stats.is_fov_feasible(self.batch, self.model) || !self.gate_connected(members) {
            return Ok(f64::NEG_INFINITY);
        }
        log_cell_likelihood(stats, self.prior, self.model)
    }

    /// Builds a cell from its (unsorted) member ids.
    pub fn cell(&self, mut members: Vec<usize>) -> Result<Cell> {
        members.sort_unstable();
        let stats = cell_stats(&members, self.batch, self.model)?;
        let log_likelihood = self.log_factor(&stats, &members)?;
        Ok(Cell {
            members,
            stats,
            log_likelihood,
        })
    }

    /// Log factor of `cell` with measurement `id` added, using the rank-one
    /// update and rejecting infeasible results before the missed-detection
    /// count is evaluated.
    pub fn log_factor_with_added(&self, cell: &Cell, id: usize) -> Result<f64> {
        let m = self.batch.measurement(id).ok_or(Error::UnknownMeasurement(id))?;
        if self.gate.is_finite() {
            if cell.log_likelihood.is_finite() {
                if !cell.members.iter().any(|&o| self.within_gate(o, id)) {
                    return Ok(f64::NEG_INFINITY);
                }
            } else {
                let mut members = cell.members.clone();
                members.push(id);
                if !self.gate_connected(&members) {
                    return Ok(f64::NEG_INFINITY);
                }
            }
        }
        let centroid = (cell.stats.sum + m.z) / (cell.stats.count + 1) as f64;
        let fov = &self.model.fov;
        let visible = |scan: usize| crate::model::fov_contains(self.batch.pose(scan), &centroid, fov);
        if !visible(m.scan) || !cell.stats.per_scan_counts.keys().all(|&k| visible(k)) {
            return Ok(f64::NEG_INFINITY);
        }
        let stats = cell.stats.with_added(m, self.batch, self.model);
        log_cell_likelihood(&stats, self.prior, self.model)
    }
}

/// One cell: sorted member ids, statistics and cached log factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub members: Vec<usize>,
    pub stats: CellStats,
    pub log_likelihood: f64,
}

impl Cell {
    pub fn key(&self) -> usize {
        self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Destination of a measurement move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveTarget {
    /// Join the existing cell with this key.
    Cell(usize),
    /// Open a new singleton cell.
    Fresh,
}

/// Disjoint cover of all measurement ids by non-empty cells.
#[derive(Debug, Clone)]
pub struct Partition {
    assignment: Vec<usize>,
    cells: BTreeMap<usize, Cell>,
    finite_log_weight: f64,
    infeasible_cells: usize,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.assignment == other.assignment
    }
}

impl Eq for Partition {}

impl Partition {
    /// Every measurement in its own cell.
    pub fn init_singletons(cm: &CellModel) -> Result<Self> {
        if cm.batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let labels: Vec<usize> = (0..cm.batch.len()).collect();
        Self::from_labels(&labels, cm)
    }

    /// All measurements in one cell.
    pub fn single_cell(cm: &CellModel) -> Result<Self> {
        if cm.batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Self::from_labels(&vec![0; cm.batch.len()], cm)
    }

    /// Builds a partition from arbitrary labels, one per measurement.
    /// Measurements sharing a label share a cell.
    pub fn from_labels(labels: &[usize], cm: &CellModel) -> Result<Self> {
        if labels.len() != cm.batch.len() {
            return Err(Error::Format(format!(
                "{} labels for {} measurements",
                labels.len(),
                cm.batch.len()
            )));
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (id, &label) in labels.iter().enumerate() {
            groups.entry(label).or_default().push(id);
        }
        let mut p = Self {
            assignment: vec![0; labels.len()],
            cells: BTreeMap::new(),
            finite_log_weight: 0.0,
            infeasible_cells: 0,
        };
        for members in groups.into_values() {
            let cell = cm.cell(members)?;
            p.insert_cell(cell);
        }
        Ok(p)
    }

    fn insert_cell(&mut self, cell: Cell) {
        let key = cell.key();
        for &m in &cell.members {
            self.assignment[m] = key;
        }
        self.add_factor(cell.log_likelihood);
        self.cells.insert(key, cell);
    }

    fn take_cell(&mut self, key: usize) -> Option<Cell> {
        let cell = self.cells.remove(&key)?;
        self.remove_factor(cell.log_likelihood);
        Some(cell)
    }

    fn add_factor(&mut self, f: f64) {
        if f.is_finite() {
            self.finite_log_weight += f;
        } else {
            self.infeasible_cells += 1;
        }
    }

    fn remove_factor(&mut self, f: f64) {
        if f.is_finite() {
            self.finite_log_weight -= f;
        } else {
            self.infeasible_cells -= 1;
        }
    }

    /// Moves measurement `id` into `target`. Only the two touched cells are
    /// rebuilt; an emptied source cell disappears with factor one.
    pub fn move_measurement(&mut self, id: usize, target: MoveTarget, cm: &CellModel) -> Result<()> {
        let source = *self.assignment.get(id).ok_or(Error::UnknownMeasurement(id))?;
        match target {
            MoveTarget::Cell(key) if key == source => {
                return Err(Error::InvalidMove(format!(
                    "measurement {id} already belongs to cell {key}"
                )))
            }
            MoveTarget::Cell(key) if !self.cells.contains_key(&key) => {
                return Err(Error::UnknownCell(key))
            }
            MoveTarget::Fresh if self.cells[&source].len() == 1 => return Ok(()),
            _ => {}
        }

        let old = self.take_cell(source).expect("assignment refers to a live cell");
        let rest: Vec<usize> = old.members.into_iter().filter(|&m| m != id).collect();
        if !rest.is_empty() {
            let cell = cm.cell(rest)?;
            self.insert_cell(cell);
        }
        let joined = match target {
            MoveTarget::Cell(key) => {
                let mut members = self.take_cell(key).expect("checked above").members;
                members.push(id);
                members
            }
            MoveTarget::Fresh => vec![id],
        };
        let cell = cm.cell(joined)?;
        self.insert_cell(cell);
        Ok(())
    }

    /// Unnormalized log weight: sum of the cached cell factors.
    pub fn log_weight(&self) -> f64 {
        if self.infeasible_cells > 0 {
            f64::NEG_INFINITY
        } else {
            self.finite_log_weight
        }
    }

    /// Log weight summed afresh from the cached cell factors.
    pub fn recompute_log_weight(&self) -> f64 {
        self.cells.values().map(|c| c.log_likelihood).sum()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Key of the cell containing `id`.
    pub fn cell_of(&self, id: usize) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn cell(&self, key: usize) -> Option<&Cell> {
        self.cells.get(&key)
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values()
    }

    /// Cell key of every measurement, indexed by id.
    pub fn labels(&self) -> &[usize] {
        &self.assignment
    }

    /// Restricted-growth-string form: cells numbered by first appearance.
    pub fn restricted_growth_string(&self) -> Vec<usize> {
        let mut index = BTreeMap::new();
        self.assignment
            .iter()
            .map(|key| {
                let next = index.len();
                *index.entry(*key).or_insert(next)
            })
            .collect()
    }

    /// Re-derives the assignment from the cells and checks coverage,
    /// disjointness and canonical keys.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.assignment.len()];
        for (&key, cell) in &self.cells {
            if cell.members.is_empty() {
                return Err(Error::Format(format!("cell {key} is empty")));
            }
            if cell.key() != key {
                return Err(Error::Format(format!(
                    "cell keyed {key} has smallest member {}",
                    cell.key()
                )));
            }
            for &m in &cell.members {
                if m >= seen.len() || seen[m] {
                    return Err(Error::Format(format!("measurement {m} covered twice or out of range")));
                }
                seen[m] = true;
                if self.assignment[m] != key {
                    return Err(Error::Format(format!(
                        "measurement {m} assigned to {} but listed in {key}",
                        self.assignment[m]
                    )));
                }
            }
        }
        if let Some(m) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!("measurement {m} not covered")));
        }
        Ok(())
    }

    /// `id,cellKey` lines, one per measurement.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,cellKey\n");
        for (id, key) in self.assignment.iter().enumerate() {
            let _ = writeln!(out, "{id},{key}");
        }
        out
    }

    /// Inverse of [`Partition::to_csv`].
    pub fn from_csv(text: &str, cm: &CellModel) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut labels = vec![usize::MAX; cm.batch.len()];
        for record in reader.deserialize::<(usize, usize)>() {
            let (id, key) = record?;
            if id >= labels.len() {
                return Err(Error::UnknownMeasurement(id));
            }
            labels[id] = key;
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::Format("partition does not cover every measurement".into()));
        }
        Self::from_labels(&labels, cm)
    }
}
