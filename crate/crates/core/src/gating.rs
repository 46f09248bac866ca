//! Decomposition of a batch into independent blocks.
//!
//! Two measurements are linked when they lie within the gate distance and
//! the sensor poses of their scans are close enough for the two fields of
//! view to overlap. Any cell spanning two components contains a linked pair
//! that no single point can satisfy, so its weight is zero and blocks can be
//! sampled separately.

use std::collections::{BTreeMap, HashMap};

use crate::model::{MeasurementBatch, ModelConfig};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }

    /// Groups of elements, each sorted, ordered by smallest element.
    pub(crate) fn groups(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut first: HashMap<usize, usize> = HashMap::new();
        for x in 0..self.parent.len() {
            let r = self.find(x);
            let k = *first.entry(r).or_insert(x);
            by_root.entry(k).or_default().push(x);
        }
        by_root.into_values().collect()
    }
}

/// Connected components of the gating graph as sorted id blocks, ordered by
/// smallest id. An infinite gate yields a single block.
pub fn gating_components(batch: &MeasurementBatch, model: &ModelConfig, gate_distance: f64) -> Vec<Vec<usize>> {
    let n = batch.len();
    if n == 0 {
        return Vec::new();
    }
    if !gate_distance.is_finite() {
        return vec![(0..n).collect()];
    }
    let ms = batch.measurements();
    let max_pose_sq = (2.0 * model.fov.range).powi(2);
    let gate_sq = gate_distance * gate_distance;

    let key = |i: usize| {
        let z = ms[i].z;
        ((z.x / gate_distance).floor() as i64, (z.y / gate_distance).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for i in 0..n {
        grid.entry(key(i)).or_default().push(i);
    }

    let mut uf = UnionFind::new(n);
    for i in 0..n {
        let (gx, gy) = key(i);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(gx + dx, gy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j <= i || (ms[i].z - ms[j].z).norm_squared() > gate_sq {
                        continue;
                    }
                    let pi = batch.pose(ms[i].scan).position();
                    let pj = batch.pose(ms[j].scan).position();
                    if (pi - pj).norm_squared() <= max_pose_sq {
                        uf.union(i, j);
                    }
                }
            }
        }
    }
    uf.groups()
}
