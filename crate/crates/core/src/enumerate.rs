//! Exhaustive enumeration of set partitions for small batches.

use crate::error::{Error, Result};
use crate::partition::{CellModel, Partition};

/// Largest batch size accepted by [`enumerate_partitions`].
pub const ENUMERATION_CAP: usize = 12;

/// Bell number `B(n)`, the count of set partitions of `n` elements.
pub fn bell_number(n: usize) -> u128 {
    // Bell triangle
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

/// Iterator over restricted growth strings of length `n`, i.e. label
/// vectors with `a[0] = 0` and `a[i] <= 1 + max(a[..i])`. Each set
/// partition appears exactly once.
#[derive(Debug, Clone)]
pub struct RestrictedGrowthStrings {
    current: Vec<usize>,
    prefix_max: Vec<usize>,
    done: bool,
}

impl RestrictedGrowthStrings {
    pub fn new(n: usize) -> Self {
        Self {
            current: vec![0; n],
            prefix_max: vec![0; n],
            done: false,
        }
    }
}

impl Iterator for RestrictedGrowthStrings {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let n = self.current.len();
        // prefix_max[i] = max(a[..i]) for i >= 1
        let mut i = n;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.current[i] <= self.prefix_max[i] {
                self.current[i] += 1;
                for j in i + 1..n {
                    self.current[j] = 0;
                    self.prefix_max[j] = self.prefix_max[j - 1].max(self.current[j - 1]);
                }
                break;
            }
        }
        Some(out)
    }
}

/// Every partition of the batch with its log weight. Fails for batches
/// larger than [`ENUMERATION_CAP`].
pub fn enumerate_partitions(cm: &CellModel) -> Result<Vec<Partition>> {
    let n = cm.batch.len();
    if n > ENUMERATION_CAP {
        return Err(Error::TooManyMeasurements { n, cap: ENUMERATION_CAP });
    }
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    RestrictedGrowthStrings::new(n)
        .map(|labels| Partition::from_labels(&labels, cm))
        .collect()
}

/// Normalized probabilities from log weights, stable under large offsets.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; log_weights.len()];
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn bell_numbers() {
        let expected = [1u128, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975, 678570, 4213597];
        for (n, &b) in expected.iter().enumerate() {
            assert_eq!(bell_number(n), b, "B({n})");
        }
    }

    #[test]
    fn strings_are_distinct_and_counted() {
        for n in 1..=8 {
            let all: Vec<Vec<usize>> = RestrictedGrowthStrings::new(n).collect();
            assert_eq!(all.len() as u128, bell_number(n));
            let unique: HashSet<_> = all.iter().cloned().collect();
            assert_eq!(unique.len(), all.len());
            for s in &all {
                assert_eq!(s[0], 0);
                let mut max = 0;
                for &a in &s[1..] {
                    assert!(a <= max + 1);
                    max = max.max(a);
                }
            }
        }
    }

    #[test]
    fn three_element_listing() {
        let all: Vec<Vec<usize>> = RestrictedGrowthStrings::new(3).collect();
        assert_eq!(
            all,
            vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0], vec![0, 1, 1], vec![0, 1, 2]]
        );
    }

    #[test]
    fn normalization() {
        let p = normalize_log_weights(&[1000.0, 1000.0 + 2f64.ln(), f64::NEG_INFINITY]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
    }
}
