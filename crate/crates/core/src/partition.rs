//! Hard clusterings of the `p` variables.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which procedure produced a clustering, with the parameters it ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ClusteringMethod {
    DpMeans(crate::dpcluster::DPMeansConfig),
    Dpmm(crate::dpcluster::DPMMConfig),
    KMeans { k: usize, restarts: usize, seed: u64 },
    Consensus { k: usize, seed: u64 },
    Truth,
    External { name: String },
}

/// A labeling of `p` items into `k` nonempty clusters.
///
/// Labels are zero-based and contiguous (`0..k`), numbered in order of first
/// appearance. Files written by this crate use one-based labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    labels: Vec<usize>,
    k: usize,
    pub centers: Option<DMatrix<f64>>,
    pub objective: Option<f64>,
    pub method: ClusteringMethod,
}

/// Relabel arbitrary labels to `0..k` in order of first appearance.
pub fn compact_labels<L: Copy + Eq + std::hash::Hash>(raw: &[L]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let labels = raw
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (labels, map.len())
}

impl Clustering {
    /// Build from arbitrary labels; they are compacted.
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(raw: &[L], method: ClusteringMethod) -> Self {
        let (labels, k) = compact_labels(raw);
        Clustering {
            labels,
            k,
            centers: None,
            objective: None,
            method,
        }
    }

    /// Build from one-based labels as read from a file.
    pub fn from_one_based(raw: &[usize], method: ClusteringMethod) -> Result<Self> {
        if raw.iter().any(|&l| l == 0) {
            return Err(Error::input("cluster labels must be >= 1"));
        }
        Ok(Self::from_labels(raw, method))
    }

    pub fn truth(raw: &[usize]) -> Self {
        Self::from_labels(raw, ClusteringMethod::Truth)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Member indices of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Same partition, ignoring label names.
    pub fn same_partition(&self, other: &Clustering) -> bool {
        self.labels.len() == other.labels.len() && compact_labels(&self.labels).0 == compact_labels(&other.labels).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compaction_in_first_appearance_order() {
        let c = Clustering::from_labels(&[7, 7, 3, 9, 3], ClusteringMethod::Truth);
        assert_eq!(c.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(c.k(), 3);
        assert_eq!(c.sizes(), vec![2, 2, 1]);
        assert_eq!(c.one_based_labels(), vec![1, 1, 2, 3, 2]);
    }

    #[test]
    fn partition_equality_ignores_names() {
        let a = Clustering::truth(&[1, 1, 2]);
        let b = Clustering::truth(&[5, 5, 0]);
        let c = Clustering::truth(&[1, 2, 2]);
        assert!(a.same_partition(&b));
        assert!(!a.same_partition(&c));
    }

    #[test]
    fn zero_one_based_label_rejected() {
        assert!(Clustering::from_one_based(&[0, 1], ClusteringMethod::Truth).is_err());
    }
}
