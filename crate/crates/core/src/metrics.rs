//! Partition comparison and graph-cut metrics. Natural logarithms throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Clustering;
use crate::spectral::WeightedAdjacency;

/// `H(T) = -sum_i (|T_i|/p) log(|T_i|/p)`.
pub fn entropy(t: &Clustering) -> f64 {
    entropy_of_sizes(&t.sizes(), t.len())
}

fn entropy_of_sizes(sizes: &[usize], p: usize) -> f64 {
    let p = p as f64;
    let h: f64 = sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let f = s as f64 / p;
            -f * f.ln()
        })
        .sum();
    h.max(0.0)
}

fn contingency(a: &Clustering, b: &Clustering) -> Vec<Vec<usize>> {
    let mut table = vec![vec![0usize; b.k()]; a.k()];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        table[x][y] += 1;
    }
    table
}

pub fn mutual_information(a: &Clustering, b: &Clustering) -> Result<f64> {
    check_same_len(a, b)?;
    let p = a.len() as f64;
    let (sa, sb) = (a.sizes(), b.sizes());
    let mut mi = 0.0;
    for (i, row) in contingency(a, b).iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            if n > 0 {
                let n = n as f64;
                mi += n / p * (p * n / (sa[i] as f64 * sb[j] as f64)).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

fn check_same_len(a: &Clustering, b: &Clustering) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dimension(format!("partitions cover {} and {} items", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::input("partitions are empty"));
    }
    Ok(())
}

/// How an NMI value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmiFlag {
    Computed,
    /// Both partitions have one cluster; reported as 1.
    BothTrivial,
    /// Exactly one partition has one cluster; reported as 0.
    OneTrivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nmi {
    pub value: f64,
    pub flag: NmiFlag,
}

/// `MI / sqrt(H(a) H(b))`.
pub fn nmi(truth: &Clustering, estimate: &Clustering) -> Result<Nmi> {
    check_same_len(truth, estimate)?;
    let (ta, tb) = (truth.k() == 1, estimate.k() == 1);
    if ta && tb {
        return Ok(Nmi { value: 1.0, flag: NmiFlag::BothTrivial });
    }
    if ta || tb {
        return Ok(Nmi { value: 0.0, flag: NmiFlag::OneTrivial });
    }
    let mi = mutual_information(truth, estimate)?;
    let value = (mi / (entropy(truth) * entropy(estimate)).sqrt()).clamp(0.0, 1.0);
    Ok(Nmi { value, flag: NmiFlag::Computed })
}

fn check_graph(w: &WeightedAdjacency, c: &Clustering) -> Result<()> {
    if w.dim() != c.len() {
        return Err(Error::dimension(format!("graph has {} vertices, clustering {}", w.dim(), c.len())));
    }
    Ok(())
}

/// Sum of `w_ij` over unordered pairs `i < j` in different clusters.
pub fn between_cluster_edge_density(w: &WeightedAdjacency, c: &Clustering) -> Result<f64> {
    check_graph(w, c)?;
    let l = c.labels();
    let mut total = 0.0;
    for i in 0..w.dim() {
        for j in 0..i {
            if l[i] != l[j] {
                total += w.weight(i, j);
            }
        }
    }
    Ok(total)
}

/// Sum of `w_ij` over unordered pairs `i < j` in the same cluster.
pub fn within_cluster_sum(w: &WeightedAdjacency, c: &Clustering) -> Result<f64> {
    check_graph(w, c)?;
    let l = c.labels();
    let mut total = 0.0;
    for i in 0..w.dim() {
        for j in 0..i {
            if l[i] == l[j] {
                total += w.weight(i, j);
            }
        }
    }
    Ok(total)
}

pub fn total_weight(w: &WeightedAdjacency) -> f64 {
    let mut total = 0.0;
    for i in 0..w.dim() {
        for j in 0..i {
            total += w.weight(i, j);
        }
    }
    total
}
