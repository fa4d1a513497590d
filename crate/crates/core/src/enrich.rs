//! Pathway enrichment of clusters: the posterior probability that a
//! binomial proportion exceeds one half under a uniform prior.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::io;
use crate::partition::Clustering;

/// Entries above this are flagged as enriched.
pub const ENRICHED_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 4;

/// `P(theta > 1/2 | y)` for `y ~ Bin(n, theta)`, `theta ~ Beta(1, 1)`.
pub fn enrichment_probability(y: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("pathway size must be at least 1"));
    }
    if y > n {
        return Err(Error::input(format!("count {y} exceeds pathway size {n}")));
    }
    // P(theta > x) under Beta(a, b) is I_{1-x}(b, a)
    Ok(beta_reg((n - y + 1) as f64, (y + 1) as f64, 0.5))
}

/// Named sets of variables, in first-appearance order of the pathways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayMap {
    names: Vec<String>,
    members: Vec<Vec<String>>,
}

impl PathwayMap {
    pub fn new(entries: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut names = Vec::new();
        let mut members = Vec::new();
        let mut seen = HashSet::new();
        for (name, vars) in entries {
            if !seen.insert(name.clone()) {
                return Err(Error::input(format!("duplicate pathway `{name}`")));
            }
            let mut uniq = Vec::new();
            let mut seen_vars = HashSet::new();
            for v in vars {
                if seen_vars.insert(v.clone()) {
                    uniq.push(v);
                }
            }
            if uniq.is_empty() {
                return Err(Error::input(format!("pathway `{name}` has no members")));
            }
            names.push(name);
            members.push(uniq);
        }
        Ok(PathwayMap { names, members })
    }

    /// Parse `pathway,variable` rows with a header line.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut order: Vec<String> = Vec::new();
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::input(format!("pathway map row {}: {e}", i + 1)))?;
            if rec.len() != 2 {
                return Err(Error::input(format!("pathway map row {} has {} fields, expected 2", i + 1, rec.len())));
            }
            let (pw, var) = (rec[0].to_string(), rec[1].to_string());
            if pw.is_empty() || var.is_empty() {
                return Err(Error::input(format!("pathway map row {} has an empty field", i + 1)));
            }
            if !map.contains_key(&pw) {
                order.push(pw.clone());
            }
            map.entry(pw).or_default().push(var);
        }
        if order.is_empty() {
            return Err(Error::input("pathway map is empty"));
        }
        Self::new(order.into_iter().map(|n| {
            let m = map.remove(&n).unwrap_or_default();
            (n, m)
        }).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_csv(&io::read_to_string(path)?)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn members(&self, j: usize) -> &[String] {
        &self.members[j]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Clusters by pathways matrix of enrichment probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentMatrix {
    /// Zero-based labels of the clusters kept, one per row.
    pub clusters: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    pub pathways: Vec<String>,
    /// `N_j` after dropping members absent from the data.
    pub pathway_sizes: Vec<usize>,
    pub counts: DMatrix<usize>,
    pub probabilities: DMatrix<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedPair {
    /// One-based cluster label.
    pub cluster: usize,
    pub pathway: String,
    pub count: usize,
    pub pathway_size: usize,
    pub probability: f64,
}

pub fn enrichment_matrix(clusters: &Clustering, names: &[String], pathways: &PathwayMap, min_cluster_size: usize) -> Result<EnrichmentMatrix> {
    if min_cluster_size == 0 {
        return Err(Error::config("min_cluster_size must be at least 1"));
    }
    if names.len() != clusters.len() {
        return Err(Error::dimension(format!("{} names for {} clustered variables", names.len(), clusters.len())));
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut warnings = Vec::new();
    let mut kept_pathways = Vec::new();
    let mut member_idx = Vec::new();
    for (j, pw) in pathways.names.iter().enumerate() {
        let mut idx = Vec::new();
        for m in &pathways.members[j] {
            match index.get(m.as_str()) {
                Some(&i) => idx.push(i),
                None => warnings.push(format!("pathway `{pw}`: member `{m}` not in data, dropped")),
            }
        }
        if idx.is_empty() {
            warnings.push(format!("pathway `{pw}` has no members in the data, dropped"));
            continue;
        }
        kept_pathways.push(pw.clone());
        member_idx.push(idx);
    }
    let sizes = clusters.sizes();
    let kept: Vec<usize> = (0..clusters.k()).filter(|&k| sizes[k] >= min_cluster_size).collect();
    let row_of: BTreeMap<usize, usize> = kept.iter().enumerate().map(|(r, &k)| (k, r)).collect();
    let labels = clusters.labels();
    let mut counts = DMatrix::<usize>::zeros(kept.len(), kept_pathways.len());
    for (j, idx) in member_idx.iter().enumerate() {
        for &i in idx {
            if let Some(&r) = row_of.get(&labels[i]) {
                counts[(r, j)] += 1;
            }
        }
    }
    let pathway_sizes: Vec<usize> = member_idx.iter().map(|m| m.len()).collect();
    let mut probabilities = DMatrix::zeros(kept.len(), kept_pathways.len());
    for r in 0..kept.len() {
        for j in 0..kept_pathways.len() {
            probabilities[(r, j)] = enrichment_probability(counts[(r, j)], pathway_sizes[j])?;
        }
    }
    Ok(EnrichmentMatrix {
        cluster_sizes: kept.iter().map(|&k| sizes[k]).collect(),
        clusters: kept,
        pathways: kept_pathways,
        pathway_sizes,
        counts,
        probabilities,
        warnings,
    })
}

impl EnrichmentMatrix {
    pub fn enriched_pairs(&self) -> Vec<EnrichedPair> {
        let mut out = Vec::new();
        for (r, &k) in self.clusters.iter().enumerate() {
            for (j, pw) in self.pathways.iter().enumerate() {
                let p = self.probabilities[(r, j)];
                if p > ENRICHED_THRESHOLD {
                    out.push(EnrichedPair {
                        cluster: k + 1,
                        pathway: pw.clone(),
                        count: self.counts[(r, j)],
                        pathway_size: self.pathway_sizes[j],
                        probability: p,
                    });
                }
            }
        }
        out
    }

    /// Heatmap with one row per pathway and one column per kept cluster.
    pub fn write_heatmap_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::input(e.to_string());
        let mut header = vec!["pathway".to_string()];
        header.extend(self.clusters.iter().map(|k| format!("cluster_{}", k + 1)));
        w.write_record(&header).map_err(csv_err)?;
        for (j, pw) in self.pathways.iter().enumerate() {
            let mut rec = vec![pw.clone()];
            rec.extend((0..self.clusters.len()).map(|r| io::format_sig10(self.probabilities[(r, j)])));
            w.write_record(&rec).map_err(csv_err)?;
        }
        io::finish_csv(path, w)
    }

    pub fn write_enriched_json(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.enriched_pairs())
    }
}
