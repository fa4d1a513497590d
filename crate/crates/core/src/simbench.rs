//! Simulation design and benchmark harness.
//!
//! Data are drawn from `f(x) = prod_j N_{p_j}(x_j; 0, Sigma_j)` where the
//! blocks `x_j` follow a uniformly random partition of the variables into `K`
//! blocks and each `Sigma_j ~ Wishart(p_j + 1, I)`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::dpcluster;
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{self, NmiFlag};
use crate::neighborhood;
use crate::par::Execution;
use crate::partition::{Clustering, ClusteringMethod};
use crate::pipeline::BngcConfig;
use crate::rng::{self, StreamRng};
use crate::spectral::{SpectralConfig, WeightedAdjacency};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    #[serde(default = "default_reps")]
    pub n_partitions: usize,
    #[serde(default = "default_reps")]
    pub n_datasets_per_partition: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_reps() -> usize {
    10
}

impl SimDesign {
    pub fn new(n: usize, p: usize, k: usize) -> Self {
        SimDesign {
            n,
            p,
            k,
            n_partitions: 10,
            n_datasets_per_partition: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!("n must be >= 2, got {}", self.n)));
        }
        if self.k == 0 || self.k > self.p {
            return Err(Error::config(format!("K = {} outside 1..=p ({})", self.k, self.p)));
        }
        if self.n_partitions == 0 || self.n_datasets_per_partition == 0 {
            return Err(Error::config("replicate counts must be >= 1"));
        }
        Ok(())
    }
}

/// `log S(n, k)` for all `n <= max_n`, `k <= max_n` (Stirling numbers of the
/// second kind); `-inf` where `S = 0`.
fn log_stirling_table(max_n: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![f64::NEG_INFINITY; max_n + 1]; max_n + 1];
    t[0][0] = 0.0;
    for n in 1..=max_n {
        for k in 1..=n {
            let a = t[n - 1][k - 1];
            let b = (k as f64).ln() + t[n - 1][k];
            t[n][k] = log_add(a, b);
        }
    }
    t
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Uniform draw from the set partitions of `0..p` into exactly `k` nonempty
/// blocks.
///
/// Element `n` either forms a singleton block (probability
/// `S(n-1, k-1) / S(n, k)`) or joins one of the `k` blocks of a partition of
/// the first `n - 1` elements, which is what the Stirling recursion counts.
pub fn random_partition(p: usize, k: usize, rng: &mut impl Rng) -> Result<Clustering> {
    if k == 0 || k > p {
        return Err(Error::input(format!("cannot split {p} items into {k} nonempty blocks")));
    }
    let t = log_stirling_table(p);
    let mut labels = vec![0usize; p];
    let mut kk = k;
    for n in (1..=p).rev() {
        let singleton = if kk == n {
            true
        } else if kk == 0 {
            unreachable!()
        } else {
            let log_prob = t[n - 1][kk - 1] - t[n][kk];
            rng.random::<f64>() < log_prob.exp()
        };
        if singleton {
            labels[n - 1] = kk - 1;
            kk -= 1;
        } else {
            labels[n - 1] = rng.random_range(0..kk);
        }
    }
    debug_assert_eq!(kk, 0);
    Ok(Clustering::truth(&labels))
}

/// `Wishart(p_j + 1, I)` via the Bartlett decomposition `A A^T` with
/// `A_ii = sqrt(chi2(df - i))` (zero-based `i`) and standard normals below
/// the diagonal.
pub fn sample_block_covariance(p_j: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    assert!(p_j >= 1);
    let df = (p_j + 1) as f64;
    let mut a = DMatrix::zeros(p_j, p_j);
    for i in 0..p_j {
        let chi = ChiSquared::new(df - i as f64).expect("positive degrees of freedom");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    &a * a.transpose()
}

/// One simulated dataset with its generating truth.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub data: DataMatrix,
    /// Block covariances in block order (block `c` covers `partition.members()[c]`).
    pub covariances: Vec<DMatrix<f64>>,
    /// Population partial correlations, unit diagonal.
    pub true_partial_correlations: DMatrix<f64>,
}

impl SimulatedDataset {
    /// `|R|` of the generating model.
    pub fn true_adjacency(&self) -> WeightedAdjacency {
        let r = &self.true_partial_correlations;
        let p = r.nrows();
        let w = DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { r[(i, j)].abs() });
        WeightedAdjacency::new_unchecked(w, self.data.names().to_vec())
    }
}

pub fn simulate_dataset(n: usize, partition: &Clustering, rng: &mut impl Rng) -> Result<SimulatedDataset> {
    let p = partition.len();
    if n == 0 {
        return Err(Error::input("n must be >= 1"));
    }
    let mut x = DMatrix::zeros(n, p);
    let mut r = DMatrix::identity(p, p);
    let mut covariances = Vec::with_capacity(partition.k());
    for members in partition.members() {
        let pj = members.len();
        let sigma = sample_block_covariance(pj, rng);
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("Wishart draw is not positive definite"))?;
        let l = chol.l();
        let omega = chol.inverse();
        let rb = neighborhood::partial_correlations_from_precision(&omega);
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                r[(i, j)] = rb[(a, b)];
            }
        }
        let mut z = vec![0.0; pj];
        for row in 0..n {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            for (a, &i) in members.iter().enumerate() {
                x[(row, i)] = (0..=a).map(|b| l[(a, b)] * z[b]).sum();
            }
        }
        covariances.push(sigma);
    }
    Ok(SimulatedDataset {
        data: DataMatrix::from_matrix(x)?,
        covariances,
        true_partial_correlations: r,
    })
}

/// A benchmarked method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodConfig {
    /// Partial-correlation graph, Laplacian embedding, DP clustering.
    Bngc {
        #[serde(default)]
        config: BngcConfig,
    },
    /// k-means with the true `K` on the `K`-eigenvector embedding of the same
    /// estimated graph.
    KMeans {
        #[serde(default = "default_restarts")]
        restarts: usize,
        #[serde(default)]
        spectral: SpectralConfig,
    },
    /// Labels computed elsewhere, read from
    /// `dir/partition{i}_dataset{j}.csv` (one one-based label per line).
    External { name: String, dir: PathBuf },
}

fn default_restarts() -> usize {
    20
}

impl MethodConfig {
    pub fn name(&self) -> String {
        match self {
            MethodConfig::Bngc { .. } => "BNGC".into(),
            MethodConfig::KMeans { .. } => "k-means".into(),
            MethodConfig::External { name, .. } => name.clone(),
        }
    }

    pub fn bngc() -> Self {
        MethodConfig::Bngc { config: BngcConfig::default() }
    }

    pub fn kmeans() -> Self {
        MethodConfig::KMeans {
            restarts: default_restarts(),
            spectral: SpectralConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub design: SimDesign,
    pub partition_index: usize,
    pub dataset_index: usize,
    pub method: String,
    /// One-based.
    pub truth: Vec<usize>,
    /// One-based; empty when the method failed.
    pub labels: Vec<usize>,
    pub k_estimated: usize,
    /// NaN (null in JSON) when the method failed.
    #[serde(deserialize_with = "nan_if_null")]
    pub nmi: f64,
    pub nmi_flag: Option<NmiFlag>,
    /// Unordered-pair sum of the true `|R|` across estimated clusters.
    #[serde(deserialize_with = "nan_if_null")]
    pub edge_density: f64,
    pub seconds: f64,
    pub seeds: Seeds,
    pub error: Option<String>,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub partition: u64,
    pub dataset: u64,
    pub method: u64,
}

impl BenchmarkRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn partition_seed(design: &SimDesign, pi: usize) -> u64 {
    rng::derive_seed(design.seed, "partition", &[pi as u64])
}

fn dataset_seed(design: &SimDesign, pi: usize, di: usize) -> u64 {
    rng::derive_seed(design.seed, "dataset", &[pi as u64, di as u64])
}

fn method_seed(design: &SimDesign, pi: usize, di: usize) -> u64 {
    rng::derive_seed(design.seed, "method", &[pi as u64, di as u64])
}

pub fn design_partition(design: &SimDesign, pi: usize) -> Result<Clustering> {
    let mut r: StreamRng = rng::stream(partition_seed(design, pi), "partition", &[]);
    random_partition(design.p, design.k, &mut r)
}

pub fn design_dataset(design: &SimDesign, partition: &Clustering, pi: usize, di: usize) -> Result<SimulatedDataset> {
    let mut r: StreamRng = rng::stream(dataset_seed(design, pi, di), "dataset", &[]);
    simulate_dataset(design.n, partition, &mut r)
}

struct Shared {
    graph: Option<std::result::Result<WeightedAdjacency, String>>,
}

fn score(
    design: &SimDesign,
    truth: &Clustering,
    true_w: &WeightedAdjacency,
    pi: usize,
    di: usize,
    method: &MethodConfig,
    seeds: Seeds,
    outcome: Result<Clustering>,
    seconds: f64,
) -> BenchmarkRecord {
    let mut rec = BenchmarkRecord {
        design: design.clone(),
        partition_index: pi,
        dataset_index: di,
        method: method.name(),
        truth: truth.one_based_labels(),
        labels: Vec::new(),
        k_estimated: 0,
        nmi: f64::NAN,
        nmi_flag: None,
        edge_density: f64::NAN,
        seconds,
        seeds,
        error: None,
    };
    let scored = outcome.and_then(|c| {
        let nmi = metrics::nmi(truth, &c)?;
        let density = metrics::between_cluster_edge_density(true_w, &c)?;
        Ok((c, nmi, density))
    });
    match scored {
        Ok((c, nmi, density)) => {
            rec.labels = c.one_based_labels();
            rec.k_estimated = c.k();
            rec.nmi = nmi.value;
            rec.nmi_flag = Some(nmi.flag);
            rec.edge_density = density;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

fn estimate_graph(data: &DataMatrix, cfg: &BngcConfig, seed: u64) -> std::result::Result<WeightedAdjacency, String> {
    let mut ss = cfg.spike_slab.clone();
    ss.seed = seed;
    neighborhood::estimate_partial_correlations_with(data, &ss, Execution::Sequential)
        .map(|e| neighborhood::adjacency_from_partial_correlations(&e))
        .map_err(|e| e.to_string())
}

fn run_method(
    method: &MethodConfig,
    data: &DataMatrix,
    truth_k: usize,
    shared: &mut Shared,
    seed: u64,
    pi: usize,
    di: usize,
) -> Result<Clustering> {
    // the graph estimated for the first graph-based method is reused by the rest
    let bngc_default = BngcConfig::default();
    let graph_cfg = match method {
        MethodConfig::Bngc { config } => config,
        _ => &bngc_default,
    };
    match method {
        MethodConfig::Bngc { config } => {
            let w = shared.graph.get_or_insert_with(|| estimate_graph(data, graph_cfg, seed)).clone().map_err(Error::Numerical)?;
            let (_, emb) = config.spectral.run(&w);
            config.clustering.run(&emb)
        }
        MethodConfig::KMeans { restarts, spectral } => {
            let w = shared.graph.get_or_insert_with(|| estimate_graph(data, graph_cfg, seed)).clone().map_err(Error::Numerical)?;
            let emb = spectral.run_fixed(&w, truth_k)?;
            let mut c = dpcluster::kmeans(&emb.y, truth_k, *restarts, seed)?;
            c.method = ClusteringMethod::KMeans { k: truth_k, restarts: *restarts, seed };
            Ok(c)
        }
        MethodConfig::External { name, dir } => {
            let path = dir.join(format!("partition{pi}_dataset{di}.csv"));
            let labels = crate::io::read_label_lines(&path)?;
            if labels.len() != data.n_vars() {
                return Err(Error::dimension(format!("{} labels in {} for {} variables", labels.len(), path.display(), data.n_vars())));
            }
            Clustering::from_one_based(&labels, ClusteringMethod::External { name: name.clone() })
        }
    }
}

/// One record per (partition, dataset, method). Datasets run as independent
/// jobs; each draws from its own RNG stream so results do not depend on
/// scheduling.
pub fn run_benchmark(design: &SimDesign, methods: &[MethodConfig], exec: Execution) -> Result<Vec<BenchmarkRecord>> {
    design.validate()?;
    if methods.is_empty() {
        return Err(Error::config("no methods to benchmark"));
    }
    let partitions: Vec<Clustering> = (0..design.n_partitions).map(|pi| design_partition(design, pi)).collect::<Result<_>>()?;
    let jobs = design.n_partitions * design.n_datasets_per_partition;
    let per_job = exec.try_map_indices(jobs, |job| -> Result<Vec<BenchmarkRecord>> {
        let pi = job / design.n_datasets_per_partition;
        let di = job % design.n_datasets_per_partition;
        let truth = &partitions[pi];
        let sim = design_dataset(design, truth, pi, di)?;
        let true_w = sim.true_adjacency();
        let seed = method_seed(design, pi, di);
        let mut shared = Shared { graph: None };
        let mut out = Vec::with_capacity(methods.len());
        for method in methods {
            let start = Instant::now();
            let outcome = run_method(method, &sim.data, design.k, &mut shared, seed, pi, di);
            let seconds = start.elapsed().as_secs_f64();
            let seeds = Seeds {
                partition: partition_seed(design, pi),
                dataset: dataset_seed(design, pi, di),
                method: seed,
            };
            out.push(score(design, truth, &true_w, pi, di, method, seeds, outcome, seconds));
        }
        log::debug!("benchmark job {job} (partition {pi}, dataset {di}) done");
        Ok(out)
    })?;
    Ok(per_job.into_iter().flatten().collect())
}

/// Mean and standard error of NMI and edge density for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub runs: usize,
    pub failures: usize,
    pub nmi_mean: f64,
    pub nmi_se: f64,
    pub density_mean: f64,
    pub density_se: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Table rows in first-appearance order of (design, method).
pub fn aggregate(records: &[BenchmarkRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(SimDesign, String)> = Vec::new();
    for r in records {
        let key = (r.design.clone(), r.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(design, method)| {
            let rs: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.design == design && r.method == method).collect();
            let ok: Vec<&&BenchmarkRecord> = rs.iter().filter(|r| !r.failed()).collect();
            let nmi: Vec<f64> = ok.iter().map(|r| r.nmi).collect();
            let dens: Vec<f64> = ok.iter().map(|r| r.edge_density).collect();
            let (nmi_mean, nmi_se) = mean_se(&nmi);
            let (density_mean, density_se) = mean_se(&dens);
            AggregateRow {
                method,
                n: design.n,
                p: design.p,
                k: design.k,
                runs: rs.len(),
                failures: rs.len() - ok.len(),
                nmi_mean,
                nmi_se,
                density_mean,
                density_se,
            }
        })
        .collect()
}

/// A benchmark run description, as read from a TOML or JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub designs: Vec<SimDesign>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodConfig>,
}

fn default_methods() -> Vec<MethodConfig> {
    vec![MethodConfig::bngc(), MethodConfig::kmeans()]
}

impl BenchSpec {
    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))
        }
    }

    pub fn run(&self, exec: Execution) -> Result<Vec<BenchmarkRecord>> {
        let mut out = Vec::new();
        for d in &self.designs {
            out.extend(run_benchmark(d, &self.methods, exec)?);
        }
        Ok(out)
    }
}

/// One JSON object per line.
pub fn write_records_jsonl(path: &Path, records: &[BenchmarkRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).map_err(|e| Error::input(e.to_string()))?);
        s.push('\n');
    }
    io::write_string(path, &s)
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<BenchmarkRecord>> {
    io::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::input(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

/// Per-record metrics as CSV rows.
pub fn write_records_csv(path: &Path, records: &[BenchmarkRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::input(e.to_string());
    w.write_record(["n", "p", "k", "partition", "dataset", "method", "k_estimated", "nmi", "edge_density", "seconds", "error"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.design.n.to_string(),
            r.design.p.to_string(),
            r.design.k.to_string(),
            r.partition_index.to_string(),
            r.dataset_index.to_string(),
            r.method.clone(),
            r.k_estimated.to_string(),
            io::format_sig10(r.nmi),
            io::format_sig10(r.edge_density),
            format!("{:.3}", r.seconds),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    io::finish_csv(path, w)
}

/// Aggregate table: one row per (design, method).
pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::input(e.to_string());
    w.write_record(["method", "n", "p", "k", "runs", "failures", "nmi_mean", "nmi_se", "density_mean", "density_se"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.n.to_string(),
            r.p.to_string(),
            r.k.to_string(),
            r.runs.to_string(),
            r.failures.to_string(),
            format!("{:.4}", r.nmi_mean),
            format!("{:.4}", r.nmi_se),
            format!("{:.4}", r.density_mean),
            format!("{:.4}", r.density_se),
        ])
        .map_err(csv_err)?;
    }
    io::finish_csv(path, w)
}
