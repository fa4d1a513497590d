//! The end-to-end clustering procedure: partial-correlation graph, Laplacian
//! embedding, DP clustering.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::dpcluster::{self, DPMMConfig, DPMeansConfig};
use crate::error::{Error, Result};
use crate::io::{self, GraphExportOptions, GraphFormat};
use crate::metrics;
use crate::neighborhood::{self, PartialCorrelationEstimate, SpikeSlabConfig};
use crate::par::Execution;
use crate::partition::{Clustering, ClusteringMethod};
use crate::rng;
use crate::spectral::{Embedding, SpectralConfig, SpectralDecomposition, WeightedAdjacency};

/// Which clustering runs on the embedded points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ClusterStage {
    DpMeans(DPMeansConfig),
    Dpmm(DPMMConfig),
}

impl Default for ClusterStage {
    fn default() -> Self {
        ClusterStage::DpMeans(DPMeansConfig::default())
    }
}

impl ClusterStage {
    pub fn validate(&self) -> Result<()> {
        match self {
            ClusterStage::DpMeans(c) => c.validate(),
            ClusterStage::Dpmm(c) => c.validate(),
        }
    }

    pub fn run(&self, emb: &Embedding) -> Result<Clustering> {
        match self {
            ClusterStage::DpMeans(c) => dpcluster::dp_means(emb, c),
            ClusterStage::Dpmm(c) => dpcluster::dpmm_gibbs(emb, c),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ClusterStage::DpMeans(c) => c.seed,
            ClusterStage::Dpmm(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BngcConfig {
    pub spike_slab: SpikeSlabConfig,
    pub spectral: SpectralConfig,
    pub clustering: ClusterStage,
}

impl BngcConfig {
    pub fn validate(&self) -> Result<()> {
        self.spike_slab.validate()?;
        self.spectral.validate()?;
        self.clustering.validate()
    }
}

/// Every intermediate product of one clustering run.
#[derive(Debug, Clone)]
pub struct BngcResult {
    pub estimate: PartialCorrelationEstimate,
    pub adjacency: WeightedAdjacency,
    pub decomposition: SpectralDecomposition,
    pub embedding: Embedding,
    pub clustering: Clustering,
}

pub(crate) fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
}

/// Cluster the variables of `data`.
pub fn cluster_variables(data: &DataMatrix, cfg: &BngcConfig, exec: Execution) -> Result<BngcResult> {
    cfg.validate()?;
    let estimate = stage("estimate-graph", neighborhood::estimate_partial_correlations_with(data, &cfg.spike_slab, exec))?;
    let adjacency = neighborhood::adjacency_from_partial_correlations(&estimate);
    let (decomposition, embedding) = cfg.spectral.run(&adjacency);
    let clustering = stage("cluster", cfg.clustering.run(&embedding))?;
    Ok(BngcResult {
        estimate,
        adjacency,
        decomposition,
        embedding,
        clustering,
    })
}

/// Which stages `run_pipeline` executes; later stages include earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopAfter {
    EstimateGraph,
    Embed,
    #[default]
    Cluster,
}

impl std::str::FromStr for StopAfter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimate-graph" => Ok(StopAfter::EstimateGraph),
            "embed" => Ok(StopAfter::Embed),
            "cluster" => Ok(StopAfter::Cluster),
            other => Err(Error::config(format!("unknown stage `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Graph export format; `None` skips the export.
    pub graph_format: Option<GraphFormat>,
    pub graph: GraphExportOptions,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("bngc-out"),
            graph_format: Some(GraphFormat::Graphml),
            graph: GraphExportOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    /// Optional reference labels (`variable,label` CSV) for evaluation.
    pub truth: Option<PathBuf>,
    /// Top-level seed; when set, every stage seed is derived from it.
    pub seed: Option<u64>,
    pub stop_after: StopAfter,
    pub execution: Execution,
    pub spike_slab: SpikeSlabConfig,
    pub spectral: SpectralConfig,
    pub clustering: ClusterStage,
    pub output: OutputConfig,
}

impl PipelineConfig {
    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::config("input path is empty"));
        }
        self.spike_slab.validate()?;
        self.spectral.validate()?;
        self.clustering.validate()?;
        if !(self.output.graph.edge_threshold >= 0.0) {
            return Err(Error::config("graph edge threshold must be nonnegative"));
        }
        Ok(())
    }

    /// Copy with stage seeds derived from the top-level seed, if any.
    pub fn resolved(&self) -> PipelineConfig {
        let mut cfg = self.clone();
        if let Some(seed) = self.seed {
            cfg.spike_slab.seed = rng::derive_seed(seed, "spike-slab", &[]);
            let s = rng::derive_seed(seed, "cluster", &[]);
            match &mut cfg.clustering {
                ClusterStage::DpMeans(c) => c.seed = s,
                ClusterStage::Dpmm(c) => c.seed = s,
            }
        }
        cfg
    }

    pub fn bngc(&self) -> BngcConfig {
        BngcConfig {
            spike_slab: self.spike_slab.clone(),
            spectral: self.spectral.clone(),
            clustering: self.clustering.clone(),
        }
    }
}

/// A named random stream consumed by the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub label: String,
    pub seed: u64,
    /// Index range the stream is keyed by, empty for a single stream.
    pub indices: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub streams: Vec<StreamRecord>,
    pub input_sha256: String,
    pub truth_sha256: Option<String>,
    pub stage_times: Vec<StageTime>,
    pub outputs: Vec<OutputFile>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARTIAL_MARKER: &str = ".partial";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub nmi: f64,
    pub nmi_flag: crate::metrics::NmiFlag,
    /// Between-cluster weight of the estimated graph.
    pub edge_density: f64,
    pub k_estimated: usize,
    pub k_truth: usize,
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

fn timed<T>(times: &mut Vec<StageTime>, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = stage(name, f());
    times.push(StageTime {
        stage: name.into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    out
}

fn streams_for(cfg: &PipelineConfig, p: usize) -> Vec<StreamRecord> {
    let mut out = vec![StreamRecord {
        label: "spike-slab".into(),
        seed: cfg.spike_slab.seed,
        indices: format!("0..{p}"),
    }];
    if cfg.stop_after >= StopAfter::Cluster {
        if let ClusterStage::Dpmm(c) = &cfg.clustering {
            out.push(StreamRecord {
                label: "dpmm".into(),
                seed: c.seed,
                indices: String::new(),
            });
        }
    }
    out
}

/// Run every configured stage, writing outputs and `manifest.json` into the
/// output directory. While running, the directory holds a `.partial` marker
/// that names the failing stage if the run aborts.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let mut times = Vec::new();
    let data = timed(&mut times, "load", || io::load_data(&cfg.input))?;
    let truth = match &cfg.truth {
        Some(path) => Some(stage("load", io::read_label_lines(path))?),
        None => None,
    };
    if let Some(t) = &truth {
        if t.len() != data.n_vars() {
            return Err(Error::dimension(format!("{} truth labels for {} variables", t.len(), data.n_vars())));
        }
    }
    let input_sha256 = io::sha256_file(&cfg.input)?;
    let truth_sha256 = cfg.truth.as_deref().map(io::sha256_file).transpose()?;

    let dir_buf = cfg.output.dir.clone();
    let dir = dir_buf.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let marker = dir.join(PARTIAL_MARKER);
    io::write_string(&marker, "running\n")?;
    let mut out = Outputs { dir, files: Vec::new() };
    let result = run_stages(&cfg, &data, truth.as_deref(), &mut out, &mut times);
    if let Err(e) = &result {
        let name = match e {
            Error::Stage { stage, .. } => *stage,
            _ => "unknown",
        };
        io::write_string(&marker, &format!("failed at stage {name}: {e}\n"))?;
        return Err(result.unwrap_err());
    }
    let mut outputs = Vec::new();
    for f in &out.files {
        outputs.push(OutputFile {
            path: f.clone(),
            sha256: io::sha256_file(&dir.join(f))?,
        });
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        streams: streams_for(&cfg, data.n_vars()),
        config: cfg,
        input_sha256,
        truth_sha256,
        stage_times: times,
        outputs,
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(manifest)
}

fn run_stages(cfg: &PipelineConfig, data: &DataMatrix, truth: Option<&[usize]>, out: &mut Outputs, times: &mut Vec<StageTime>) -> Result<()> {
    let estimate = timed(times, "estimate-graph", || {
        let est = neighborhood::estimate_partial_correlations_with(data, &cfg.spike_slab, cfg.execution)?;
        io::write_matrix_csv(&out.path("partial_correlations.csv"), &est.names, &est.r)?;
        Ok(est)
    })?;
    let adjacency = neighborhood::adjacency_from_partial_correlations(&estimate);
    if cfg.stop_after == StopAfter::EstimateGraph {
        return Ok(());
    }
    let embedding = timed(times, "embed", || {
        let (decomp, emb) = cfg.spectral.run(&adjacency);
        io::write_spectrum_csv(&out.path("spectrum.csv"), &decomp.eigenvalues)?;
        io::write_embedding_csv(&out.path("embedding.csv"), &emb.names, &emb.y)?;
        Ok(emb)
    })?;
    if cfg.stop_after == StopAfter::Embed {
        return Ok(());
    }
    let clustering = timed(times, "cluster", || {
        let c = cfg.clustering.run(&embedding)?;
        io::write_clusters_csv(&out.path("clusters.csv"), data.names(), &c)?;
        io::write_json(&out.path("clusters.json"), &io::ClusterSidecar::new(&c))?;
        Ok(c)
    })?;
    timed(times, "export", || {
        if let Some(fmt) = cfg.output.graph_format {
            let name = match fmt {
                GraphFormat::Dot => "graph.dot",
                GraphFormat::Graphml => "graph.graphml",
            };
            io::export_graph(&adjacency, &clustering, &out.path(name), fmt, &cfg.output.graph)?;
        }
        if let Some(t) = truth {
            let truth = Clustering::from_one_based(t, ClusteringMethod::Truth)?;
            let n = metrics::nmi(&truth, &clustering)?;
            let m = RunMetrics {
                nmi: n.value,
                nmi_flag: n.flag,
                edge_density: metrics::between_cluster_edge_density(&adjacency, &clustering)?,
                k_estimated: clustering.k(),
                k_truth: truth.k(),
            };
            io::write_json(&out.path("metrics.json"), &m)?;
        }
        Ok(())
    })
}

/// Re-run the configuration recorded in a manifest, checking that the input
/// is unchanged. `output_dir` overrides the recorded directory.
pub fn rerun(manifest_path: &Path, output_dir: Option<&Path>) -> Result<RunManifest> {
    let manifest: RunManifest = io::read_json(manifest_path)?;
    let mut cfg = manifest.config.clone();
    let actual = io::sha256_file(&cfg.input)?;
    if actual != manifest.input_sha256 {
        return Err(Error::input(format!("input {} changed since the recorded run", cfg.input.display())));
    }
    if let Some(dir) = output_dir {
        cfg.output.dir = dir.to_path_buf();
    }
    run_pipeline(&cfg)
}
