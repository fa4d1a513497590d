use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bngc::consensus::{self, ConsensusConfig};
use bngc::dpcluster::{DPMMConfig, DPMeansConfig};
use bngc::enrich::{self, PathwayMap};
use bngc::io::{self, GraphFormat};
use bngc::neighborhood::{self, SpikeSlabConfig};
use bngc::pipeline::{self, BngcConfig, ClusterStage, PipelineConfig, StopAfter};
use bngc::simbench::{self, BenchSpec, MethodConfig, SimDesign};
use bngc::spectral::{self, Embedding, LaplacianVariant, SpectralConfig, WeightedAdjacency};
use bngc::{metrics, rng, theorycheck, Clustering, ClusteringMethod, DataMatrix, Error, Execution, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bngc", version, about = "Graph-based clustering of variables via spike-and-slab partial correlations")]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the partial-correlation matrix of a data CSV.
    EstimateGraph(EstimateArgs),
    /// Laplacian spectrum and embedding of a graph.
    Embed(EmbedArgs),
    /// Cluster the rows of an embedding.
    Cluster(ClusterArgs),
    /// Run the whole procedure from a config file, or rerun a manifest.
    Pipeline(PipelineArgs),
    /// Draw a block-structured dataset with known clusters.
    Simulate(SimulateArgs),
    /// Simulation benchmark against the true partitions.
    Bench(BenchArgs),
    /// Compare a clustering with reference labels.
    Evaluate(EvaluateArgs),
    /// Pathway enrichment probabilities per cluster.
    Enrich(EnrichArgs),
    /// Joint clustering of the same variables across several datasets.
    Consensus(ConsensusArgs),
    /// Randomized checks of the Laplacian perturbation bounds.
    Theorycheck(TheoryArgs),
}

#[derive(Args)]
struct SpikeSlabArgs {
    /// Gibbs sweeps per regression, burn-in included.
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SpikeSlabArgs {
    fn apply(&self, cfg: &mut SpikeSlabConfig) {
        if let Some(v) = self.n_iter {
            cfg.n_iter = v;
        }
        if let Some(v) = self.burnin {
            cfg.n_burnin = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Data CSV: header of variable names, one sample per row.
    #[arg(long)]
    data: PathBuf,
    /// Output partial-correlation matrix CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    spike_slab: SpikeSlabArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    /// Partial correlations; weights are their absolute values.
    PartialCorrelations,
    /// Nonnegative symmetric weights with a zero diagonal.
    Adjacency,
}

#[derive(Args)]
struct GraphInput {
    /// Square matrix CSV with variable names in the header row and first column.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "partial-correlations")]
    kind: GraphKind,
}

impl GraphInput {
    fn load(&self) -> Result<WeightedAdjacency> {
        let (names, m) = io::read_matrix_csv(&self.graph)?;
        let w = match self.kind {
            GraphKind::PartialCorrelations => {
                let mut w = m.abs();
                w.fill_diagonal(0.0);
                w
            }
            GraphKind::Adjacency => m,
        };
        WeightedAdjacency::new(w, names)
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    graph: GraphInput,
    #[arg(long, default_value = "sym")]
    variant: LaplacianVariant,
    /// Fixed embedding dimension instead of the eigen-gap choice.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    max_k: Option<usize>,
    #[arg(long)]
    no_normalize: bool,
    /// Directory for spectrum.csv and embedding.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    DpMeans,
    Dpmm,
}

#[derive(Args)]
struct ClusterMethodArgs {
    #[arg(long, value_enum, default_value = "dp-means")]
    method: Method,
    /// DP-means penalty.
    #[arg(long)]
    lambda: Option<f64>,
    /// DPMM concentration.
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Gibbs sweeps (DPMM) or maximum passes (DP-means).
    #[arg(long = "cluster-iter")]
    iterations: Option<usize>,
    #[arg(long = "cluster-burnin")]
    burnin: Option<usize>,
    #[arg(long = "cluster-seed")]
    seed: Option<u64>,
}

impl ClusterMethodArgs {
    fn stage(&self) -> ClusterStage {
        match self.method {
            Method::DpMeans => {
                let mut c = DPMeansConfig::default();
                c.lambda = self.lambda.unwrap_or(c.lambda);
                c.max_iter = self.iterations.unwrap_or(c.max_iter);
                c.seed = self.seed.unwrap_or(c.seed);
                ClusterStage::DpMeans(c)
            }
            Method::Dpmm => {
                let mut c = DPMMConfig::default();
                c.alpha0 = self.alpha0.unwrap_or(c.alpha0);
                c.sigma = self.sigma.unwrap_or(c.sigma);
                c.rho = self.rho.unwrap_or(c.rho);
                c.n_iter = self.iterations.unwrap_or(c.n_iter);
                c.n_burnin = self.burnin.unwrap_or(c.n_burnin);
                c.seed = self.seed.unwrap_or(c.seed);
                ClusterStage::Dpmm(c)
            }
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Embedding CSV as written by `embed`.
    #[arg(long)]
    embedding: PathBuf,
    #[command(flatten)]
    method: ClusterMethodArgs,
    /// Output `variable,label` CSV; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML or JSON config.
    #[arg(long, conflicts_with = "rerun")]
    config: Option<PathBuf>,
    /// Rerun the configuration recorded in a manifest.
    #[arg(long)]
    rerun: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stop_after: Option<StopAfter>,
    #[arg(long)]
    graph_format: Option<GraphFormat>,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for data.csv, truth.csv and true_partial_correlations.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Bench spec (TOML or JSON); otherwise a single design from the flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    partitions: usize,
    #[arg(long, default_value_t = 10)]
    datasets: usize,
    /// Full-size replication: 100 datasets per partition.
    #[arg(long)]
    full_scale: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label files computed elsewhere, as NAME=DIR.
    #[arg(long = "external")]
    external: Vec<String>,
    #[arg(long)]
    no_kmeans: bool,
    /// Directory for records.jsonl, records.csv and summary.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reference labels (`variable,label` CSV or one label per line).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    /// Graph for the between-cluster edge density.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "partial-correlations")]
    kind: GraphKind,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnrichArgs {
    #[arg(long)]
    clusters: PathBuf,
    /// `pathway,variable` CSV.
    #[arg(long)]
    pathways: PathBuf,
    #[arg(long, default_value_t = enrich::DEFAULT_MIN_CLUSTER_SIZE)]
    min_cluster_size: usize,
    /// Directory for enrichment_heatmap.csv and enriched_pairs.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ConsensusArgs {
    /// Data CSVs over the same variables; give at least two.
    #[arg(long = "data", required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Shared cluster count; by default the largest number of clusters with
    /// at least 4 members found in the single-source runs.
    #[arg(long)]
    k: Option<usize>,
    /// Consensus Gibbs sweeps, burn-in included.
    #[arg(long, default_value_t = 1000)]
    gibbs_iter: usize,
    #[arg(long, default_value_t = 200)]
    gibbs_burnin: usize,
    #[arg(long = "consensus-seed", default_value_t = 0)]
    consensus_seed: u64,
    #[command(flatten)]
    spike_slab: SpikeSlabArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 200)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the summaries as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exec(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn estimate_graph(a: &EstimateArgs, exec: Execution) -> Result<()> {
    let data = io::load_data(&a.data)?;
    let mut cfg = SpikeSlabConfig::default();
    a.spike_slab.apply(&mut cfg);
    let est = neighborhood::estimate_partial_correlations_with(&data, &cfg, exec)?;
    io::write_matrix_csv(&a.out, &est.names, &est.r)
}

fn embed(a: &EmbedArgs) -> Result<()> {
    let w = a.graph.load()?;
    let cfg = SpectralConfig {
        variant: a.variant,
        max_k: a.max_k,
        normalize_rows: !a.no_normalize,
        ..Default::default()
    };
    cfg.validate()?;
    let (decomp, emb) = match a.dim {
        Some(k) => (spectral::build_laplacian(&w, a.variant), cfg.run_fixed(&w, k)?),
        None => cfg.run(&w),
    };
    io::write_spectrum_csv(&a.out_dir.join("spectrum.csv"), &decomp.eigenvalues)?;
    io::write_embedding_csv(&a.out_dir.join("embedding.csv"), &emb.names, &emb.y)?;
    println!("embedding dimension {}", emb.dim());
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn cluster(a: &ClusterArgs) -> Result<()> {
    let (names, y) = io::read_embedding_csv(&a.embedding)?;
    let emb = Embedding::from_points(y, names)?;
    let stage = a.method.stage();
    stage.validate()?;
    let c = stage.run(&emb)?;
    io::write_clusters_csv(&a.out, &emb.names, &c)?;
    io::write_json(&sidecar_path(&a.out), &io::ClusterSidecar::new(&c))?;
    println!("{} clusters", c.k());
    Ok(())
}

fn run_pipeline(a: &PipelineArgs, cli_exec: Execution) -> Result<()> {
    if let Some(manifest) = &a.rerun {
        let m = pipeline::rerun(manifest, a.out_dir.as_deref())?;
        println!("rerun wrote {} outputs to {}", m.outputs.len(), m.config.output.dir.display());
        return Ok(());
    }
    let mut cfg = match &a.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &a.input {
        cfg.input = v.clone();
    }
    if let Some(v) = &a.truth {
        cfg.truth = Some(v.clone());
    }
    if let Some(v) = &a.out_dir {
        cfg.output.dir = v.clone();
    }
    if let Some(v) = a.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = a.stop_after {
        cfg.stop_after = v;
    }
    if let Some(v) = a.graph_format {
        cfg.output.graph_format = Some(v);
    }
    if cli_exec == Execution::Sequential {
        cfg.execution = Execution::Sequential;
    }
    if a.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let m = pipeline::run_pipeline(&cfg)?;
    for t in &m.stage_times {
        log::info!("{}: {:.2}s", t.stage, t.seconds);
    }
    println!("wrote {} outputs to {}", m.outputs.len(), m.config.output.dir.display());
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let design = SimDesign {
        n_partitions: 1,
        n_datasets_per_partition: 1,
        seed: a.seed,
        ..SimDesign::new(a.n, a.p, a.k)
    };
    design.validate()?;
    let part = simbench::design_partition(&design, 0)?;
    let sim = simbench::design_dataset(&design, &part, 0, 0)?;
    io::write_data_csv(&a.out_dir.join("data.csv"), &sim.data)?;
    io::write_clusters_csv(&a.out_dir.join("truth.csv"), sim.data.names(), &part)?;
    io::write_matrix_csv(&a.out_dir.join("true_partial_correlations.csv"), sim.data.names(), &sim.true_partial_correlations)
}

fn bench(a: &BenchArgs, exec: Execution) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
            BenchSpec::parse(&text)?
        }
        None => {
            let mut methods = vec![MethodConfig::bngc()];
            if !a.no_kmeans {
                methods.push(MethodConfig::kmeans());
            }
            BenchSpec {
                designs: vec![SimDesign {
                    n_partitions: a.partitions,
                    n_datasets_per_partition: a.datasets,
                    seed: a.seed,
                    ..SimDesign::new(a.n, a.p, a.k)
                }],
                methods,
            }
        }
    };
    if a.full_scale {
        spec.designs.iter_mut().for_each(|d| d.n_datasets_per_partition = 100);
    }
    for e in &a.external {
        let (name, dir) = e
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--external expects NAME=DIR, got `{e}`")))?;
        spec.methods.push(MethodConfig::External {
            name: name.into(),
            dir: dir.into(),
        });
    }
    let records = spec.run(exec)?;
    simbench::write_records_jsonl(&a.out_dir.join("records.jsonl"), &records)?;
    simbench::write_records_csv(&a.out_dir.join("records.csv"), &records)?;
    let rows = simbench::aggregate(&records);
    simbench::write_aggregate_csv(&a.out_dir.join("summary.csv"), &rows)?;
    println!("method,n,p,k,nmi_mean,nmi_se,density_mean,density_se,failures");
    for r in rows {
        println!(
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{}",
            r.method, r.n, r.p, r.k, r.nmi_mean, r.nmi_se, r.density_mean, r.density_se, r.failures
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluateReport {
    nmi: f64,
    nmi_flag: metrics::NmiFlag,
    k_truth: usize,
    k_estimated: usize,
    edge_density: Option<f64>,
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let truth = Clustering::from_one_based(&io::read_label_lines(&a.truth)?, ClusteringMethod::Truth)?;
    let est = Clustering::from_one_based(&io::read_label_lines(&a.clusters)?, ClusteringMethod::External { name: "input".into() })?;
    let n = metrics::nmi(&truth, &est)?;
    let edge_density = match &a.graph {
        Some(g) => {
            let w = GraphInput { graph: g.clone(), kind: a.kind }.load()?;
            Some(metrics::between_cluster_edge_density(&w, &est)?)
        }
        None => None,
    };
    let report = EvaluateReport {
        nmi: n.value,
        nmi_flag: n.flag,
        k_truth: truth.k(),
        k_estimated: est.k(),
        edge_density,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(out) = &a.out {
        io::write_json(out, &report)?;
    }
    Ok(())
}

fn run_enrich(a: &EnrichArgs) -> Result<()> {
    let (names, labels) = io::read_clusters_csv(&a.clusters)?;
    let c = Clustering::from_one_based(&labels, ClusteringMethod::External { name: "input".into() })?;
    let map = PathwayMap::load(&a.pathways)?;
    let m = enrich::enrichment_matrix(&c, &names, &map, a.min_cluster_size)?;
    for w in &m.warnings {
        log::warn!("{w}");
    }
    m.write_heatmap_csv(&a.out_dir.join("enrichment_heatmap.csv"))?;
    m.write_enriched_json(&a.out_dir.join("enriched_pairs.json"))?;
    println!("{} clusters x {} pathways, {} enriched pairs", m.clusters.len(), m.pathways.len(), m.enriched_pairs().len());
    Ok(())
}

#[derive(Serialize)]
struct AlphaSummary {
    k: usize,
    sources: Vec<String>,
    alpha_mean: Vec<f64>,
    alpha_min: Vec<f64>,
    alpha_max: Vec<f64>,
    pi_mean: Vec<f64>,
    map_log_density: f64,
}

fn run_consensus(a: &ConsensusArgs, exec: Execution) -> Result<()> {
    if a.data.len() < 2 {
        return Err(Error::Input("consensus needs at least two datasets".into()));
    }
    let mut bngc_cfg = BngcConfig::default();
    a.spike_slab.apply(&mut bngc_cfg.spike_slab);
    let mut embeddings = Vec::new();
    let mut singles = Vec::new();
    for (j, path) in a.data.iter().enumerate() {
        let data: DataMatrix = io::load_data(path)?;
        let mut cfg = bngc_cfg.clone();
        cfg.spike_slab.seed = rng::derive_seed(a.spike_slab.seed.unwrap_or(a.consensus_seed), "consensus-source", &[j as u64]);
        let res = pipeline::cluster_variables(&data, &cfg, exec)?;
        log::info!("{}: {} clusters", path.display(), res.clustering.k());
        embeddings.push(res.embedding);
        singles.push(res.clustering);
    }
    let k = a.k.unwrap_or_else(|| consensus::choose_k(&singles, consensus::DEFAULT_MIN_MAJOR_SIZE));
    let cfg = ConsensusConfig {
        k,
        n_iter: a.gibbs_iter,
        n_burnin: a.gibbs_burnin,
        seed: a.consensus_seed,
        ..Default::default()
    };
    let res = consensus::consensus_gibbs(&embeddings, &cfg)?;
    io::write_clusters_csv(&a.out_dir.join("global.csv"), &res.names, &res.global)?;
    for (j, c) in res.local.iter().enumerate() {
        io::write_clusters_csv(&a.out_dir.join(format!("source_{}.csv", j + 1)), &res.names, c)?;
    }
    let summary = AlphaSummary {
        k,
        sources: a.data.iter().map(|p| p.display().to_string()).collect(),
        alpha_mean: res.alpha_mean.clone(),
        alpha_min: res.alpha_min.clone(),
        alpha_max: res.alpha_max.clone(),
        pi_mean: res.pi_mean.clone(),
        map_log_density: res.map_log_density,
    };
    io::write_json(&a.out_dir.join("alpha.json"), &summary)?;
    println!("K = {k}, {} global clusters, adherence {:?}", res.global.k(), res.alpha_mean);
    Ok(())
}

fn run_theorycheck(a: &TheoryArgs) -> Result<bool> {
    let suites = [theorycheck::laplacian_bound_suite(a.cases, a.seed)?, theorycheck::davis_kahan_suite(a.cases, a.seed)?];
    for s in &suites {
        println!(
            "{}: {} checked, {} passed, {} violations ({} discarded), max ratio {:.3e} -> {}",
            s.name,
            s.checked,
            s.checked - s.violations,
            s.violations,
            s.discarded,
            s.max_ratio,
            if s.passed() { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &a.out {
        io::write_json(out, &suites)?;
    }
    Ok(suites.iter().all(|s| s.passed()))
}

fn run(cli: &Cli) -> Result<()> {
    let ex = exec(cli);
    match &cli.command {
        Command::EstimateGraph(a) => estimate_graph(a, ex),
        Command::Embed(a) => embed(a),
        Command::Cluster(a) => cluster(a),
        Command::Pipeline(a) => run_pipeline(a, ex),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a, ex),
        Command::Evaluate(a) => evaluate(a),
        Command::Enrich(a) => run_enrich(a),
        Command::Consensus(a) => run_consensus(a, ex),
        Command::Theorycheck(a) => {
            if run_theorycheck(a)? {
                Ok(())
            } else {
                Err(Error::Numerical("bound violated".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
