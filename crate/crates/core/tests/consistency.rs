mod common;

use bngc::neighborhood::{self, SpikeSlabConfig};
use bngc::pipeline::{self, BngcConfig};
use bngc::{metrics, simbench, Clustering, Execution};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two 10-node chains with alternating-sign partial correlations of 0.4.
fn chain_precision() -> DMatrix<f64> {
    let p = 20;
    let mut omega = DMatrix::identity(p, p);
    for i in 0..p - 1 {
        if i == 9 {
            continue;
        }
        let v = if i % 2 == 0 { -0.4 } else { 0.4 };
        omega[(i, i + 1)] = v;
        omega[(i + 1, i)] = v;
    }
    omega
}

#[test]
fn signed_support_recovered_at_large_n() {
    let omega = chain_precision();
    let truth = neighborhood::partial_correlations_from_precision(&omega);
    let min_edge = truth.iter().filter(|v| v.abs() > 0.0 && v.abs() < 1.0).map(|v| v.abs()).fold(1.0, f64::min);
    assert!(min_edge >= 0.3);
    let f1s: Vec<f64> = (0..5)
        .map(|seed| {
            let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
            let data = common::sample_from_precision(&omega, 1000, &mut r);
            let cfg = SpikeSlabConfig { seed, ..Default::default() };
            let est = neighborhood::estimate_partial_correlations(&data, &cfg).unwrap();
            common::signed_support_f1(&est.r, &truth, 0.1)
        })
        .collect();
    let med = common::median(f1s.clone());
    assert!(med >= 0.9, "F1 per seed {f1s:?}");
}

#[test]
fn adjacency_error_bounded_by_partial_correlation_error() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..5u64 {
        let part = simbench::random_partition(15, 3, &mut r).unwrap();
        let sim = simbench::simulate_dataset(100, &part, &mut r).unwrap();
        let cfg = SpikeSlabConfig { seed, n_iter: 300, n_burnin: 100, ..Default::default() };
        let est = neighborhood::estimate_partial_correlations(&sim.data, &cfg).unwrap();
        let w = neighborhood::adjacency_from_partial_correlations(&est);
        let w_true = sim.true_adjacency();
        let dw = (w.matrix() - w_true.matrix()).norm();
        let dr = (&est.r - &sim.true_partial_correlations).norm();
        assert!(dw <= dr + 1e-12, "{dw} > {dr}");
    }
}

#[test]
fn block_dataset_end_to_end() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let part = simbench::random_partition(50, 5, &mut r).unwrap();
    let sim = simbench::simulate_dataset(200, &part, &mut r).unwrap();
    let res = pipeline::cluster_variables(&sim.data, &BngcConfig::default(), Execution::Parallel).unwrap();
    let nmi = metrics::nmi(&part, &res.clustering).unwrap().value;
    assert!(nmi >= 0.9, "NMI {nmi}");
    let seq = pipeline::cluster_variables(&sim.data, &BngcConfig::default(), Execution::Sequential).unwrap();
    assert_eq!(seq.clustering, res.clustering);
    assert_eq!(seq.estimate.r, res.estimate.r);
}

#[test]
fn dpmm_chain_cluster_count_in_range() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let part = simbench::random_partition(20, 3, &mut r).unwrap();
    let sim = simbench::simulate_dataset(150, &part, &mut r).unwrap();
    let est = neighborhood::estimate_partial_correlations(&sim.data, &SpikeSlabConfig { n_iter: 300, n_burnin: 100, ..Default::default() }).unwrap();
    let w = neighborhood::adjacency_from_partial_correlations(&est);
    let (_, emb) = bngc::spectral::SpectralConfig::default().run(&w);
    let cfg = bngc::dpcluster::DPMMConfig { n_iter: 300, n_burnin: 50, ..Default::default() };
    let fit = bngc::dpcluster::dpmm_fit(&emb.y, &cfg).unwrap();
    assert!(fit.k_trace.iter().all(|&k| (1..=20).contains(&k)));
    let c: &Clustering = &fit.clustering;
    assert_eq!(c.sizes().iter().sum::<usize>(), 20);
}
