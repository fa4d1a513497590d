//! Clustering of embedded points: DP-means, a DPMM Gibbs sampler and a
//! k-means++ baseline.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partition::{compact_labels, Clustering, ClusteringMethod};
use crate::rng;
use crate::spectral::Embedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DPMeansConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Stop early once a sweep lowers the objective by no more than this.
    pub tol: f64,
}

impl Default for DPMeansConfig {
    fn default() -> Self {
        DPMeansConfig {
            lambda: 0.5,
            max_iter: 100,
            seed: 0,
            tol: 0.0,
        }
    }
}

impl DPMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!("lambda must be positive and finite, got {}", self.lambda)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::config(format!("tol must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DPMMConfig {
    pub alpha0: f64,
    /// Component variance (per coordinate).
    pub sigma: f64,
    /// Prior variance of component means.
    pub rho: f64,
    pub n_iter: usize,
    pub n_burnin: usize,
    pub seed: u64,
}

impl Default for DPMMConfig {
    fn default() -> Self {
        DPMMConfig {
            alpha0: 1.0,
            sigma: 0.05,
            rho: 1.0,
            n_iter: 1000,
            n_burnin: 200,
            seed: 0,
        }
    }
}

impl DPMMConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha0", self.alpha0), ("sigma", self.sigma), ("rho", self.rho)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.n_iter <= self.n_burnin {
            return Err(Error::config(format!(
                "n_iter ({}) must exceed n_burnin ({})",
                self.n_iter, self.n_burnin
            )));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows(y: &DMatrix<f64>) -> Vec<Vec<f64>> {
    y.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (pt, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(pt) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

fn centers_matrix(centers: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(centers.len(), dim, |i, j| centers[i][j])
}

/// `sum_c sum_{y in c} |y - theta_c|^2 + lambda * k`, with `k` the number of
/// center rows.
pub fn objective(y: &DMatrix<f64>, labels: &[usize], centers: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if labels.len() != y.nrows() {
        return Err(Error::dimension(format!("{} labels for {} points", labels.len(), y.nrows())));
    }
    if centers.ncols() != y.ncols() {
        return Err(Error::dimension(format!(
            "centers have dimension {}, points {}",
            centers.ncols(),
            y.ncols()
        )));
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l >= centers.nrows() {
            return Err(Error::dimension(format!("label {l} has no center")));
        }
        total += (y.row(i) - centers.row(l)).norm_squared();
    }
    Ok(total + lambda * centers.nrows() as f64)
}

/// Result of a DP-means run with its per-sweep objective trace.
#[derive(Debug, Clone)]
pub struct DPMeansFit {
    pub clustering: Clustering,
    /// Objective after each sweep (centers recomputed).
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// DP-means starting from one cluster at the global mean.
pub fn dp_means(emb: &Embedding, cfg: &DPMeansConfig) -> Result<Clustering> {
    Ok(dp_means_fit(&emb.y, cfg)?.clustering)
}

pub fn dp_means_fit(y: &DMatrix<f64>, cfg: &DPMeansConfig) -> Result<DPMeansFit> {
    cfg.validate()?;
    let p = y.nrows();
    if p == 0 {
        return Err(Error::input("no points to cluster"));
    }
    let dim = y.ncols();
    let pts = rows(y);
    let init = means(&pts, &vec![0; p], 1, dim);
    dp_means_from(&pts, init, dim, cfg)
}

/// DP-means from the given initial centers (rows of `centers`).
pub fn dp_means_with_centers(y: &DMatrix<f64>, centers: &DMatrix<f64>, cfg: &DPMeansConfig) -> Result<DPMeansFit> {
    cfg.validate()?;
    if centers.ncols() != y.ncols() || centers.nrows() == 0 {
        return Err(Error::dimension("initial centers do not match the points"));
    }
    dp_means_from(&rows(y), rows(centers), y.ncols(), cfg)
}

fn dp_means_from(pts: &[Vec<f64>], mut centers: Vec<Vec<f64>>, dim: usize, cfg: &DPMeansConfig) -> Result<DPMeansFit> {
    let p = pts.len();
    if pts.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::input("embedding has non-finite entries"));
    }
    let mut labels: Vec<usize> = vec![usize::MAX; p];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut changed = false;
        for (i, pt) in pts.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(pt, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if best_d > cfg.lambda {
                centers.push(pt.clone());
                best = centers.len() - 1;
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // drop empty clusters, then recompute centers
        let mut counts = vec![0usize; centers.len()];
        labels.iter().for_each(|&l| counts[l] += 1);
        let mut relabel = vec![usize::MAX; centers.len()];
        let mut k = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > 0 {
                relabel[c] = k;
                k += 1;
            }
        }
        if k != centers.len() {
            changed = true;
            for l in labels.iter_mut() {
                *l = relabel[*l];
            }
        }
        centers = means(pts, &labels, k, dim);
        let obj = objective_rows(pts, &labels, &centers, cfg.lambda);
        let improvement = trace.last().map(|&prev: &f64| prev - obj);
        trace.push(obj);
        if !changed {
            converged = true;
            break;
        }
        if let Some(delta) = improvement {
            if cfg.tol > 0.0 && delta <= cfg.tol {
                converged = true;
                break;
            }
        }
    }
    let objective = *trace.last().expect("at least one sweep");
    let mut clustering = Clustering::from_labels(&labels, ClusteringMethod::DpMeans(cfg.clone()));
    // `from_labels` renumbers by first appearance; permute centers to match
    let (_, k) = compact_labels(&labels);
    let mut perm = vec![0usize; k];
    for (&old, &new) in labels.iter().zip(clustering.labels()) {
        perm[new] = old;
    }
    let ordered: Vec<Vec<f64>> = perm.iter().map(|&old| centers[old].clone()).collect();
    clustering.centers = Some(centers_matrix(&ordered, dim));
    clustering.objective = Some(objective);
    Ok(DPMeansFit {
        clustering,
        trace,
        iterations,
        converged,
    })
}

fn objective_rows(pts: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>], lambda: f64) -> f64 {
    pts.iter().zip(labels).map(|(pt, &l)| sq_dist(pt, &centers[l])).sum::<f64>() + lambda * centers.len() as f64
}

/// DPMM posterior summary: the MAP labeling plus co-clustering frequencies.
#[derive(Debug, Clone)]
pub struct DPMMFit {
    pub clustering: Clustering,
    pub map_log_density: f64,
    /// Fraction of post-burn-in sweeps in which points `i` and `j` share a cluster.
    pub co_clustering: DMatrix<f64>,
    /// Cluster count after each sweep.
    pub k_trace: Vec<usize>,
}

pub fn dpmm_gibbs(emb: &Embedding, cfg: &DPMMConfig) -> Result<Clustering> {
    Ok(dpmm_fit(&emb.y, cfg)?.clustering)
}

/// Collapsed log joint density of a labeling: CRP partition probability times
/// the marginal likelihood of each cluster with its mean integrated out.
pub fn dpmm_log_joint(y: &DMatrix<f64>, labels: &[usize], cfg: &DPMMConfig) -> f64 {
    let p = labels.len();
    let (labels, k) = compact_labels(labels);
    let dim = y.ncols();
    let mut n = vec![0usize; k];
    let mut sum = vec![vec![0.0; dim]; k];
    let mut sumsq = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        n[l] += 1;
        for d in 0..dim {
            let v = y[(i, d)];
            sum[l][d] += v;
            sumsq[l] += v * v;
        }
    }
    let (a, s, r) = (cfg.alpha0, cfg.sigma, cfg.rho);
    let mut total = k as f64 * a.ln() + ln_gamma(a) - ln_gamma(a + p as f64);
    for c in 0..k {
        let nc = n[c] as f64;
        total += ln_gamma(nc);
        // per coordinate: y ~ N(0, s I + r 11^T)
        let log_det = (nc - 1.0) * s.ln() + (s + nc * r).ln();
        let s2: f64 = sum[c].iter().map(|v| v * v).sum();
        let quad = (sumsq[c] - r * s2 / (s + nc * r)) / s;
        total += -0.5 * (dim as f64 * (nc * (2.0 * std::f64::consts::PI).ln() + log_det) + quad);
    }
    total
}

pub fn dpmm_fit(y: &DMatrix<f64>, cfg: &DPMMConfig) -> Result<DPMMFit> {
    cfg.validate()?;
    let p = y.nrows();
    if p == 0 {
        return Err(Error::input("no points to cluster"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("embedding has non-finite entries"));
    }
    let dim = y.ncols();
    let pts = rows(y);
    let mut rng = rng::stream(cfg.seed, "dpmm", &[]);
    let (s, r, a) = (cfg.sigma, cfg.rho, cfg.alpha0);
    let draw_mean = |rng: &mut rng::StreamRng, sum: &[f64], n: usize| -> Vec<f64> {
        let v = 1.0 / (1.0 / r + n as f64 / s);
        let sd = v.sqrt();
        sum.iter()
            .map(|&t| {
                let z: f64 = StandardNormal.sample(rng);
                v * t / s + sd * z
            })
            .collect()
    };
    let log_norm = |x: &[f64], mu: Option<&[f64]>, var: f64| -> f64 {
        let d2: f64 = match mu {
            Some(m) => sq_dist(x, m),
            None => x.iter().map(|v| v * v).sum(),
        };
        -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI * var).ln() + d2 / var)
    };

    let mut labels = vec![0usize; p];
    let mut counts = vec![p];
    let total: Vec<f64> = (0..dim).map(|d| pts.iter().map(|x| x[d]).sum()).collect();
    let mut mus = vec![draw_mean(&mut rng, &total, p)];

    let mut co = DMatrix::zeros(p, p);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut k_trace = Vec::with_capacity(cfg.n_iter);
    let mut logw = Vec::new();
    for sweep in 0..cfg.n_iter {
        for i in 0..p {
            let old = labels[i];
            counts[old] -= 1;
            if counts[old] == 0 {
                counts.swap_remove(old);
                mus.swap_remove(old);
                let moved = counts.len();
                if old < moved {
                    for l in labels.iter_mut() {
                        if *l == moved {
                            *l = old;
                        }
                    }
                }
            }
            logw.clear();
            for (c, mu) in mus.iter().enumerate() {
                logw.push((counts[c] as f64).ln() + log_norm(&pts[i], Some(mu), s));
            }
            logw.push(a.ln() + log_norm(&pts[i], None, s + r));
            let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logw.iter().map(|w| (w - m).exp()).collect();
            let tot: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * tot;
            let mut pick = weights.len() - 1;
            for (c, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = c;
                    break;
                }
                u -= w;
            }
            if pick == mus.len() {
                mus.push(draw_mean(&mut rng, &pts[i], 1));
                counts.push(0);
            }
            counts[pick] += 1;
            labels[i] = pick;
        }
        let k = mus.len();
        let mut sums = vec![vec![0.0; dim]; k];
        for (x, &l) in pts.iter().zip(&labels) {
            for (t, v) in sums[l].iter_mut().zip(x) {
                *t += v;
            }
        }
        for c in 0..k {
            mus[c] = draw_mean(&mut rng, &sums[c], counts[c]);
        }
        k_trace.push(k);
        if sweep >= cfg.n_burnin {
            for i in 0..p {
                for j in 0..p {
                    if labels[i] == labels[j] {
                        co[(i, j)] += 1.0;
                    }
                }
            }
            let lj = dpmm_log_joint(y, &labels, cfg);
            if best.as_ref().is_none_or(|(b, _)| lj > *b) {
                best = Some((lj, labels.clone()));
            }
        }
    }
    co /= (cfg.n_iter - cfg.n_burnin) as f64;
    let (map_log_density, map_labels) = best.expect("at least one post-burn-in sweep");
    let mut clustering = Clustering::from_labels(&map_labels, ClusteringMethod::Dpmm(cfg.clone()));
    let k = clustering.k();
    let mut sums = vec![vec![0.0; dim]; k];
    let sizes = clustering.sizes();
    for (x, &l) in pts.iter().zip(clustering.labels()) {
        for (t, v) in sums[l].iter_mut().zip(x) {
            *t += v;
        }
    }
    let centers: Vec<Vec<f64>> = sums
        .iter()
        .zip(&sizes)
        .map(|(t, &n)| {
            let v = 1.0 / (1.0 / r + n as f64 / s);
            t.iter().map(|x| v * x / s).collect()
        })
        .collect();
    clustering.centers = Some(centers_matrix(&centers, dim));
    Ok(DPMMFit {
        clustering,
        map_log_density,
        co_clustering: co,
        k_trace,
    })
}

/// k-means with k-means++ seeding; the best of `restarts` runs by
/// within-cluster sum of squares.
pub fn kmeans(y: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<Clustering> {
    let p = y.nrows();
    if k == 0 || k > p {
        return Err(Error::input(format!("k = {k} outside 1..={p}")));
    }
    let dim = y.ncols();
    let pts = rows(y);
    let mut best: Option<(f64, Vec<usize>, Vec<Vec<f64>>)> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = rng::stream(seed, "kmeans", &[restart as u64]);
        let mut centers = vec![pts[rng.random_range(0..p)].clone()];
        let mut d2: Vec<f64> = pts.iter().map(|x| sq_dist(x, &centers[0])).collect();
        while centers.len() < k {
            let tot: f64 = d2.iter().sum();
            let next = if tot > 0.0 {
                let mut u = rng.random::<f64>() * tot;
                let mut pick = p - 1;
                for (i, w) in d2.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            } else {
                rng.random_range(0..p)
            };
            centers.push(pts[next].clone());
            for (d, x) in d2.iter_mut().zip(&pts) {
                *d = d.min(sq_dist(x, centers.last().unwrap()));
            }
        }
        let mut labels = vec![usize::MAX; p];
        for _ in 0..300 {
            let mut changed = false;
            for (i, x) in pts.iter().enumerate() {
                let mut bi = 0;
                let mut bd = f64::INFINITY;
                for (c, ctr) in centers.iter().enumerate() {
                    let d = sq_dist(x, ctr);
                    if d < bd {
                        bd = d;
                        bi = c;
                    }
                }
                if labels[i] != bi {
                    labels[i] = bi;
                    changed = true;
                }
            }
            let new = means(&pts, &labels, k, dim);
            let mut counts = vec![0usize; k];
            labels.iter().for_each(|&l| counts[l] += 1);
            for c in 0..k {
                if counts[c] > 0 {
                    centers[c] = new[c].clone();
                }
            }
            if !changed {
                break;
            }
        }
        let wss: f64 = pts.iter().zip(&labels).map(|(x, &l)| sq_dist(x, &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _, _)| wss < *b) {
            best = Some((wss, labels, centers));
        }
    }
    let (wss, labels, _) = best.unwrap();
    let mut c = Clustering::from_labels(&labels, ClusteringMethod::KMeans { k, restarts, seed });
    let kk = c.k();
    c.centers = Some(centers_matrix(&means(&pts, c.labels(), kk, dim), dim));
    c.objective = Some(wss);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blobs() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            8,
            2,
            &[
                0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 0.1, 0.1, 5.0, 5.0, 5.1, 5.0, 5.0, 5.1, 5.1, 5.1,
            ],
        )
    }

    /// All set partitions of `0..n` as restricted growth strings.
    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        fn rec(cur: &mut Vec<usize>, n: usize, max: usize, out: &mut Vec<Vec<usize>>) {
            if cur.len() == n {
                out.push(cur.clone());
                return;
            }
            for l in 0..=max + 1 {
                cur.push(l);
                rec(cur, n, max.max(l), out);
                cur.pop();
            }
        }
        if n > 0 {
            let mut cur = vec![0];
            rec(&mut cur, n, 0, &mut out);
        }
        out
    }

    fn brute_force_optimum(y: &DMatrix<f64>, lambda: f64) -> f64 {
        all_partitions(y.nrows())
            .iter()
            .map(|labels| {
                let k = labels.iter().max().unwrap() + 1;
                let pts = rows(y);
                let c = means(&pts, labels, k, y.ncols());
                objective(y, labels, &centers_matrix(&c, y.ncols()), lambda).unwrap()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn partition_enumeration_counts_bell_numbers() {
        assert_eq!(all_partitions(4).len(), 15);
        assert_eq!(all_partitions(8).len(), 4140);
    }

    #[test]
    fn huge_lambda_gives_one_cluster_at_mean() {
        let y = blobs();
        let fit = dp_means_fit(&y, &DPMeansConfig { lambda: 1e6, ..Default::default() }).unwrap();
        assert_eq!(fit.clustering.k(), 1);
        let c = fit.clustering.centers.as_ref().unwrap();
        assert!((c[(0, 0)] - 2.55).abs() < 1e-12);
    }

    #[test]
    fn tiny_lambda_gives_singletons() {
        let y = blobs();
        let lambda = 1e-6;
        let fit = dp_means_fit(&y, &DPMeansConfig { lambda, ..Default::default() }).unwrap();
        assert_eq!(fit.clustering.k(), 8);
        assert!((fit.clustering.objective.unwrap() - lambda * 8.0).abs() < 1e-12);
    }

    #[test]
    fn two_blobs_reach_global_optimum() {
        let y = blobs();
        let fit = dp_means_fit(&y, &DPMeansConfig::default()).unwrap();
        assert_eq!(fit.clustering.k(), 2);
        assert_eq!(fit.clustering.labels(), &[0, 0, 0, 0, 1, 1, 1, 1]);
        let opt = brute_force_optimum(&y, 0.5);
        assert!((fit.clustering.objective.unwrap() - opt).abs() < 1e-10);
    }

    #[test]
    fn objective_matches_recomputation_and_trace_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let y = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
            let fit = dp_means_fit(&y, &DPMeansConfig::default()).unwrap();
            assert!(fit.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", fit.trace);
            let c = &fit.clustering;
            let recomputed = objective(&y, c.labels(), c.centers.as_ref().unwrap(), 0.5).unwrap();
            assert!((recomputed - c.objective.unwrap()).abs() < 1e-8);
            // independent formula
            let mut direct = 0.5 * c.k() as f64;
            for members in c.members() {
                let m: Vec<f64> = (0..3)
                    .map(|d| members.iter().map(|&i| y[(i, d)]).sum::<f64>() / members.len() as f64)
                    .collect();
                for &i in &members {
                    direct += (0..3).map(|d| (y[(i, d)] - m[d]).powi(2)).sum::<f64>();
                }
            }
            assert!((direct - c.objective.unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn objective_trivial_values_and_errors() {
        let y = DMatrix::from_row_slice(3, 1, &[2.0, 2.0, 2.0]);
        let c = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert_eq!(objective(&y, &[0, 0, 0], &c, 0.7).unwrap(), 0.7);
        let y = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(objective(&y, &[0, 1, 2], &y, 0.5).unwrap(), 1.5);
        assert!(objective(&y, &[0, 1], &y, 0.5).is_err());
        assert!(objective(&y, &[0, 1, 2], &DMatrix::zeros(3, 2), 0.5).is_err());
    }

    #[test]
    fn fixed_centers_give_lloyd_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let y = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0));
            let init = y.rows(0, 3).into_owned();
            let cfg = DPMeansConfig { lambda: 1e9, max_iter: 1, ..Default::default() };
            let fit = dp_means_with_centers(&y, &init, &cfg).unwrap();
            // manual Lloyd step
            let pts = rows(&y);
            let labels: Vec<usize> = pts
                .iter()
                .map(|x| {
                    (0..3)
                        .min_by(|&a, &b| {
                            sq_dist(x, &pts[a]).partial_cmp(&sq_dist(x, &pts[b])).unwrap().then(a.cmp(&b))
                        })
                        .unwrap()
                })
                .collect();
            let manual = Clustering::truth(&labels);
            assert!(manual.same_partition(&fit.clustering));
        }
    }

    fn gap_ratios(mut sample: impl FnMut(&mut ChaCha8Rng) -> DMatrix<f64>, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50)
            .map(|_| {
                let y = sample(&mut rng);
                let got = dp_means_fit(&y, &DPMeansConfig::default()).unwrap().clustering.objective.unwrap();
                let opt = brute_force_optimum(&y, 0.5);
                assert!(got >= opt - 1e-10);
                got / opt
            })
            .collect()
    }

    fn report(name: &str, ratios: &[f64]) -> f64 {
        let worst = ratios.iter().cloned().fold(1.0, f64::max);
        let over = ratios.iter().filter(|&&r| r > 1.2).count();
        eprintln!("{name}: worst ratio {worst:.4}, {over}/50 above 1.2");
        worst
    }

    #[test]
    fn optimality_gap_is_reported() {
        // From the global-mean start a point can keep its first-pass center
        // while its neighbours seed a new cluster, leaving a stuck singleton.
        // The gap above the exhaustive optimum is therefore reported, not bounded;
        // only the lower bound is exact.
        let embedding_like = gap_ratios(
            |rng| {
                let k = rng.random_range(2..=3);
                DMatrix::from_fn(8, 3, |i, j| {
                    let z: f64 = StandardNormal.sample(rng);
                    let base = if (i % k) == j { 1.0 } else { 0.0 };
                    base + 0.1 * z
                })
            },
            13,
        );
        report("noisy orthogonal unit vectors", &embedding_like);
        let mixture = gap_ratios(
            |rng| {
                let k = rng.random_range(2..=3);
                let centers: Vec<[f64; 2]> = (0..k).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
                DMatrix::from_fn(8, 2, |i, j| {
                    let z: f64 = StandardNormal.sample(rng);
                    centers[i % k][j] + 0.2 * z
                })
            },
            13,
        );
        report("gaussian mixtures", &mixture);
        let uniform = gap_ratios(|rng| DMatrix::from_fn(7, 2, |_, _| rng.random_range(-1.0..1.0)), 13);
        report("uniform square", &uniform);
    }

    #[test]
    fn permutation_equivariance() {
        let y = blobs();
        let perm = [5, 2, 7, 0, 3, 6, 1, 4];
        let yp = DMatrix::from_fn(8, 2, |i, j| y[(perm[i], j)]);
        let a = dp_means_fit(&y, &DPMeansConfig::default()).unwrap().clustering;
        let b = dp_means_fit(&yp, &DPMeansConfig::default()).unwrap().clustering;
        let mapped: Vec<usize> = perm.iter().map(|&i| a.labels()[i]).collect();
        assert!(Clustering::truth(&mapped).same_partition(&b));
    }

    #[test]
    fn dpmm_identical_points_single_cluster() {
        let y = DMatrix::from_element(6, 2, 0.3);
        let cfg = DPMMConfig { alpha0: 1.0, n_iter: 200, n_burnin: 50, ..Default::default() };
        let fit = dpmm_fit(&y, &cfg).unwrap();
        assert_eq!(fit.clustering.k(), 1);
        // oracle: the one-cluster joint density beats every split
        let one = dpmm_log_joint(&y, &[0; 6], &cfg);
        for labels in all_partitions(6).iter().skip(1) {
            assert!(dpmm_log_joint(&y, labels, &cfg) < one);
        }
    }

    #[test]
    fn dpmm_single_point() {
        let y = DMatrix::from_row_slice(1, 2, &[0.5, -0.5]);
        let fit = dpmm_fit(&y, &DPMMConfig { n_iter: 20, n_burnin: 5, ..Default::default() }).unwrap();
        assert_eq!(fit.clustering.k(), 1);
        assert_eq!(fit.co_clustering[(0, 0)], 1.0);
    }

    #[test]
    fn dpmm_two_blobs_co_clustering() {
        let y = blobs();
        let cfg = DPMMConfig { alpha0: 1.0, sigma: 0.01, rho: 1.0, n_iter: 2200, n_burnin: 200, seed: 3 };
        let fit = dpmm_fit(&y, &cfg).unwrap();
        let reference = dp_means(&Embedding::from_points(y.clone(), (0..8).map(|i| i.to_string()).collect()).unwrap(), &DPMeansConfig::default()).unwrap();
        assert!(fit.clustering.same_partition(&reference));
        for i in 0..8 {
            for j in 0..8 {
                let same = (i < 4) == (j < 4);
                if same {
                    assert!(fit.co_clustering[(i, j)] >= 0.95);
                } else {
                    assert!(fit.co_clustering[(i, j)] <= 0.05);
                }
            }
        }
        assert!(fit.k_trace.iter().all(|&k| (1..=8).contains(&k)));
    }

    #[test]
    fn dpmm_deterministic() {
        let y = blobs();
        let cfg = DPMMConfig { n_iter: 100, n_burnin: 10, seed: 4, ..Default::default() };
        let a = dpmm_fit(&y, &cfg).unwrap();
        let b = dpmm_fit(&y, &cfg).unwrap();
        assert_eq!(a.clustering, b.clustering);
        assert_eq!(a.co_clustering, b.co_clustering);
    }

    #[test]
    fn kmeans_recovers_blobs() {
        let y = blobs();
        let c = kmeans(&y, 2, 5, 1).unwrap();
        assert_eq!(c.labels(), &[0, 0, 0, 0, 1, 1, 1, 1]);
        assert!(kmeans(&y, 0, 1, 1).is_err());
        assert!(kmeans(&y, 9, 1, 1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DPMeansConfig { lambda: 0.0, ..Default::default() }.validate().is_err());
        assert!(DPMeansConfig { max_iter: 0, ..Default::default() }.validate().is_err());
        assert!(DPMMConfig { n_iter: 5, n_burnin: 5, ..Default::default() }.validate().is_err());
        assert!(DPMMConfig { sigma: -1.0, ..Default::default() }.validate().is_err());
    }
}
