//! Consensus clustering of the same variables across several datasets:
//! per-source local clusterings tied to one global clustering through an
//! adherence-weighted dependence function.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::dpcluster;
use crate::error::{Error, Result};
use crate::partition::{Clustering, ClusteringMethod};
use crate::rng::{self, StreamRng};
use crate::spectral::Embedding;

const SIMPLEX_TOL: f64 = 1e-9;

/// Minimum cluster size counted when choosing `K` from per-source runs.
pub const DEFAULT_MIN_MAJOR_SIZE: usize = 4;

fn check_alpha(alpha: f64, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::config(format!("K must be at least 2, got {k}")));
    }
    let lo = 1.0 / k as f64;
    if !(alpha >= lo - 1e-12 && alpha <= 1.0 + 1e-12) {
        return Err(Error::config(format!("adherence {alpha} outside [1/{k}, 1]")));
    }
    Ok(())
}

/// `alpha` when the local label matches the global one, `(1 - alpha)/(K - 1)`
/// otherwise. Labels are zero-based.
pub fn dependence_function(local_k: usize, global_k: usize, alpha: f64, k: usize) -> Result<f64> {
    check_alpha(alpha, k)?;
    if local_k >= k || global_k >= k {
        return Err(Error::input(format!("labels {local_k}, {global_k} outside 0..{k}")));
    }
    Ok(nu(local_k == global_k, alpha, k))
}

fn nu(matches: bool, alpha: f64, k: usize) -> f64 {
    if matches {
        alpha
    } else {
        (1.0 - alpha) / (k as f64 - 1.0)
    }
}

/// Marginal probability that a local label equals `k` given the global
/// weights `pi`.
pub fn local_cluster_probability(k: usize, pi: &[f64], alpha: f64) -> Result<f64> {
    let kk = pi.len();
    check_alpha(alpha, kk)?;
    if pi.iter().any(|&v| !(v >= 0.0) || v > 1.0) || (pi.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::input("pi is not on the simplex"));
    }
    if k >= kk {
        return Err(Error::input(format!("label {k} outside 0..{kk}")));
    }
    Ok(pi[k] * alpha + (1.0 - pi[k]) * (1.0 - alpha) / (kk as f64 - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    /// Shared number of local and global clusters.
    pub k: usize,
    /// Symmetric Dirichlet concentration on the global weights.
    pub dirichlet_conc: f64,
    /// Component variance (per coordinate).
    pub sigma: f64,
    /// Prior variance of component means.
    pub rho: f64,
    /// Beta prior on each adherence, before truncation to `[1/K, 1]`.
    pub alpha_prior: (f64, f64),
    /// Hold every adherence at this value instead of sampling it.
    pub fix_alpha: Option<f64>,
    pub n_iter: usize,
    pub n_burnin: usize,
    pub seed: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            k: 2,
            dirichlet_conc: 1.0,
            sigma: 0.05,
            rho: 1.0,
            alpha_prior: (1.0, 1.0),
            fix_alpha: None,
            n_iter: 1000,
            n_burnin: 200,
            seed: 0,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config(format!("k must be at least 2, got {}", self.k)));
        }
        for (name, v) in [
            ("dirichlet_conc", self.dirichlet_conc),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("alpha_prior.0", self.alpha_prior.0),
            ("alpha_prior.1", self.alpha_prior.1),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some(a) = self.fix_alpha {
            check_alpha(a, self.k)?;
        }
        if self.n_iter <= self.n_burnin {
            return Err(Error::config(format!("n_iter ({}) must exceed n_burnin ({})", self.n_iter, self.n_burnin)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub names: Vec<String>,
    /// Global clustering at the highest-density visited state.
    pub global: Clustering,
    /// Local clusterings of each source at that state.
    pub local: Vec<Clustering>,
    pub alpha_mean: Vec<f64>,
    pub alpha_min: Vec<f64>,
    pub alpha_max: Vec<f64>,
    pub pi_mean: Vec<f64>,
    pub map_log_density: f64,
    /// Post-burn-in co-clustering frequencies of the global labels.
    pub global_co_clustering: DMatrix<f64>,
    pub local_co_clustering: Vec<DMatrix<f64>>,
}

/// `K` as the largest number of clusters with at least `min_size` members
/// over the per-source clusterings, and at least 2.
pub fn choose_k(per_source: &[Clustering], min_size: usize) -> usize {
    per_source
        .iter()
        .map(|c| c.sizes().iter().filter(|&&s| s >= min_size).count())
        .max()
        .unwrap_or(0)
        .max(2)
}

/// Align sources to the first source's variable order and zero-pad to a
/// common dimension.
pub fn align_sources(embeddings: &[Embedding]) -> Result<Vec<Embedding>> {
    let first = embeddings.first().ok_or_else(|| Error::input("no sources"))?;
    let names = &first.names;
    let mut sorted = names.clone();
    sorted.sort();
    let dim = embeddings.iter().map(|e| e.dim()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(embeddings.len());
    for (j, e) in embeddings.iter().enumerate() {
        let mut s = e.names.clone();
        s.sort();
        if s != sorted {
            return Err(Error::input(format!("source {} has a different variable set from source 1", j + 1)));
        }
        let aligned = if &e.names == names {
            e.clone()
        } else {
            let pos: std::collections::HashMap<&str, usize> = e.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
            let y = DMatrix::from_fn(e.n_points(), e.dim(), |r, c| e.y[(pos[names[r].as_str()], c)]);
            Embedding { y, names: names.clone(), ..e.clone() }
        };
        out.push(aligned.padded(dim));
    }
    Ok(out)
}

fn log_normal(x: &[f64], mu: &[f64], var: f64) -> f64 {
    let d2: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI * var).ln() + d2 / var)
}

fn ln_or_neg_inf(v: f64) -> f64 {
    if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }
}

fn sample_log_weights(logw: &[f64], r: &mut StreamRng) -> usize {
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|v| (v - m).exp()).collect();
    let mut u = r.random::<f64>() * w.iter().sum::<f64>();
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Draw from `Beta(a, b)` restricted to `[lo, 1]` by inverting the CDF.
fn truncated_beta(a: f64, b: f64, lo: f64, r: &mut StreamRng) -> f64 {
    let dist = Beta::new(a, b).expect("positive beta parameters");
    let f_lo = dist.cdf(lo);
    if f_lo >= 1.0 - 1e-15 {
        return lo;
    }
    let u = f_lo + r.random::<f64>() * (1.0 - f_lo);
    dist.inverse_cdf(u).clamp(lo, 1.0)
}

struct State {
    global: Vec<usize>,
    local: Vec<Vec<usize>>,
    mus: Vec<Vec<Vec<f64>>>,
    pi: Vec<f64>,
    alpha: Vec<f64>,
}

fn log_density(pts: &[Vec<Vec<f64>>], st: &State, cfg: &ConsensusConfig) -> f64 {
    let k = cfg.k;
    let mut total = 0.0;
    for (t, &g) in st.global.iter().enumerate() {
        total += ln_or_neg_inf(st.pi[g]);
        for j in 0..pts.len() {
            let l = st.local[j][t];
            total += ln_or_neg_inf(nu(l == g, st.alpha[j], k)) + log_normal(&pts[j][t], &st.mus[j][l], cfg.sigma);
        }
    }
    for mus in &st.mus {
        for mu in mus {
            total += log_normal(mu, &vec![0.0; mu.len()], cfg.rho);
        }
    }
    total
}

/// Gibbs sampler for the consensus model. Each sweep draws, in order: every
/// variable's global label jointly with its local labels (locals summed out
/// of the global step), the component means, the global weights, the
/// adherences, and the global labels again from their full conditional.
pub fn consensus_gibbs(embeddings: &[Embedding], cfg: &ConsensusConfig) -> Result<ConsensusResult> {
    cfg.validate()?;
    if embeddings.is_empty() {
        return Err(Error::input("consensus needs at least one source"));
    }
    let sources = align_sources(embeddings)?;
    let names = sources[0].names.clone();
    let p = names.len();
    if p == 0 {
        return Err(Error::input("no variables to cluster"));
    }
    let nj = sources.len();
    let k = cfg.k;
    let dim = sources[0].dim();
    let pts: Vec<Vec<Vec<f64>>> = sources.iter().map(|e| (0..p).map(|t| e.point(t)).collect()).collect();
    let lo = 1.0 / k as f64;
    let (s, rho) = (cfg.sigma, cfg.rho);

    let mut init_local = Vec::with_capacity(nj);
    for (j, e) in sources.iter().enumerate() {
        let c = dpcluster::kmeans(&e.y, k.min(p), 5, rng::derive_seed(cfg.seed, "consensus-init", &[j as u64]))?;
        init_local.push(c.labels().to_vec());
    }
    let mut st = State {
        global: init_local[0].clone(),
        mus: vec![vec![vec![0.0; dim]; k]; nj],
        local: init_local,
        pi: vec![1.0 / k as f64; k],
        alpha: vec![cfg.fix_alpha.unwrap_or((1.0 + lo) / 2.0); nj],
    };
    let mut r = rng::stream(cfg.seed, "consensus", &[]);
    let draw_means = |st: &mut State, r: &mut StreamRng| {
        for j in 0..nj {
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for t in 0..p {
                let l = st.local[j][t];
                counts[l] += 1;
                for (a, b) in sums[l].iter_mut().zip(&pts[j][t]) {
                    *a += b;
                }
            }
            for c in 0..k {
                let v = 1.0 / (1.0 / rho + counts[c] as f64 / s);
                for d in 0..dim {
                    let z: f64 = StandardNormal.sample(r);
                    st.mus[j][c][d] = v * sums[c][d] / s + v.sqrt() * z;
                }
            }
        }
    };
    draw_means(&mut st, &mut r);

    let kept = cfg.n_iter - cfg.n_burnin;
    let mut g_co = DMatrix::zeros(p, p);
    let mut l_co = vec![DMatrix::zeros(p, p); nj];
    let mut alpha_sum = vec![0.0; nj];
    let mut alpha_min = vec![f64::INFINITY; nj];
    let mut alpha_max = vec![f64::NEG_INFINITY; nj];
    let mut pi_sum = vec![0.0; k];
    let mut best: Option<(f64, Vec<usize>, Vec<Vec<usize>>)> = None;
    let mut logw = vec![0.0; k];
    let mut lik = vec![vec![0.0; k]; nj];

    for sweep in 0..cfg.n_iter {
        // joint draw of (global_t, local_{1..J,t})
        for t in 0..p {
            for j in 0..nj {
                for c in 0..k {
                    lik[j][c] = log_normal(&pts[j][t], &st.mus[j][c], s);
                }
            }
            for g in 0..k {
                let mut w = ln_or_neg_inf(st.pi[g]);
                for j in 0..nj {
                    let m = lik[j].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mix: f64 = (0..k).map(|c| nu(c == g, st.alpha[j], k) * (lik[j][c] - m).exp()).sum();
                    w += m + ln_or_neg_inf(mix);
                }
                logw[g] = w;
            }
            let g = sample_log_weights(&logw, &mut r);
            st.global[t] = g;
            for j in 0..nj {
                for c in 0..k {
                    logw[c] = ln_or_neg_inf(nu(c == g, st.alpha[j], k)) + lik[j][c];
                }
                st.local[j][t] = sample_log_weights(&logw, &mut r);
            }
        }
        draw_means(&mut st, &mut r);
        let mut counts = vec![0usize; k];
        for &g in &st.global {
            counts[g] += 1;
        }
        let gam: Vec<f64> = counts
            .iter()
            .map(|&c| Gamma::new(cfg.dirichlet_conc + c as f64, 1.0).expect("positive shape").sample(&mut r))
            .collect();
        let tot: f64 = gam.iter().sum();
        st.pi = gam.iter().map(|v| v / tot).collect();
        for j in 0..nj {
            st.alpha[j] = match cfg.fix_alpha {
                Some(a) => a,
                None => {
                    let m = (0..p).filter(|&t| st.local[j][t] == st.global[t]).count();
                    truncated_beta(cfg.alpha_prior.0 + m as f64, cfg.alpha_prior.1 + (p - m) as f64, lo, &mut r)
                }
            };
        }
        for t in 0..p {
            for g in 0..k {
                logw[g] = ln_or_neg_inf(st.pi[g]) + (0..nj).map(|j| ln_or_neg_inf(nu(st.local[j][t] == g, st.alpha[j], k))).sum::<f64>();
            }
            st.global[t] = sample_log_weights(&logw, &mut r);
        }

        if sweep >= cfg.n_burnin {
            for a in 0..p {
                for b in 0..p {
                    if st.global[a] == st.global[b] {
                        g_co[(a, b)] += 1.0;
                    }
                    for j in 0..nj {
                        if st.local[j][a] == st.local[j][b] {
                            l_co[j][(a, b)] += 1.0;
                        }
                    }
                }
            }
            for j in 0..nj {
                alpha_sum[j] += st.alpha[j];
                alpha_min[j] = alpha_min[j].min(st.alpha[j]);
                alpha_max[j] = alpha_max[j].max(st.alpha[j]);
            }
            for c in 0..k {
                pi_sum[c] += st.pi[c];
            }
            let ld = log_density(&pts, &st, cfg);
            if best.as_ref().is_none_or(|(b, _, _)| ld > *b) {
                best = Some((ld, st.global.clone(), st.local.clone()));
            }
        }
    }
    let n = kept as f64;
    g_co /= n;
    l_co.iter_mut().for_each(|m| *m /= n);
    let (map_log_density, g, l) = best.expect("at least one post-burn-in sweep");
    let method = ClusteringMethod::Consensus { k, seed: cfg.seed };
    Ok(ConsensusResult {
        names,
        global: Clustering::from_labels(&g, method.clone()),
        local: l.iter().map(|x| Clustering::from_labels(x, method.clone())).collect(),
        alpha_mean: alpha_sum.iter().map(|a| a / n).collect(),
        alpha_min,
        alpha_max,
        pi_mean: pi_sum.iter().map(|v| v / n).collect(),
        map_log_density,
        global_co_clustering: g_co,
        local_co_clustering: l_co,
    })
}
