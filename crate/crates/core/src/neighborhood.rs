//! Bayesian neighborhood selection.
//!
//! Each variable is regressed on all others under a rescaled spike-and-slab
//! prior (responses multiplied by `sqrt(n)`, response variance `sigma^2 n`),
//! sampled with the stochastic-variable-selection Gibbs sweep. Model-averaged
//! coefficients from the `l`-th and `j`-th regressions combine into the
//! partial correlation `sign(b_lj) * sqrt(b_lj * b_jl)`.
//!
//! Internally every column is standardized to unit population variance so the
//! default hyperparameters mean the same thing for every variable; reported
//! coefficients are transformed back to the original units.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Standardized};
use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};
use crate::par::Execution;
use crate::rng;
use crate::spectral::WeightedAdjacency;

const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeSlabConfig {
    /// Gamma shape for `tau^-2`.
    pub a1: f64,
    /// Gamma rate for `tau^-2`.
    pub a2: f64,
    /// Gamma shape for `sigma^-2`.
    pub b1: f64,
    /// Gamma rate for `sigma^-2`.
    pub b2: f64,
    /// Spike variance scale.
    pub nu0: f64,
    /// Total Gibbs sweeps, burn-in included.
    pub n_iter: usize,
    pub n_burnin: usize,
    /// Keep every `thin`-th post-burn-in sweep.
    pub thin: usize,
    pub seed: u64,
}

impl Default for SpikeSlabConfig {
    fn default() -> Self {
        SpikeSlabConfig {
            a1: 5.0,
            a2: 50.0,
            b1: 1e-4,
            b2: 1e-4,
            nu0: 0.005,
            n_iter: 500,
            n_burnin: 100,
            thin: 1,
            seed: 0,
        }
    }
}

impl SpikeSlabConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("nu0", self.nu0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("spike-slab `{name}` must be positive, got {v}")));
            }
        }
        if self.n_iter <= self.n_burnin {
            return Err(Error::config(format!(
                "n_iter ({}) must exceed n_burnin ({})",
                self.n_iter, self.n_burnin
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be >= 1"));
        }
        Ok(())
    }

    fn kept_draws(&self) -> usize {
        (self.n_iter - self.n_burnin).div_ceil(self.thin)
    }
}

/// Posterior summary of the regression of variable `index` on the rest.
///
/// Vectors are indexed by the regressors in increasing variable order with
/// `index` itself skipped; see [`RegressionPosterior::coefficient`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionPosterior {
    pub index: usize,
    pub beta_bar: Vec<f64>,
    pub gamma_freq: Vec<f64>,
    pub sigma2_bar: f64,
}

impl RegressionPosterior {
    /// Model-averaged coefficient of variable `j` (`j != index`).
    pub fn coefficient(&self, j: usize) -> f64 {
        assert_ne!(j, self.index, "no self-coefficient");
        self.beta_bar[if j < self.index { j } else { j - 1 }]
    }

    pub fn inclusion(&self, j: usize) -> f64 {
        assert_ne!(j, self.index, "no self-coefficient");
        self.gamma_freq[if j < self.index { j } else { j - 1 }]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrelationEstimate {
    pub names: Vec<String>,
    /// Symmetric, unit diagonal, entries in `[-1, 1]`.
    pub r: DMatrix<f64>,
    /// `coefficients[(l, j)]` is the averaged coefficient of `X_j` when
    /// regressing `X_l`; the diagonal is zero.
    pub coefficients: DMatrix<f64>,
    pub config: SpikeSlabConfig,
}

impl PartialCorrelationEstimate {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }
}

fn check_shape(data: &DataMatrix) -> Result<()> {
    if data.n_samples() < 3 {
        return Err(Error::input(format!(
            "neighborhood regression needs at least 3 samples, got {}",
            data.n_samples()
        )));
    }
    if data.n_vars() < 2 {
        return Err(Error::input(format!(
            "neighborhood regression needs at least 2 variables, got {}",
            data.n_vars()
        )));
    }
    Ok(())
}

/// Run the SVS Gibbs sampler for the regression of `X_l` on all other
/// columns. Deterministic in `(data, l, cfg)`.
pub fn run_spike_slab_regression(data: &DataMatrix, l: usize, cfg: &SpikeSlabConfig) -> Result<RegressionPosterior> {
    cfg.validate()?;
    check_shape(data)?;
    if l >= data.n_vars() {
        return Err(Error::input(format!("variable index {l} out of range for p = {}", data.n_vars())));
    }
    let std = Standardized::from_data(data);
    let gram = std.gram();
    let mut chain_rng = rng::stream(cfg.seed, "spike-slab", &[l as u64]);
    regression_from_gram(&gram, data.n_vars(), data.n_samples(), l, &std, cfg, &mut chain_rng)
}

struct ChainBuffers {
    a: Vec<f64>,
    l: Vec<f64>,
    mean: Vec<f64>,
    noise: Vec<f64>,
}

fn regression_from_gram<R: Rng + ?Sized>(
    gram: &[f64],
    p: usize,
    n: usize,
    l: usize,
    std: &Standardized,
    cfg: &SpikeSlabConfig,
    rng: &mut R,
) -> Result<RegressionPosterior> {
    let m = p - 1;
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let others: Vec<usize> = (0..p).filter(|&j| j != l).collect();

    let mut g_sub = vec![0.0; m * m];
    for (a, &ja) in others.iter().enumerate() {
        for (b, &jb) in others.iter().enumerate() {
            g_sub[a * m + b] = gram[ja * p + jb];
        }
    }
    // X_{-l}^T X_l^* with X_l^* = sqrt(n) z_l
    let xty: Vec<f64> = others.iter().map(|&j| sqrt_n * gram[j * p + l]).collect();
    let yty = nf * gram[l * p + l];

    let mut beta = vec![0.0; m];
    let mut slab = vec![true; m];
    let mut tau2 = vec![cfg.a2 / cfg.a1; m];
    let mut lambda: Vec<f64> = tau2.clone();
    let mut u = 0.5f64;
    let mut sigma2 = 1.0f64;

    let mut buf = ChainBuffers {
        a: vec![0.0; m * m],
        l: vec![0.0; m * m],
        mean: vec![0.0; m],
        noise: vec![0.0; m],
    };

    let mut beta_sum = vec![0.0; m];
    let mut slab_count = vec![0usize; m];
    let mut sigma2_sum = 0.0;
    let mut kept = 0usize;
    let half_log_nu0 = 0.5 * cfg.nu0.ln();

    for it in 0..cfg.n_iter {
        // 1. beta | lambda, sigma^2 ~ N(Sigma X^T X^*, sigma^2 Sigma),
        //    Sigma = (X^T X + n sigma^2 Lambda^-1)^-1
        buf.a.copy_from_slice(&g_sub);
        for j in 0..m {
            buf.a[j * m + j] += nf * sigma2 / lambda[j];
        }
        if !Cholesky::factor_into(&buf.a, m, &mut buf.l) {
            for j in 0..m {
                buf.a[j * m + j] += JITTER;
            }
            if !Cholesky::factor_into(&buf.a, m, &mut buf.l) {
                return Err(Error::numerical(format!(
                    "regression {l}: posterior precision not positive definite at sweep {it}"
                )));
            }
        }
        buf.mean.copy_from_slice(&xty);
        linalg::solve_lower_with(&buf.l, m, &mut buf.mean);
        linalg::solve_upper_transposed_with(&buf.l, m, &mut buf.mean);
        for z in buf.noise.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        linalg::solve_upper_transposed_with(&buf.l, m, &mut buf.noise);
        let sigma = sigma2.sqrt();
        for j in 0..m {
            beta[j] = buf.mean[j] + sigma * buf.noise[j];
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::numerical(format!("regression {l}: non-finite coefficient draw at sweep {it}")));
        }

        // 2. gamma | beta, tau, u  on {nu0, 1}
        let ln_u = u.ln();
        let ln_1mu = (1.0 - u).ln();
        for j in 0..m {
            let b2 = beta[j] * beta[j];
            let log_spike = ln_1mu - half_log_nu0 - b2 / (2.0 * cfg.nu0 * tau2[j]);
            let log_slab = ln_u - b2 / (2.0 * tau2[j]);
            let p_slab = slab_probability(log_spike, log_slab);
            slab[j] = rng.random::<f64>() < p_slab;
        }

        // 3. tau^-2 | beta, gamma ~ Gamma(a1 + 1/2, a2 + beta^2 / (2 gamma))
        for j in 0..m {
            let gamma = if slab[j] { 1.0 } else { cfg.nu0 };
            let rate = cfg.a2 + beta[j] * beta[j] / (2.0 * gamma);
            let precision = gamma_draw(rng, cfg.a1 + 0.5, rate)?;
            tau2[j] = 1.0 / precision;
        }

        // 4. u | gamma ~ Beta(1 + #slab, 1 + #spike)
        let n_slab = slab.iter().filter(|&&s| s).count();
        u = Beta::new(1.0 + n_slab as f64, 1.0 + (m - n_slab) as f64)
            .map_err(|e| Error::numerical(format!("beta parameters: {e}")))?
            .sample(rng);

        // 5. sigma^-2 | beta ~ Gamma(b1 + n/2, b2 + ||X^* - X beta||^2 / (2n))
        let rss = residual_sum_of_squares(yty, &xty, &g_sub, &beta);
        let precision = gamma_draw(rng, cfg.b1 + nf / 2.0, cfg.b2 + rss / (2.0 * nf))?;
        sigma2 = 1.0 / precision;

        // 6. lambda = gamma tau^2
        for j in 0..m {
            lambda[j] = if slab[j] { tau2[j] } else { cfg.nu0 * tau2[j] };
        }

        if it >= cfg.n_burnin && (it - cfg.n_burnin) % cfg.thin == 0 {
            for j in 0..m {
                beta_sum[j] += beta[j];
                slab_count[j] += usize::from(slab[j]);
            }
            sigma2_sum += sigma2;
            kept += 1;
        }
    }
    debug_assert_eq!(kept, cfg.kept_draws());

    let kf = kept as f64;
    let scale_l = std.scale[l];
    let beta_bar = others
        .iter()
        .zip(&beta_sum)
        .map(|(&j, &s)| {
            if std.constant[l] || std.constant[j] {
                0.0
            } else {
                s / kf / sqrt_n * scale_l / std.scale[j]
            }
        })
        .collect();
    let gamma_freq = slab_count.iter().map(|&c| c as f64 / kf).collect();
    let sigma2_bar = sigma2_sum / kf * scale_l * scale_l;
    if !(sigma2_bar > 0.0) {
        return Err(Error::numerical(format!("regression {l}: residual variance collapsed to {sigma2_bar}")));
    }
    Ok(RegressionPosterior {
        index: l,
        beta_bar,
        gamma_freq,
        sigma2_bar,
    })
}

fn slab_probability(log_spike: f64, log_slab: f64) -> f64 {
    if log_slab == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_spike == f64::NEG_INFINITY {
        return 1.0;
    }
    1.0 / (1.0 + (log_spike - log_slab).exp())
}

fn gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::numerical(format!("gamma({shape}, {rate}): {e}")))?;
    let x: f64 = g.sample(rng);
    // a zero precision draw is possible in extreme underflow; keep it positive
    Ok(x.max(f64::MIN_POSITIVE))
}

fn residual_sum_of_squares(yty: f64, xty: &[f64], g: &[f64], beta: &[f64]) -> f64 {
    let m = beta.len();
    let mut quad = 0.0;
    for a in 0..m {
        let row = &g[a * m..(a + 1) * m];
        let gb: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        quad += beta[a] * gb;
    }
    let cross: f64 = xty.iter().zip(beta).map(|(x, b)| x * b).sum();
    (yty - 2.0 * cross + quad).max(0.0)
}

/// `sign(b_lj) sqrt(b_lj b_jl)`, zero for sign-discordant pairs, clamped to
/// `[-1, 1]`.
pub fn partial_correlation(b_lj: f64, b_jl: f64) -> f64 {
    let prod = b_lj * b_jl;
    if !(prod > 0.0) {
        return 0.0;
    }
    (b_lj.signum() * prod.sqrt()).clamp(-1.0, 1.0)
}

/// Assemble `R` from the `p` regression posteriors (indexed by variable).
pub fn partial_correlations_from_posteriors(names: Vec<String>, posteriors: &[RegressionPosterior], config: SpikeSlabConfig) -> PartialCorrelationEstimate {
    let p = posteriors.len();
    let mut coefficients = DMatrix::zeros(p, p);
    for post in posteriors {
        for j in (0..p).filter(|&j| j != post.index) {
            coefficients[(post.index, j)] = post.coefficient(j);
        }
    }
    let mut r = DMatrix::identity(p, p);
    for l in 0..p {
        for j in 0..l {
            let v = partial_correlation(coefficients[(l, j)], coefficients[(j, l)]);
            r[(l, j)] = v;
            r[(j, l)] = v;
        }
    }
    PartialCorrelationEstimate {
        names,
        r,
        coefficients,
        config,
    }
}

pub fn estimate_partial_correlations(data: &DataMatrix, cfg: &SpikeSlabConfig) -> Result<PartialCorrelationEstimate> {
    estimate_partial_correlations_with(data, cfg, Execution::default())
}

/// The `p` regressions run as independent jobs; each owns the RNG stream
/// derived from `(cfg.seed, l)`, so the result does not depend on `exec`.
pub fn estimate_partial_correlations_with(data: &DataMatrix, cfg: &SpikeSlabConfig, exec: Execution) -> Result<PartialCorrelationEstimate> {
    cfg.validate()?;
    check_shape(data)?;
    let std = Standardized::from_data(data);
    let gram = std.gram();
    let (p, n) = (data.n_vars(), data.n_samples());
    let posteriors = exec.try_map_indices(p, |l| {
        let mut chain_rng = rng::stream(cfg.seed, "spike-slab", &[l as u64]);
        regression_from_gram(&gram, p, n, l, &std, cfg, &mut chain_rng)
    })?;
    Ok(partial_correlations_from_posteriors(data.names().to_vec(), &posteriors, cfg.clone()))
}

/// `W = |R|` off the diagonal, zero diagonal.
pub fn adjacency_from_partial_correlations(r: &PartialCorrelationEstimate) -> WeightedAdjacency {
    let p = r.dim();
    let w = DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { r.r[(i, j)].abs() });
    WeightedAdjacency::new_unchecked(w, r.names.clone())
}

/// Population partial correlations `-omega_lj / sqrt(omega_ll omega_jj)` from a
/// precision matrix, unit diagonal.
pub fn partial_correlations_from_precision(omega: &DMatrix<f64>) -> DMatrix<f64> {
    let p = omega.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            -omega[(i, j)] / (omega[(i, i)] * omega[(j, j)]).sqrt()
        }
    })
}
