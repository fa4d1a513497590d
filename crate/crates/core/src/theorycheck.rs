//! Numerical checks of the Laplacian perturbation bounds: the operator-norm
//! bound on `L - L0` in terms of `||W - W0||_F`, Weyl eigenvalue closeness and
//! the Davis-Kahan sin-theta bound on the leading eigenspace.
//!
//! `L` always means the symmetric normalized Laplacian here.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;
use crate::spectral::{self, LaplacianVariant, SpectralDecomposition, WeightedAdjacency};

const ASYMMETRY_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-8;
const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::dimension(format!("operator norm of a {}x{} matrix", a.nrows(), a.ncols())));
    }
    let asym = linalg::max_asymmetry(a);
    if asym > ASYMMETRY_TOL {
        return Err(Error::input(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let (vals, _) = linalg::sym_eigen_sorted(a);
    Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianBoundReport {
    pub p: usize,
    /// `||L - L0||_(2,2)`
    pub lhs: f64,
    /// `(log p)^{3/4} p^{kappa - 1/4} ||W - W0||_F`
    pub rhs: f64,
    pub w_diff_frobenius: f64,
    /// `log_p(max true degree)` clamped to `[1/2, 1)`.
    pub kappa: f64,
    /// Minimum true degree exceeds `sqrt(p / log p)`.
    pub tau_check: bool,
    /// Maximum true degree is below `p^kappa` for the reported `kappa`.
    pub kappa_check: bool,
    pub holds: bool,
}

impl LaplacianBoundReport {
    pub fn assumptions_met(&self) -> bool {
        self.tau_check && self.kappa_check
    }
}

fn sym_laplacian(w: &WeightedAdjacency) -> DMatrix<f64> {
    spectral::laplacian_matrix(w, LaplacianVariant::Sym)
}

pub fn check_laplacian_bound(w_hat: &WeightedAdjacency, w_true: &WeightedAdjacency) -> Result<LaplacianBoundReport> {
    let p = w_true.dim();
    if w_hat.dim() != p {
        return Err(Error::dimension(format!("graphs have {} and {p} vertices", w_hat.dim())));
    }
    if p < 2 {
        return Err(Error::input("bound needs at least 2 vertices"));
    }
    let lhs = operator_norm(&(sym_laplacian(w_hat) - sym_laplacian(w_true)))?;
    let w_diff_frobenius = (w_hat.matrix() - w_true.matrix()).norm();
    let degrees = w_true.degrees();
    let max_deg = degrees.iter().cloned().fold(0.0, f64::max);
    let min_deg = degrees.iter().cloned().fold(f64::INFINITY, f64::min);
    let pf = p as f64;
    let raw_kappa = if max_deg > 0.0 { max_deg.ln() / pf.ln() } else { 0.5 };
    let kappa = raw_kappa.clamp(0.5, 1.0 - 1e-12);
    let kappa_check = max_deg <= pf.powf(kappa);
    let tau_check = min_deg > (pf / pf.ln()).sqrt();
    let rhs = pf.ln().powf(0.75) * pf.powf(kappa - 0.25) * w_diff_frobenius;
    Ok(LaplacianBoundReport {
        p,
        lhs,
        rhs,
        w_diff_frobenius,
        kappa,
        tau_check,
        kappa_check,
        holds: lhs <= rhs * (1.0 + 1e-12) + 1e-12,
    })
}

/// `max_i |lambda_i - lambda_hat_i|`.
pub fn weyl_gap(l_hat: &SpectralDecomposition, l_true: &SpectralDecomposition) -> Result<f64> {
    if l_hat.variant != l_true.variant {
        return Err(Error::input(format!("variant mismatch: {} vs {}", l_hat.variant, l_true.variant)));
    }
    if l_hat.dim() != l_true.dim() {
        return Err(Error::dimension(format!("spectra of size {} and {}", l_hat.dim(), l_true.dim())));
    }
    Ok(l_hat
        .eigenvalues
        .iter()
        .zip(&l_true.eigenvalues)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

fn check_orthonormal(v: &DMatrix<f64>, what: &str) -> Result<()> {
    let d = v.ncols();
    let err = (v.transpose() * v - DMatrix::identity(d, d)).abs().max();
    if err > ORTHONORMAL_TOL {
        return Err(Error::input(format!("{what} columns are not orthonormal (error {err:e})")));
    }
    Ok(())
}

/// `max_i sqrt(1 - sigma_i^2)` over the singular values of `V^T V_hat`.
pub fn sin_theta_distance(v_hat: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    if v_hat.shape() != v.shape() {
        return Err(Error::dimension(format!("bases of shape {:?} and {:?}", v_hat.shape(), v.shape())));
    }
    check_orthonormal(v_hat, "V_hat")?;
    check_orthonormal(v, "V")?;
    let m = v.transpose() * v_hat;
    let sv = m.singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    Ok((1.0 - smin * smin).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinThetaReport {
    pub d: usize,
    pub sin_theta_op: f64,
    /// `lambda_{d+1}` of the true Laplacian.
    pub delta: f64,
    pub l_diff_op: f64,
    /// `||L - L0||_(2,2) / delta`
    pub bound: f64,
    /// `lambda_d` of the estimated Laplacian.
    pub eps_n: f64,
    pub gap_ok: bool,
    pub holds: bool,
}

pub fn check_davis_kahan(l_hat: &SpectralDecomposition, l_true: &SpectralDecomposition, d: usize) -> Result<SinThetaReport> {
    if l_hat.variant != l_true.variant || l_true.variant == LaplacianVariant::Rw {
        return Err(Error::input("both decompositions must share a symmetric variant"));
    }
    let p = l_true.dim();
    if l_hat.dim() != p {
        return Err(Error::dimension(format!("spectra of size {} and {p}", l_hat.dim())));
    }
    let zeros = l_true.zero_multiplicity(ZERO_EIGENVALUE_TOL);
    if d == 0 || d > zeros || d >= p {
        return Err(Error::input(format!("d = {d} but the true Laplacian has {zeros} zero eigenvalues")));
    }
    let delta = l_true.eigenvalues[d];
    if !(delta > 0.0) {
        return Err(Error::input("true eigen-gap is not positive"));
    }
    let v = l_true.orthonormal_vectors.columns(0, d).into_owned();
    let v_hat = l_hat.orthonormal_vectors.columns(0, d).into_owned();
    let sin_theta_op = sin_theta_distance(&v_hat, &v)?;
    let l_diff_op = operator_norm(&(&l_hat.operator - &l_true.operator))?;
    let bound = l_diff_op / delta;
    let eps_n = l_hat.eigenvalues[d - 1];
    Ok(SinThetaReport {
        d,
        sin_theta_op,
        delta,
        l_diff_op,
        bound,
        eps_n,
        gap_ok: delta > 2.0 * eps_n,
        holds: sin_theta_op <= bound + 1e-12,
    })
}

/// Outcome of a randomized validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub name: String,
    /// Cases that satisfied the assumptions and were checked.
    pub checked: usize,
    /// Generated cases discarded because an assumption failed.
    pub discarded: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` over checked cases.
    pub max_ratio: f64,
}

impl SuiteSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn symmetric_perturbation(w: &DMatrix<f64>, scale: f64, r: &mut impl Rng) -> DMatrix<f64> {
    let p = w.nrows();
    let mut out = w.clone();
    for i in 0..p {
        for j in 0..i {
            let v = (w[(i, j)] + r.random_range(-scale..scale)).clamp(0.0, 1.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn random_dense_graph(r: &mut impl Rng) -> DMatrix<f64> {
    let p = r.random_range(20..=60);
    let density = r.random_range(0.3..=1.0);
    let mut w = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..i {
            if r.random::<f64>() < density {
                let v = r.random_range(0.5..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    w
}

/// Random block-diagonal graph with `d` dense components.
pub fn random_block_graph(p: usize, d: usize, r: &mut impl Rng) -> (DMatrix<f64>, Vec<usize>) {
    let mut labels: Vec<usize> = (0..p).map(|i| i % d).collect();
    for i in (1..p).rev() {
        let j = r.random_range(0..=i);
        labels.swap(i, j);
    }
    let mut w = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..i {
            if labels[i] == labels[j] {
                let v = r.random_range(0.3..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    (w, labels)
}

/// Operator-norm bound on `cases` random (graph, perturbation) pairs that
/// satisfy the degree assumptions.
pub fn laplacian_bound_suite(cases: usize, seed: u64) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary {
        name: "laplacian-bound".into(),
        checked: 0,
        discarded: 0,
        violations: 0,
        max_ratio: 0.0,
    };
    let mut attempt = 0u64;
    while summary.checked < cases {
        let mut r = rng::stream(seed, "theorycheck-laplacian", &[attempt]);
        attempt += 1;
        let w0 = random_dense_graph(&mut r);
        let scale = r.random_range(0.001..0.05);
        let w1 = symmetric_perturbation(&w0, scale, &mut r);
        let report = check_laplacian_bound(&WeightedAdjacency::from_matrix(w1)?, &WeightedAdjacency::from_matrix(w0)?)?;
        if !report.assumptions_met() {
            summary.discarded += 1;
            continue;
        }
        summary.checked += 1;
        if report.rhs > 0.0 {
            summary.max_ratio = summary.max_ratio.max(report.lhs / report.rhs);
        }
        if !report.holds {
            summary.violations += 1;
        }
    }
    Ok(summary)
}

/// Davis-Kahan check on `cases` random block-graph perturbations with
/// `gap_ok`.
pub fn davis_kahan_suite(cases: usize, seed: u64) -> Result<SuiteSummary> {
    let mut summary = SuiteSummary {
        name: "davis-kahan".into(),
        checked: 0,
        discarded: 0,
        violations: 0,
        max_ratio: 0.0,
    };
    let mut attempt = 0u64;
    while summary.checked < cases {
        let mut r = rng::stream(seed, "theorycheck-davis-kahan", &[attempt]);
        attempt += 1;
        let p = r.random_range(20..=60);
        let d = r.random_range(2..=6);
        let (w0, _) = random_block_graph(p, d, &mut r);
        let scale = r.random_range(0.005..0.2);
        let w1 = symmetric_perturbation(&w0, scale, &mut r);
        let true_dec = spectral::build_laplacian(&WeightedAdjacency::from_matrix(w0)?, LaplacianVariant::Sym);
        let hat_dec = spectral::build_laplacian(&WeightedAdjacency::from_matrix(w1)?, LaplacianVariant::Sym);
        let report = check_davis_kahan(&hat_dec, &true_dec, d)?;
        if !report.gap_ok {
            summary.discarded += 1;
            continue;
        }
        summary.checked += 1;
        if report.bound > 0.0 {
            summary.max_ratio = summary.max_ratio.max(report.sin_theta_op / report.bound);
        }
        if !report.holds {
            summary.violations += 1;
        }
    }
    Ok(summary)
}
