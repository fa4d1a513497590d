//! Graph Laplacians and the Laplacian embedding.
//!
//! ```text
//! unnormalized   L     = D - W
//! symmetric      L_sym = I - D^{-1/2} W D^{-1/2}
//! random walk    L_rw  = I - D^{-1} W
//! ```
//!
//! Isolated vertices (`d_l = 0`) get a zero row and column in
//! `D^{-1/2} W D^{-1/2}` and a zero diagonal in `L_sym`, so each one is its own
//! component with eigenvalue 0. `L_rw` shares the spectrum of `L_sym`; its
//! eigenvectors are `D^{-1/2} v` for the orthonormal `L_sym` eigenvectors `v`
//! and are therefore not orthonormal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric nonnegative weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    w: DMatrix<f64>,
    names: Vec<String>,
}

impl WeightedAdjacency {
    pub fn new(w: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let p = w.nrows();
        if w.ncols() != p {
            return Err(Error::dimension(format!("adjacency is {}x{}", p, w.ncols())));
        }
        if names.len() != p {
            return Err(Error::dimension(format!("{} names for a {p}-vertex graph", names.len())));
        }
        for i in 0..p {
            if w[(i, i)] != 0.0 {
                return Err(Error::input(format!("adjacency diagonal entry {i} is {}", w[(i, i)])));
            }
            for j in 0..p {
                let v = w[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::input(format!("adjacency entry ({i},{j}) = {v} is not a finite nonnegative weight")));
                }
                if (v - w[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::input(format!("adjacency is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(WeightedAdjacency { w, names })
    }

    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        let names = (1..=w.nrows()).map(|j| format!("X{j}")).collect();
        Self::new(w, names)
    }

    pub(crate) fn new_unchecked(w: DMatrix<f64>, names: Vec<String>) -> Self {
        debug_assert!(Self::new(w.clone(), names.clone()).is_ok());
        WeightedAdjacency { w, names }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.w.row_iter().map(|r| r.sum()).collect()
    }

    /// Reorder vertices: new vertex `i` is old vertex `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.dim();
        assert_eq!(perm.len(), p);
        let w = DMatrix::from_fn(p, p, |i, j| self.w[(perm[i], perm[j])]);
        let names = perm.iter().map(|&i| self.names[i].clone()).collect();
        WeightedAdjacency { w, names }
    }

    /// Number of connected components of the support of `W` (union-find).
    pub fn connected_components(&self) -> usize {
        let p = self.dim();
        let mut parent: Vec<usize> = (0..p).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut components = p;
        for i in 0..p {
            for j in 0..i {
                if self.w[(i, j)] > 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                        components -= 1;
                    }
                }
            }
        }
        components
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianVariant {
    Unnormalized,
    #[default]
    Sym,
    Rw,
}

impl std::fmt::Display for LaplacianVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LaplacianVariant::Unnormalized => "unnormalized",
            LaplacianVariant::Sym => "sym",
            LaplacianVariant::Rw => "rw",
        })
    }
}

impl std::str::FromStr for LaplacianVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unnormalized" | "l" => Ok(LaplacianVariant::Unnormalized),
            "sym" => Ok(LaplacianVariant::Sym),
            "rw" => Ok(LaplacianVariant::Rw),
            other => Err(Error::config(format!("unknown Laplacian variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub variant: LaplacianVariant,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns match `eigenvalues`. For `Rw` these are `D^{-1/2} v`.
    pub eigenvectors: DMatrix<f64>,
    /// Orthonormal eigenvectors of [`SpectralDecomposition::operator`]; equal
    /// to `eigenvectors` except for `Rw`.
    pub orthonormal_vectors: DMatrix<f64>,
    pub degrees: Vec<f64>,
    /// The symmetric matrix that was diagonalized: `L` for `Unnormalized`,
    /// `L_sym` for `Sym` and `Rw`.
    pub operator: DMatrix<f64>,
    pub names: Vec<String>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Count of eigenvalues at or below `tol`.
    pub fn zero_multiplicity(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&v| v <= tol).count()
    }

    /// The random-walk operator `I - D^{-1} W` (not symmetric).
    pub fn random_walk_operator(&self) -> DMatrix<f64> {
        let p = self.dim();
        let sq: Vec<f64> = self.degrees.iter().map(|&d| if d > 0.0 { d.sqrt() } else { 1.0 }).collect();
        // L_rw = D^{-1/2} L_sym D^{1/2}
        DMatrix::from_fn(p, p, |i, j| self.operator[(i, j)] * sq[j] / sq[i])
    }
}

/// Laplacian matrix of the requested variant; `Rw` returns the symmetric
/// conjugate `L_sym`.
pub fn laplacian_matrix(w: &WeightedAdjacency, variant: LaplacianVariant) -> DMatrix<f64> {
    let p = w.dim();
    let d = w.degrees();
    match variant {
        LaplacianVariant::Unnormalized => DMatrix::from_fn(p, p, |i, j| if i == j { d[i] } else { -w.weight(i, j) }),
        LaplacianVariant::Sym | LaplacianVariant::Rw => {
            let inv_sqrt: Vec<f64> = d.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 }).collect();
            DMatrix::from_fn(p, p, |i, j| {
                let a = inv_sqrt[i] * w.weight(i, j) * inv_sqrt[j];
                if i == j {
                    if d[i] > 0.0 {
                        1.0 - a
                    } else {
                        0.0
                    }
                } else {
                    -a
                }
            })
        }
    }
}

/// Full eigendecomposition, eigenvalues ascending, eigenvector signs fixed so
/// each column's largest-magnitude entry is nonnegative.
pub fn build_laplacian(w: &WeightedAdjacency, variant: LaplacianVariant) -> SpectralDecomposition {
    let operator = laplacian_matrix(w, variant);
    let degrees = w.degrees();
    let (eigenvalues, mut vectors) = linalg::sym_eigen_sorted(&operator);
    linalg::canonicalize_signs(&mut vectors);
    let eigenvectors = if variant == LaplacianVariant::Rw {
        let mut v = vectors.clone();
        for (i, &d) in degrees.iter().enumerate() {
            if d > 0.0 {
                let s = 1.0 / d.sqrt();
                v.row_mut(i).scale_mut(s);
            }
        }
        linalg::canonicalize_signs(&mut v);
        v
    } else {
        vectors.clone()
    };
    SpectralDecomposition {
        variant,
        eigenvalues,
        eigenvectors,
        orthonormal_vectors: vectors,
        degrees,
        operator,
        names: w.names().to_vec(),
    }
}

/// Default cap on the embedding dimension, `ceil(p / 2)`.
pub fn default_max_k(p: usize) -> usize {
    p.div_ceil(2).max(1)
}

/// Embedding dimension from the spectrum.
///
/// Every Laplacian has at least one zero eigenvalue, so a single eigenvalue at
/// or below `eps_abs` says nothing about cluster structure. When two or more
/// eigenvalues are `<= eps_abs` their count is returned (capped at `max_k`).
/// Otherwise the largest gap `lambda_{i+1} - lambda_i` over `2 <= i <= max_k`
/// decides, ties going to the smallest `i`. `i = 1` is not a candidate: a
/// one-column embedding is the degree vector and cannot separate clusters.
/// If no gap in that range exceeds `eps_abs` the spectrum is flat and 1 is
/// returned.
pub fn choose_embedding_dimension(decomp: &SpectralDecomposition, eps_abs: f64, max_k: usize) -> usize {
    choose_dimension_from_spectrum(&decomp.eigenvalues, eps_abs, max_k)
}

pub fn choose_dimension_from_spectrum(eigenvalues: &[f64], eps_abs: f64, max_k: usize) -> usize {
    let p = eigenvalues.len();
    let max_k = max_k.clamp(1, p.max(1));
    let zeros = eigenvalues.iter().filter(|&&v| v <= eps_abs).count();
    if zeros >= 2 {
        return zeros.min(max_k);
    }
    let mut best = 1usize;
    let mut best_gap = eps_abs;
    for i in 2..=max_k.min(p.saturating_sub(1)) {
        let gap = eigenvalues[i] - eigenvalues[i - 1];
        if gap > best_gap {
            best_gap = gap;
            best = i;
        }
    }
    best
}

/// Rows are the embedded points `(v_{l,1}, ..., v_{l,K})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub y: DMatrix<f64>,
    pub variant: LaplacianVariant,
    pub k_n: usize,
    pub row_normalized: bool,
    pub names: Vec<String>,
}

impl Embedding {
    pub fn from_points(y: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != y.nrows() {
            return Err(Error::dimension(format!("{} names for {} points", names.len(), y.nrows())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("embedding has non-finite entries"));
        }
        let k_n = y.ncols();
        Ok(Embedding {
            y,
            variant: LaplacianVariant::Sym,
            k_n,
            row_normalized: false,
            names,
        })
    }

    pub fn n_points(&self) -> usize {
        self.y.nrows()
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn point(&self, l: usize) -> Vec<f64> {
        self.y.row(l).iter().copied().collect()
    }

    /// Scale each row to unit Euclidean norm; zero rows are left at zero.
    pub fn row_normalized(&self) -> Embedding {
        let mut y = self.y.clone();
        for mut row in y.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        Embedding {
            y,
            row_normalized: true,
            ..self.clone()
        }
    }

    /// Zero-pad (or keep) to `dim` columns.
    pub fn padded(&self, dim: usize) -> Embedding {
        assert!(dim >= self.dim());
        let mut y = DMatrix::zeros(self.n_points(), dim);
        y.view_mut((0, 0), (self.n_points(), self.dim())).copy_from(&self.y);
        Embedding { y, ..self.clone() }
    }
}

/// Embed each vertex as the row of the first `k_n` eigenvector columns.
pub fn embed(decomp: &SpectralDecomposition, k_n: usize) -> Result<Embedding> {
    let p = decomp.dim();
    if k_n == 0 || k_n > p {
        return Err(Error::input(format!("embedding dimension {k_n} outside 1..={p}")));
    }
    Ok(Embedding {
        y: decomp.eigenvectors.columns(0, k_n).into_owned(),
        variant: decomp.variant,
        k_n,
        row_normalized: false,
        names: decomp.names.clone(),
    })
}

/// Spectral stage settings used by the pipeline and benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub variant: LaplacianVariant,
    pub eps_abs: f64,
    /// `None` means `ceil(p / 2)`.
    pub max_k: Option<usize>,
    /// Scale embedded points to unit length before clustering.
    pub normalize_rows: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            variant: LaplacianVariant::Sym,
            eps_abs: 1e-6,
            max_k: None,
            normalize_rows: true,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_abs > 0.0) {
            return Err(Error::config(format!("eps_abs must be positive, got {}", self.eps_abs)));
        }
        if self.max_k == Some(0) {
            return Err(Error::config("max_k must be >= 1"));
        }
        Ok(())
    }

    /// Decompose, choose `K_n`, embed and optionally row-normalize.
    pub fn run(&self, w: &WeightedAdjacency) -> (SpectralDecomposition, Embedding) {
        let decomp = build_laplacian(w, self.variant);
        let max_k = self.max_k.unwrap_or_else(|| default_max_k(w.dim()));
        let k_n = choose_embedding_dimension(&decomp, self.eps_abs, max_k);
        let emb = embed(&decomp, k_n).expect("chosen dimension is within 1..=p");
        let emb = if self.normalize_rows { emb.row_normalized() } else { emb };
        (decomp, emb)
    }

    /// Embedding with a fixed dimension (used by the k-means baseline).
    pub fn run_fixed(&self, w: &WeightedAdjacency, k_n: usize) -> Result<Embedding> {
        let decomp = build_laplacian(w, self.variant);
        let emb = embed(&decomp, k_n.min(w.dim()))?;
        Ok(if self.normalize_rows { emb.row_normalized() } else { emb })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_graph(sizes: &[usize]) -> WeightedAdjacency {
        let p: usize = sizes.iter().sum();
        let mut w = DMatrix::zeros(p, p);
        let mut start = 0;
        for (b, &s) in sizes.iter().enumerate() {
            for i in start..start + s {
                for j in start..start + s {
                    if i != j {
                        w[(i, j)] = 0.3 + 0.1 * ((i + j + b) % 5) as f64;
                    }
                }
            }
            start += s;
        }
        WeightedAdjacency::from_matrix(w).unwrap()
    }

    #[test]
    fn adjacency_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(WeightedAdjacency::from_matrix(asym).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(WeightedAdjacency::from_matrix(neg).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(WeightedAdjacency::from_matrix(diag).is_err());
    }

    #[test]
    fn ten_vertex_three_components() {
        let w = block_graph(&[4, 3, 3]);
        assert_eq!(w.connected_components(), 3);
        for variant in [LaplacianVariant::Unnormalized, LaplacianVariant::Sym, LaplacianVariant::Rw] {
            let d = build_laplacian(&w, variant);
            assert_eq!(d.zero_multiplicity(1e-8), 3, "{variant}");
            assert!(d.eigenvalues[0] >= -1e-8);
        }
    }

    #[test]
    fn eighteen_vertex_six_components() {
        let w = block_graph(&[3, 3, 3, 3, 3, 3]);
        let d = build_laplacian(&w, LaplacianVariant::Sym);
        assert_eq!(d.zero_multiplicity(1e-8), 6);
    }

    #[test]
    fn complete_graph_spectrum() {
        let p = 5;
        let w = DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { 1.0 });
        let d = build_laplacian(&WeightedAdjacency::from_matrix(w).unwrap(), LaplacianVariant::Sym);
        assert!(d.eigenvalues[0].abs() < 1e-12);
        for &v in &d.eigenvalues[1..] {
            assert!((v - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_vertex_is_its_own_component() {
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        w[(1, 2)] = 0.5;
        w[(2, 1)] = 0.5;
        let w = WeightedAdjacency::from_matrix(w).unwrap();
        let d = build_laplacian(&w, LaplacianVariant::Sym);
        assert_eq!(d.operator[(3, 3)], 0.0);
        assert_eq!(d.zero_multiplicity(1e-8), 2);
        assert!(d.eigenvectors.iter().all(|v| v.is_finite()));
        let rw = build_laplacian(&w, LaplacianVariant::Rw);
        assert!(rw.eigenvectors.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rw_vectors_are_eigenvectors_of_rw_operator() {
        let w = block_graph(&[3, 4]);
        let d = build_laplacian(&w, LaplacianVariant::Rw);
        let lrw = d.random_walk_operator();
        for (i, &lam) in d.eigenvalues.iter().enumerate() {
            let v = d.eigenvectors.column(i);
            let resid = &lrw * v - v * lam;
            assert!(resid.norm() < 1e-10);
        }
    }

    #[test]
    fn dimension_rule_examples() {
        let mut spec = vec![0.0, 0.0, 0.0, 0.9, 1.0, 1.1];
        assert_eq!(choose_dimension_from_spectrum(&spec, 1e-6, 3), 3);
        spec = vec![0.02, 0.03, 0.04, 0.9, 1.0];
        assert_eq!(choose_dimension_from_spectrum(&spec, 1e-6, 4), 3);
        spec = vec![0.7; 6];
        assert_eq!(choose_dimension_from_spectrum(&spec, 1e-6, 3), 1);
        // single structural zero: the gap after the second eigenvalue wins
        spec = vec![0.0, 0.01, 0.8, 0.85, 0.9];
        assert_eq!(choose_dimension_from_spectrum(&spec, 1e-6, 3), 2);
        // a large first gap alone does not give a one-dimensional embedding
        spec = vec![0.0, 0.3, 0.35, 0.5, 0.52];
        assert_eq!(choose_dimension_from_spectrum(&spec, 1e-6, 4), 3);
        // connected graph with a flat remaining spectrum
        spec = vec![0.0, 1.25, 1.25, 1.25, 1.25];
        assert_eq!(choose_dimension_from_spectrum(&spec, 1e-6, 3), 1);
        assert_eq!(choose_dimension_from_spectrum(&[0.0], 1e-6, 1), 1);
    }

    #[test]
    fn exhaustive_gap_scan_oracle() {
        // oracle: scan every admissible i directly
        let spec = [0.02, 0.03, 0.04, 0.9, 1.0];
        let max_k = 4;
        let oracle = (2..=max_k)
            .max_by(|&a, &b| {
                let ga = spec[a] - spec[a - 1];
                let gb = spec[b] - spec[b - 1];
                ga.partial_cmp(&gb).unwrap().then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(oracle, 3);
        assert_eq!(choose_dimension_from_spectrum(&spec, 1e-6, max_k), oracle);
    }

    #[test]
    fn block_rows_identical_after_normalization() {
        let w = block_graph(&[4, 3, 3]);
        let d = build_laplacian(&w, LaplacianVariant::Sym);
        let emb = embed(&d, 3).unwrap().row_normalized();
        let comps: [&[usize]; 3] = [&[0, 1, 2, 3], &[4, 5, 6], &[7, 8, 9]];
        for comp in comps {
            for &i in &comp[1..] {
                let diff = (emb.y.row(i) - emb.y.row(comp[0])).norm();
                assert!(diff < 1e-8, "{diff}");
            }
        }
        // distinct components land on orthogonal unit rows
        let dot = emb.y.row(0).dot(&emb.y.row(4));
        assert!(dot.abs() < 1e-8);
    }

    #[test]
    fn full_embedding_is_orthonormal() {
        let w = block_graph(&[3, 2]);
        let d = build_laplacian(&w, LaplacianVariant::Sym);
        let emb = embed(&d, 5).unwrap();
        let gram = emb.y.transpose() * &emb.y;
        assert!((gram - DMatrix::identity(5, 5)).abs().max() < 1e-10);
        assert!(embed(&d, 0).is_err());
        assert!(embed(&d, 6).is_err());
    }

    #[test]
    fn permutation_equivariance_with_simple_spectrum() {
        let p = 6;
        let w = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                0.0
            } else {
                0.1 + ((i * 7 + j * 7 + i * j) % 11) as f64 / 10.0
            }
        });
        let w = WeightedAdjacency::from_matrix(w).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let a = embed(&build_laplacian(&w, LaplacianVariant::Sym), 3).unwrap();
        let b = embed(&build_laplacian(&w.permuted(&perm), LaplacianVariant::Sym), 3).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            assert!((b.y.row(i) - a.y.row(src)).norm() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let w = block_graph(&[3, 3, 2]);
        let a = build_laplacian(&w, LaplacianVariant::Sym);
        let b = build_laplacian(&w, LaplacianVariant::Sym);
        assert_eq!(a, b);
    }
}
