#![allow(dead_code)]

use bngc::spectral::{self, LaplacianVariant, WeightedAdjacency};
use bngc::DataMatrix;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random graph on at most 60 vertices whose vertices fall into 1-8 groups;
/// edges only within groups, with random density so groups may split further.
pub fn random_block_graph(r: &mut impl Rng) -> WeightedAdjacency {
    let p = r.random_range(1..=60);
    let groups = r.random_range(1..=8usize).min(p);
    let labels: Vec<usize> = (0..p).map(|_| r.random_range(0..groups)).collect();
    let density = r.random_range(0.05..=1.0);
    let mut w = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..i {
            if labels[i] == labels[j] && r.random::<f64>() < density {
                let v = r.random_range(0.05..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    WeightedAdjacency::from_matrix(w).unwrap()
}

/// Component count of the support of `w`, by union-find.
pub fn union_find_components(w: &WeightedAdjacency) -> usize {
    let p = w.dim();
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..p {
        for j in 0..i {
            if w.weight(i, j) > 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    (0..p).filter(|&i| find(&mut parent, i) == i).count()
}

/// Zero-eigenvalue multiplicity of L, L_sym and L_rw at threshold `tol`.
pub fn zero_multiplicities(w: &WeightedAdjacency, tol: f64) -> [usize; 3] {
    [LaplacianVariant::Unnormalized, LaplacianVariant::Sym, LaplacianVariant::Rw]
        .map(|v| spectral::build_laplacian(w, v).zero_multiplicity(tol))
}

/// `n` draws from `N(0, omega^{-1})`.
pub fn sample_from_precision(omega: &DMatrix<f64>, n: usize, r: &mut impl Rng) -> DataMatrix {
    let p = omega.nrows();
    let sigma = omega.clone().try_inverse().unwrap();
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let l = sigma.cholesky().unwrap().l();
    let z = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(r));
    DataMatrix::from_matrix((l * z).transpose()).unwrap()
}

/// F1 of the signed support of `est` (entries above `threshold` in absolute
/// value) against the nonzero pattern of `truth`, over unordered pairs.
pub fn signed_support_f1(est: &DMatrix<f64>, truth: &DMatrix<f64>, threshold: f64) -> f64 {
    let p = truth.nrows();
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for i in 0..p {
        for j in 0..i {
            let t = truth[(i, j)];
            let e = est[(i, j)];
            let predicted = e.abs() > threshold;
            let actual = t != 0.0;
            match (predicted, actual) {
                (true, true) if e.signum() == t.signum() => tp += 1,
                (true, true) => {
                    fp += 1;
                    fneg += 1;
                }
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
