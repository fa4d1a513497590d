use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n` samples by `p` variables with variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::dimension(format!(
                "{} variable names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::input(format!("duplicate variable name `{name}`")));
            }
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::input(format!(
                        "non-finite value at row {} column `{}`",
                        i + 1,
                        names[j]
                    )));
                }
            }
        }
        Ok(DataMatrix { names, values })
    }

    /// Names default to `X1..Xp`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("X{j}")).collect();
        Self::new(names, values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    /// Copy with every column mean-centered.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut out = self.values.clone();
        for mut col in out.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        out
    }
}

/// Column-standardized view used by the regressions: `z_j = (x_j - mean_j) / sd_j`
/// with population standard deviation. Constant columns keep scale 1 and are
/// flagged.
#[derive(Debug, Clone)]
pub(crate) struct Standardized {
    pub z: DMatrix<f64>,
    pub scale: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardized {
    pub fn from_data(data: &DataMatrix) -> Self {
        let mut z = data.centered();
        let n = z.nrows() as f64;
        let mut scale = Vec::with_capacity(z.ncols());
        let mut constant = Vec::with_capacity(z.ncols());
        for mut col in z.column_iter_mut() {
            let sd = (col.norm_squared() / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                col /= sd;
                scale.push(sd);
                constant.push(false);
            } else {
                col.fill(0.0);
                scale.push(1.0);
                constant.push(true);
            }
        }
        Standardized { z, scale, constant }
    }

    /// Gram matrix `Z^T Z`, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let g = self.z.transpose() * &self.z;
        let p = g.nrows();
        (0..p * p).map(|k| g[(k / p, k % p)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(DataMatrix::new(vec!["a".into(), "a".into()], m.clone()).is_err());
        let mut bad = m.clone();
        bad[(1, 0)] = f64::NAN;
        let err = DataMatrix::new(vec!["a".into(), "b".into()], bad).unwrap_err();
        assert!(err.to_string().contains("row 2"));
        assert!(err.to_string().contains("`a`"));
    }

    #[test]
    fn standardization_unit_variance() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 6.0, 5.0]);
        let d = DataMatrix::from_matrix(m).unwrap();
        let s = Standardized::from_data(&d);
        let c0 = s.z.column(0);
        assert!(c0.sum().abs() < 1e-12);
        assert!((c0.norm_squared() / 4.0 - 1.0).abs() < 1e-12);
        assert!(s.constant[1]);
        assert!(!s.constant[0]);
        assert_eq!(s.z.column(1).norm(), 0.0);
    }
}
