use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric positive definite feedback gain `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(DMatrix<f64>);

impl GainMatrix {
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if !k.is_square() || k.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "gain must be square, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        let scale = k.amax().max(f64::MIN_POSITIVE);
        if (&k - k.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("gain matrix is not symmetric".into()));
        }
        if k.iter().any(|v| !v.is_finite()) || k.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("gain matrix is not positive definite".into()));
        }
        Ok(Self(k))
    }

    pub fn scalar(m: usize, k: f64) -> Result<Self> {
        Self::new(DMatrix::from_diagonal_element(m, m, k))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.0 * c)
    }
}
