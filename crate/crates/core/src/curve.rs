//! Sampled centerlines on the normalized arc-length grid `s ∈ [0, 1]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// How values between grid nodes are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Natural cubic spline, per coordinate.
    #[default]
    Cubic,
    /// Piecewise linear; kept for debugging.
    Linear,
}

/// A space curve sampled on a uniform grid over `[0, 1]`.
///
/// Rows of `values` are points; row `k` sits at `s_k = k / (n_s - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    values: DMatrix<f64>,
    moments: DMatrix<f64>,
    interpolation: Interpolation,
}

/// Grid coordinate of node `k` on an `n`-node uniform grid.
#[inline]
pub fn grid_point(k: usize, n: usize) -> f64 {
    k as f64 / (n - 1) as f64
}

/// The uniform grid with `n` nodes.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| grid_point(k, n)).collect()
}

impl Centerline {
    /// Builds a cubic-interpolated centerline from an `n_s × d` matrix.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        Self::with_interpolation(values, Interpolation::Cubic)
    }

    pub fn with_interpolation(values: DMatrix<f64>, interpolation: Interpolation) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a centerline needs at least 2 nodes, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidArgument("a centerline needs d >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite centerline value".into()));
        }
        let moments = match interpolation {
            Interpolation::Cubic => natural_moments(&values),
            Interpolation::Linear => DMatrix::zeros(values.nrows(), values.ncols()),
        };
        Ok(Self { values, moments, interpolation })
    }

    /// Samples `f` at `n_s` uniform nodes.
    pub fn from_fn<F>(n_s: usize, d: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> DVector<f64>,
    {
        if n_s < 2 {
            return Err(Error::InvalidArgument(format!("n_s must be >= 2, got {n_s}")));
        }
        let mut values = DMatrix::zeros(n_s, d);
        for k in 0..n_s {
            let p = f(grid_point(k, n_s));
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            values.row_mut(k).copy_from(&p.transpose());
        }
        Self::new(values)
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn node(&self, k: usize) -> DVector<f64> {
        self.values.row(k).transpose()
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.n_nodes())
    }

    /// Interpolated position at `s`. Grid nodes return the stored row exactly.
    pub fn evaluate(&self, s: f64) -> Result<DVector<f64>> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(s));
        }
        let n = self.n_nodes();
        let intervals = n - 1;
        let i = ((s * intervals as f64).floor() as usize).min(intervals - 1);
        let (s_lo, s_hi) = (grid_point(i, n), grid_point(i + 1, n));
        if s == s_lo {
            return Ok(self.node(i));
        }
        if s == s_hi {
            return Ok(self.node(i + 1));
        }
        let h = 1.0 / intervals as f64;
        let t = (s - s_lo) / h;
        let u = 1.0 - t;
        let mut out = DVector::zeros(self.dim());
        for c in 0..self.dim() {
            let (y0, y1) = (self.values[(i, c)], self.values[(i + 1, c)]);
            let mut v = u * y0 + t * y1;
            if self.interpolation == Interpolation::Cubic {
                let (m0, m1) = (self.moments[(i, c)], self.moments[(i + 1, c)]);
                v += h * h / 6.0 * ((u * u * u - u) * m0 + (t * t * t - t) * m1);
            }
            out[c] = v;
        }
        Ok(out)
    }

    /// Re-samples the curve on a uniform grid with `n_new` nodes.
    pub fn resample(&self, n_new: usize) -> Result<Centerline> {
        if n_new < 2 {
            return Err(Error::InvalidArgument(format!("n_new must be >= 2, got {n_new}")));
        }
        let mut values = DMatrix::zeros(n_new, self.dim());
        for k in 0..n_new {
            let p = self.evaluate(grid_point(k, n_new))?;
            values.row_mut(k).copy_from(&p.transpose());
        }
        Self::with_interpolation(values, self.interpolation)
    }

    /// Polyline length through the stored nodes.
    pub fn polyline_length(&self) -> f64 {
        (1..self.n_nodes())
            .map(|k| (self.values.row(k) - self.values.row(k - 1)).norm())
            .sum()
    }
}

/// Second-derivative values of the natural cubic spline on a uniform grid
/// (Thomas algorithm on the `1-4-1` system, zero moments at both ends).
fn natural_moments(values: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.nrows();
    let d = values.ncols();
    let mut moments = DMatrix::zeros(n, d);
    if n < 3 {
        return moments;
    }
    let h = 1.0 / (n - 1) as f64;
    let interior = n - 2;
    let mut c_prime = vec![0.0; interior];
    let mut d_prime = vec![0.0; interior];
    for col in 0..d {
        for k in 0..interior {
            let i = k + 1;
            let rhs = 6.0 / (h * h)
                * (values[(i + 1, col)] - 2.0 * values[(i, col)] + values[(i - 1, col)]);
            if k == 0 {
                c_prime[0] = 1.0 / 4.0;
                d_prime[0] = rhs / 4.0;
            } else {
                let denom = 4.0 - c_prime[k - 1];
                c_prime[k] = 1.0 / denom;
                d_prime[k] = (rhs - d_prime[k - 1]) / denom;
            }
        }
        let mut next = 0.0;
        for k in (0..interior).rev() {
            let m = d_prime[k] - c_prime[k] * next;
            moments[(k + 1, col)] = m;
            next = m;
        }
    }
    moments
}
