//! The actuation-to-shape interface shared by analytical and learned models.

use nalgebra::{DMatrix, DVector};

/// End-to-end actuation-to-shape map `q_a ↦ r(·)`.
///
/// `partials(q, s)` returns the `d × m` matrix whose column `i` is
/// `∂r(s)/∂q_i`. Arc-length arguments are expected in `[0, 1]`.
pub trait ShapeModel: Sync {
    fn actuation_dim(&self) -> usize;

    fn ambient_dim(&self) -> usize;

    fn shape(&self, q: &DVector<f64>, s: f64) -> DVector<f64>;

    fn partials(&self, q: &DVector<f64>, s: f64) -> DMatrix<f64>;

    /// The curve `s ↦ r(s)` at fixed actuation. Models with expensive
    /// actuation-only work override this to do it once.
    fn curve<'a>(&'a self, q: &DVector<f64>) -> Box<dyn Fn(f64) -> DVector<f64> + 'a> {
        let q = q.clone();
        Box::new(move |s| self.shape(&q, s))
    }

    /// Relative tolerance within which `partials` matches finite differences.
    fn partials_tolerance(&self) -> f64 {
        1e-6
    }
}

/// A model that is affine in the actuation: `r(s) = A(s) q + b(s)`.
pub struct LinearShapeModel {
    m: usize,
    d: usize,
    columns: Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    offset: Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
}

impl LinearShapeModel {
    pub fn new<A, B>(m: usize, d: usize, columns: A, offset: B) -> Self
    where
        A: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        B: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self { m, d, columns: Box::new(columns), offset: Box::new(offset) }
    }
}

impl ShapeModel for LinearShapeModel {
    fn actuation_dim(&self) -> usize {
        self.m
    }

    fn ambient_dim(&self) -> usize {
        self.d
    }

    fn shape(&self, q: &DVector<f64>, s: f64) -> DVector<f64> {
        (self.columns)(s) * q + (self.offset)(s)
    }

    fn partials(&self, _q: &DVector<f64>, s: f64) -> DMatrix<f64> {
        (self.columns)(s)
    }

    fn partials_tolerance(&self) -> f64 {
        1e-9
    }
}

/// Central finite-difference estimate of `partials`, for validation.
pub fn finite_difference_partials(
    model: &dyn ShapeModel,
    q: &DVector<f64>,
    s: f64,
    h: f64,
) -> DMatrix<f64> {
    let m = model.actuation_dim();
    let mut out = DMatrix::zeros(model.ambient_dim(), m);
    for i in 0..m {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        let col = (model.shape(&qp, s) - model.shape(&qm, s)) / (2.0 * h);
        out.set_column(i, &col);
    }
    out
}
