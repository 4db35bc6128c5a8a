//! Planar constant-curvature segment: the one-actuator closed-form model.
//!
//! The actuation is the curvature `q` itself; the centerline is the arc
//! `r(s) = L (sin(sq), 1 - cos(sq)) / q` with normalized arc length `s`.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::model::ShapeModel;

/// Below this curvature magnitude the shape switches to its Taylor form.
pub const SERIES_THRESHOLD: f64 = 1e-4;

/// Below this bending angle `|s q|` the Jacobian uses its power series.
const JACOBIAN_SERIES_ANGLE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcParams {
    pub length: f64,
    pub curvature: f64,
}

impl CcParams {
    pub fn new(length: f64, curvature: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!("length must be positive, got {length}")));
        }
        if !curvature.is_finite() {
            return Err(Error::InvalidArgument("curvature must be finite".into()));
        }
        Ok(Self { length, curvature })
    }
}

/// Centerline position at `s`.
pub fn cc_shape(p: &CcParams, s: f64) -> Vector2<f64> {
    let (l, q) = (p.length, p.curvature);
    if q.abs() < SERIES_THRESHOLD {
        let s2 = s * s;
        Vector2::new(l * (s - s2 * s * q * q / 6.0), l * (s2 * q / 2.0 - s2 * s2 * q * q * q / 24.0))
    } else {
        let a = s * q;
        Vector2::new(l * a.sin() / q, l * (1.0 - a.cos()) / q)
    }
}

/// `∂r(s)/∂q`.
///
/// Written as `L s² g(sq)` so the small-angle branch is a power series in
/// the bending angle; the closed form loses all digits to cancellation
/// as `sq → 0`.
pub fn cc_jacobian(p: &CcParams, s: f64) -> Vector2<f64> {
    let (l, q) = (p.length, p.curvature);
    let x = s * q;
    let (gx, gy) = if x.abs() < JACOBIAN_SERIES_ANGLE {
        let x2 = x * x;
        (
            x * (-1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 * (-1.0 / 840.0 + x2 * (1.0 / 45360.0)))),
            0.5 + x2 * (-1.0 / 8.0 + x2 * (1.0 / 144.0 + x2 * (-1.0 / 5760.0 + x2 * (1.0 / 403200.0)))),
        )
    } else {
        let (sin, cos) = x.sin_cos();
        ((x * cos - sin) / (x * x), ((cos - 1.0) + x * sin) / (x * x))
    };
    Vector2::new(l * s * s * gx, l * s * s * gy)
}

/// The constant-curvature segment as a [`ShapeModel`] with `m = 1`, `d = 2`.
#[derive(Debug, Clone, Copy)]
pub struct CcModel {
    pub length: f64,
}

impl CcModel {
    pub fn new(length: f64) -> Result<Self> {
        CcParams::new(length, 0.0)?;
        Ok(Self { length })
    }

    fn params(&self, q: &DVector<f64>) -> CcParams {
        assert_eq!(q.len(), 1, "constant-curvature model has one actuator");
        CcParams { length: self.length, curvature: q[0] }
    }
}

impl ShapeModel for CcModel {
    fn actuation_dim(&self) -> usize {
        1
    }

    fn ambient_dim(&self) -> usize {
        2
    }

    fn shape(&self, q: &DVector<f64>, s: f64) -> DVector<f64> {
        let r = cc_shape(&self.params(q), s);
        DVector::from_column_slice(r.as_slice())
    }

    fn partials(&self, q: &DVector<f64>, s: f64) -> DMatrix<f64> {
        let j = cc_jacobian(&self.params(q), s);
        DMatrix::from_column_slice(2, 1, j.as_slice())
    }
}
