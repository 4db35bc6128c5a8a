//! Quasi-static three-fiber active filament under gravity.
//!
//! The rod is clamped at `s = 0` with `d₃` along gravity and free at
//! `s = 1`. Fiber activations set the intrinsic curvature and stretch;
//! gravity deflects the rod elastically away from that intrinsic shape.

mod bvp;
mod params;
mod rhs;

pub use bvp::{base_frame, shape_partials, solve_bvp, solve_bvp_with, BvpSolution, SolverOptions, SUBSTEPS};
pub use params::{intrinsic_strains, ActivationMap, RodParams};
pub use rhs::{rod_rhs, RodState};

use nalgebra::{DMatrix, DVector};

use crate::model::ShapeModel;

/// The rod solver as a [`ShapeModel`]; partials by central differences.
///
/// Every call runs full boundary-value solves, so this is meant for
/// validation rather than the control loop. Panics if a solve fails.
#[derive(Debug, Clone)]
pub struct RodModel {
    pub params: RodParams,
    pub n_s: usize,
    pub tol: f64,
    pub fd_step: f64,
}

impl RodModel {
    pub fn new(params: RodParams) -> Self {
        Self { params, n_s: 100, tol: 1e-10, fd_step: 1e-4 }
    }
}

impl ShapeModel for RodModel {
    fn actuation_dim(&self) -> usize {
        3
    }

    fn ambient_dim(&self) -> usize {
        3
    }

    fn shape(&self, q: &DVector<f64>, s: f64) -> DVector<f64> {
        self.curve(q)(s)
    }

    fn partials(&self, q: &DVector<f64>, s: f64) -> DMatrix<f64> {
        let cols = shape_partials(&self.params, q, self.n_s, self.tol, self.fd_step).expect("rod solve failed");
        let mut out = DMatrix::zeros(3, 3);
        for (i, c) in cols.into_iter().enumerate() {
            let line = crate::curve::Centerline::new(c).expect("finite partials");
            out.set_column(i, &line.evaluate(s).expect("s in [0, 1]"));
        }
        out
    }

    fn curve<'a>(&'a self, q: &DVector<f64>) -> Box<dyn Fn(f64) -> DVector<f64> + 'a> {
        let sol = solve_bvp(&self.params, q, self.n_s, self.tol).expect("rod solve failed");
        Box::new(move |s| sol.centerline.evaluate(s).expect("s in [0, 1]"))
    }

    fn partials_tolerance(&self) -> f64 {
        1e-4
    }
}
