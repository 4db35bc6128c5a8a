//! Shape-to-task functionals and the composed end-to-end Jacobian.
//!
//! Every task here has a point-evaluation L² gradient, so the composed
//! Jacobian reduces to the model partials at a single body coordinate:
//! `s̄` for the fixed variants, the closest point `s_*` for the others.
//! The closest point is treated as constant when differentiating.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ShapeModel;

pub const DEFAULT_COARSE_SAMPLES: usize = 100;

/// Final bracket width of the golden-section refinement.
const REFINE_WIDTH: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// `r(s̄) - x₀`
    PosFixed,
    /// `r(s_*) - x₀`
    PosOpt,
    /// `½‖r(s̄) - x₀‖²`
    DistFixed,
    /// `min_s ½‖r(s) - x₀‖²`
    DistOpt,
}

impl TaskKind {
    pub fn uses_closest_point(self) -> bool {
        matches!(self, TaskKind::PosOpt | TaskKind::DistOpt)
    }

    pub fn is_distance(self) -> bool {
        matches!(self, TaskKind::DistFixed | TaskKind::DistOpt)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::PosFixed => "pos_fixed",
            TaskKind::PosOpt => "pos_opt",
            TaskKind::DistFixed => "dist_fixed",
            TaskKind::DistOpt => "dist_opt",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos_fixed" => Ok(TaskKind::PosFixed),
            "pos_opt" => Ok(TaskKind::PosOpt),
            "dist_fixed" => Ok(TaskKind::DistFixed),
            "dist_opt" => Ok(TaskKind::DistOpt),
            other => Err(Error::InvalidArgument(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    kind: TaskKind,
    target: DVector<f64>,
    s_bar: f64,
    coarse_samples: usize,
}

impl TaskSpec {
    /// `s_bar` is required for the fixed variants and ignored otherwise.
    pub fn new(kind: TaskKind, target: DVector<f64>, s_bar: Option<f64>) -> Result<Self> {
        if target.is_empty() || target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("target must be a finite, non-empty point".into()));
        }
        let s_bar = match (kind.uses_closest_point(), s_bar) {
            (true, _) => 1.0,
            (false, Some(s)) if (0.0..=1.0).contains(&s) => s,
            (false, Some(s)) => return Err(Error::Domain(s)),
            (false, None) => {
                return Err(Error::InvalidArgument(format!("task {kind} needs a body coordinate s_bar")))
            }
        };
        Ok(Self { kind, target, s_bar, coarse_samples: DEFAULT_COARSE_SAMPLES })
    }

    /// Like [`TaskSpec::new`], but rejects pairings whose Jacobian is not
    /// square for a model with `actuation_dim` actuators.
    pub fn square(
        kind: TaskKind,
        target: DVector<f64>,
        s_bar: Option<f64>,
        actuation_dim: usize,
    ) -> Result<Self> {
        let spec = Self::new(kind, target, s_bar)?;
        spec.check_square(actuation_dim)?;
        Ok(spec)
    }

    pub fn with_coarse_samples(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("closest-point scan needs n_coarse >= 1".into()));
        }
        self.coarse_samples = n;
        Ok(self)
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn s_bar(&self) -> Option<f64> {
        (!self.kind.uses_closest_point()).then_some(self.s_bar)
    }

    pub fn coarse_samples(&self) -> usize {
        self.coarse_samples
    }

    /// Task dimension `p`.
    pub fn dim(&self) -> usize {
        if self.kind.is_distance() {
            1
        } else {
            self.target.len()
        }
    }

    pub fn check_square(&self, actuation_dim: usize) -> Result<()> {
        if self.dim() != actuation_dim {
            return Err(Error::NotSquare { task: self.dim(), actuation: actuation_dim });
        }
        Ok(())
    }

    fn check_model(&self, model: &dyn ShapeModel) -> Result<()> {
        if model.ambient_dim() != self.target.len() {
            return Err(Error::DimensionMismatch { expected: model.ambient_dim(), got: self.target.len() });
        }
        Ok(())
    }
}

/// Value, Jacobian and evaluation coordinate of a task at one actuation.
#[derive(Debug, Clone)]
pub struct TaskEvaluation {
    pub value: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// `s̄` or `s_*`.
    pub s_eval: f64,
    pub point: DVector<f64>,
}

/// Closest body coordinate to `target` on `curve`.
///
/// Coarse scan over `n_coarse + 1` uniform samples, then golden-section
/// search on the bracketing interval. Ties go to the smaller `s`.
pub fn closest_point_on<F>(curve: F, target: &DVector<f64>, n_coarse: usize) -> f64
where
    F: Fn(f64) -> DVector<f64>,
{
    let n_coarse = n_coarse.max(1);
    let cost = |s: f64| 0.5 * (curve(s) - target).norm_squared();
    let mut best_j = 0;
    let mut best = f64::INFINITY;
    for j in 0..=n_coarse {
        let c = cost(j as f64 / n_coarse as f64);
        if c < best {
            best = c;
            best_j = j;
        }
    }
    let lo = best_j.saturating_sub(1) as f64 / n_coarse as f64;
    let hi = (best_j + 1).min(n_coarse) as f64 / n_coarse as f64;
    let s_grid = best_j as f64 / n_coarse as f64;
    let (s_ref, c_ref) = golden_section(&cost, lo, hi, REFINE_WIDTH);
    if c_ref < best || (c_ref == best && s_ref < s_grid) {
        s_ref
    } else {
        s_grid
    }
}

/// Minimizes `f` over `[lo, hi]`; returns the best point seen and its value.
fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, width: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > width {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let candidates = [(lo, f(lo)), (x1, f1), (x2, f2), (hi, f(hi))];
    candidates
        .into_iter()
        .fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
}

/// Closest body coordinate of the model's shape at `q` to `target`.
pub fn closest_point(model: &dyn ShapeModel, q: &DVector<f64>, target: &DVector<f64>, n_coarse: usize) -> f64 {
    let curve = model.curve(q);
    closest_point_on(curve, target, n_coarse)
}

fn evaluation_coordinate(spec: &TaskSpec, model: &dyn ShapeModel, q: &DVector<f64>) -> f64 {
    if spec.kind.uses_closest_point() {
        closest_point(model, q, &spec.target, spec.coarse_samples)
    } else {
        spec.s_bar
    }
}

fn value_at(spec: &TaskSpec, point: &DVector<f64>) -> DVector<f64> {
    let diff = point - &spec.target;
    if spec.kind.is_distance() {
        DVector::from_element(1, 0.5 * diff.norm_squared())
    } else {
        diff
    }
}

/// Task output `x = Φ(Λ(q))`.
pub fn task_value(spec: &TaskSpec, model: &dyn ShapeModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    spec.check_model(model)?;
    let s = evaluation_coordinate(spec, model, q);
    Ok(value_at(spec, &model.shape(q, s)))
}

/// The `p × m` Jacobian of `q ↦ Φ(Λ(q))`.
pub fn composed_jacobian(spec: &TaskSpec, model: &dyn ShapeModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(evaluate_task(spec, model, q)?.jacobian)
}

/// Value and Jacobian sharing a single closest-point search.
pub fn evaluate_task(spec: &TaskSpec, model: &dyn ShapeModel, q: &DVector<f64>) -> Result<TaskEvaluation> {
    spec.check_model(model)?;
    if q.len() != model.actuation_dim() {
        return Err(Error::DimensionMismatch { expected: model.actuation_dim(), got: q.len() });
    }
    let s = evaluation_coordinate(spec, model, q);
    let point = model.shape(q, s);
    let partials = model.partials(q, s);
    let value = value_at(spec, &point);
    let jacobian = if spec.kind.is_distance() {
        let row = (&point - &spec.target).transpose() * &partials;
        DMatrix::from_row_slice(1, row.len(), row.as_slice())
    } else {
        partials
    };
    Ok(TaskEvaluation { value, jacobian, s_eval: s, point })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc_model::{cc_jacobian, cc_shape, CcModel, CcParams};
    use crate::model::LinearShapeModel;
    use crate::rng::Rng;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn straight() -> LinearShapeModel {
        // r(s) = (s, 0) + q * (0, s²)
        LinearShapeModel::new(
            1,
            2,
            |s| DMatrix::from_column_slice(2, 1, &[0.0, s * s]),
            |s| DVector::from_column_slice(&[s, 0.0]),
        )
    }

    fn fd_jacobian(spec: &TaskSpec, model: &dyn ShapeModel, q: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let p = spec.dim();
        let mut out = DMatrix::zeros(p, q.len());
        for i in 0..q.len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let col = (task_value(spec, model, &qp).unwrap() - task_value(spec, model, &qm).unwrap()) / (2.0 * h);
            out.set_column(i, &col);
        }
        out
    }

    #[test]
    fn closest_point_orthogonal_projection() {
        let s = closest_point(&straight(), &v(&[0.0]), &v(&[0.3, 1.0]), 100);
        assert!((s - 0.3).abs() < 1e-8);
    }

    #[test]
    fn closest_point_on_curve() {
        let model = CcModel::new(1.0).unwrap();
        let q = v(&[2.0]);
        let target = model.shape(&q, 0.7);
        let s = closest_point(&model, &q, &target, 100);
        assert!((s - 0.7).abs() < 1e-7);
        assert!((model.shape(&q, s) - target).norm() < 1e-7);
    }

    #[test]
    fn closest_point_semicircle_vs_dense_grid() {
        let params = CcParams::new(1.0, PI).unwrap();
        let target = v(&[2.0, 0.0]);
        let curve = |s: f64| {
            let r = cc_shape(&params, s);
            v(&[r[0], r[1]])
        };
        let s = closest_point_on(curve, &target, 100);
        let n = 1_000_000;
        let (mut best_s, mut best) = (0.0, f64::INFINITY);
        for j in 0..=n {
            let sj = j as f64 / n as f64;
            let c = (curve(sj) - &target).norm_squared();
            if c < best {
                best = c;
                best_s = sj;
            }
        }
        assert!((s - best_s).abs() < 2e-6, "{s} vs {best_s}");
    }

    #[test]
    fn closest_point_ties_prefer_smaller_s() {
        // Symmetric arc: points s and 1-s are equidistant from the chord midpoint normal.
        let curve = |s: f64| v(&[s, 0.25 - (s - 0.5).powi(2)]);
        let target = v(&[0.5, 10.0]);
        // Single interior minimum at 0.5; now a target equidistant from both ends.
        let s = closest_point_on(curve, &target, 100);
        assert!((s - 0.5).abs() < 1e-7);
        let far = v(&[0.5, -10.0]);
        let s = closest_point_on(curve, &far, 100);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn values_at_reached_target() {
        let model = CcModel::new(1.0).unwrap();
        let q = v(&[1.3]);
        let target = model.shape(&q, 0.4);
        let pos = TaskSpec::new(TaskKind::PosFixed, target.clone(), Some(0.4)).unwrap();
        let dist = TaskSpec::new(TaskKind::DistFixed, target, Some(0.4)).unwrap();
        assert_eq!(task_value(&pos, &model, &q).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(task_value(&dist, &model, &q).unwrap(), v(&[0.0]));
        assert_eq!(composed_jacobian(&dist, &model, &q).unwrap(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn values_on_straight_segment() {
        let target = v(&[0.0, 1.0]);
        let q = v(&[0.0]);
        let pos = TaskSpec::new(TaskKind::PosFixed, target.clone(), Some(1.0)).unwrap();
        let dist = TaskSpec::new(TaskKind::DistFixed, target, Some(1.0)).unwrap();
        assert_eq!(task_value(&pos, &straight(), &q).unwrap(), v(&[1.0, -1.0]));
        assert_eq!(task_value(&dist, &straight(), &q).unwrap(), v(&[1.0]));
    }

    #[test]
    fn opt_distance_never_exceeds_fixed() {
        let model = CcModel::new(1.0).unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let q = v(&[rng.uniform_in(-6.0, 6.0)]);
            let s_bar = rng.uniform();
            let target = v(&[rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)]);
            let fixed = TaskSpec::new(TaskKind::DistFixed, target.clone(), Some(s_bar)).unwrap();
            let opt = TaskSpec::new(TaskKind::DistOpt, target, None).unwrap();
            let a = task_value(&opt, &model, &q).unwrap()[0];
            let b = task_value(&fixed, &model, &q).unwrap()[0];
            assert!(a <= b + 1e-15);
        }
    }

    #[test]
    fn cc_distance_jacobian_matches_closed_form() {
        let model = CcModel::new(1.0).unwrap();
        let q = 2.1;
        let target = v(&[0.3, 0.5]);
        let spec = TaskSpec::new(TaskKind::DistFixed, target.clone(), Some(1.0)).unwrap();
        let j = composed_jacobian(&spec, &model, &v(&[q])).unwrap();
        let params = CcParams::new(1.0, q).unwrap();
        let r = cc_shape(&params, 1.0);
        let expected = cc_jacobian(&params, 1.0).dot(&(r - nalgebra::Vector2::new(0.3, 0.5)));
        assert!((j[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn square_check_rejects_position_task_on_single_actuator() {
        let err = TaskSpec::square(TaskKind::PosFixed, v(&[0.1, 0.2]), Some(1.0), 1).unwrap_err();
        assert!(matches!(err, Error::NotSquare { task: 2, actuation: 1 }));
        assert!(TaskSpec::square(TaskKind::DistOpt, v(&[0.1, 0.2]), None, 1).is_ok());
    }

    #[test]
    fn fixed_tasks_need_s_bar() {
        assert!(TaskSpec::new(TaskKind::PosFixed, v(&[0.0, 0.0]), None).is_err());
        assert!(TaskSpec::new(TaskKind::PosFixed, v(&[0.0, 0.0]), Some(1.2)).is_err());
        let opt = TaskSpec::new(TaskKind::PosOpt, v(&[0.0, 0.0]), Some(0.3)).unwrap();
        assert_eq!(opt.s_bar(), None);
    }

    #[test]
    fn all_variants_match_finite_differences() {
        // Two-actuator planar model with curved partials so every variant is nontrivial.
        let model = LinearShapeModel::new(
            2,
            2,
            |s| DMatrix::from_row_slice(2, 2, &[s * s, -0.3 * s, 0.2 * s.powi(3), s * s]),
            |s| v(&[s, 0.1 * (3.0 * s).sin()]),
        );
        let q = v(&[0.4, -0.2]);
        let target = v(&[0.5, 0.6]);
        for kind in [TaskKind::PosFixed, TaskKind::DistFixed, TaskKind::DistOpt] {
            let spec = TaskSpec::new(kind, target.clone(), Some(0.8)).unwrap();
            let j = composed_jacobian(&spec, &model, &q).unwrap();
            let f = fd_jacobian(&spec, &model, &q, 1e-6);
            let rel = (&j - &f).norm() / j.norm();
            assert!(rel < 1e-5, "{kind}: rel {rel}");
        }
    }

    /// For the closest-point position task the minimizer's motion does not
    /// cancel: the Jacobian is the frozen-`s_*` derivative, and the full
    /// derivative differs from it only along the curve tangent at `s_*`.
    #[test]
    fn pos_opt_jacobian_freezes_closest_point() {
        let model = LinearShapeModel::new(
            2,
            2,
            |s| DMatrix::from_row_slice(2, 2, &[s * s, -0.3 * s, 0.2 * s.powi(3), s * s]),
            |s| v(&[s, 0.1 * (3.0 * s).sin()]),
        );
        let q = v(&[0.4, -0.2]);
        let spec = TaskSpec::new(TaskKind::PosOpt, v(&[0.5, 0.6]), None).unwrap();
        let eval = evaluate_task(&spec, &model, &q).unwrap();
        assert!(eval.s_eval > 0.0 && eval.s_eval < 1.0);
        let frozen = TaskSpec::new(TaskKind::PosFixed, v(&[0.5, 0.6]), Some(eval.s_eval)).unwrap();
        let f = fd_jacobian(&frozen, &model, &q, 1e-6);
        assert!((&eval.jacobian - &f).norm() / f.norm() < 1e-5);

        let full = fd_jacobian(&spec, &model, &q, 1e-6);
        let h = 1e-6;
        let tangent = (model.shape(&q, eval.s_eval + h) - model.shape(&q, eval.s_eval - h)).normalize();
        let normal = v(&[-tangent[1], tangent[0]]);
        let residual = &full - &eval.jacobian;
        assert!((normal.transpose() * &residual).amax() < 1e-5 * residual.norm().max(1.0));
    }

    #[test]
    fn danskin_consistency_on_cc_model() {
        let model = CcModel::new(1.0).unwrap();
        let mut rng = Rng::new(99);
        let mut checked = 0;
        while checked < 100 {
            let q = v(&[rng.uniform_in(0.5, 5.0)]);
            let target = v(&[rng.uniform_in(-0.5, 1.0), rng.uniform_in(-0.2, 1.0)]);
            let spec = TaskSpec::new(TaskKind::DistOpt, target.clone(), None).unwrap();
            let eval = evaluate_task(&spec, &model, &q).unwrap();
            // Keep interior, well-separated minimizers only.
            if eval.s_eval < 0.02 || eval.s_eval > 0.98 || eval.value[0] < 1e-4 {
                continue;
            }
            let curve = model.curve(&q);
            let unique = (0..=200).all(|j| {
                let s = j as f64 / 200.0;
                (s - eval.s_eval).abs() < 0.1 || 0.5 * (curve(s) - &target).norm_squared() > eval.value[0] + 1e-4
            });
            if !unique {
                continue;
            }
            let f = fd_jacobian(&spec, &model, &q, 1e-6);
            let rel = (&eval.jacobian - &f).norm() / eval.jacobian.norm().max(1e-8);
            assert!(rel < 1e-5, "q={} rel={rel}", q[0]);
            checked += 1;
        }
    }

    #[test]
    fn closest_point_is_optimal_over_grid() {
        let model = CcModel::new(1.0).unwrap();
        let mut rng = Rng::new(3);
        for _ in 0..30 {
            let q = v(&[rng.uniform_in(-6.0, 6.0)]);
            let target = v(&[rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)]);
            let s = closest_point(&model, &q, &target, 100);
            let best = (model.shape(&q, s) - &target).norm();
            for j in 0..=1000 {
                let sj = j as f64 / 1000.0;
                assert!(best <= (model.shape(&q, sj) - &target).norm() + 1e-9);
            }
        }
    }

    /// Pos-fixed Jacobian against an L² quadrature with a narrowing Gaussian
    /// kernel centered at s̄, extrapolated to zero width.
    #[test]
    fn dirac_reduction_by_kernel_quadrature() {
        let model = CcModel::new(1.0).unwrap();
        let q = v(&[1.7]);
        let s_bar = 0.6;
        let spec = TaskSpec::new(TaskKind::PosFixed, v(&[0.0, 0.0]), Some(s_bar)).unwrap();
        let j = composed_jacobian(&spec, &model, &q).unwrap();
        let smoothed = |eps: f64| {
            let n = 20_000;
            let h = 1.0 / n as f64;
            let mut acc = DVector::zeros(2);
            let mut mass = 0.0;
            for k in 0..=n {
                let z = k as f64 * h;
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                let kern = (-(z - s_bar).powi(2) / (2.0 * eps * eps)).exp();
                acc += model.partials(&q, z).column(0) * (w * kern * h);
                mass += w * kern * h;
            }
            acc / mass
        };
        // Kernel bias is O(eps²): Richardson on widths eps, eps/2, eps/4.
        let e = 0.02;
        let (a, b, c) = (smoothed(e), smoothed(e / 2.0), smoothed(e / 4.0));
        let r1 = (&b * 4.0 - &a) / 3.0;
        let r2 = (&c * 4.0 - &b) / 3.0;
        let extrap = (&r2 * 16.0 - &r1) / 15.0;
        assert!((extrap - j.column(0)).amax() < 1e-8);
    }
}
