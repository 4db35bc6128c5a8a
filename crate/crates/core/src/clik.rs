//! Closed-loop inverse kinematics on a shape model.
//!
//! Each step evaluates the task `x = Φ(Λ(q))` and its Jacobian `J`, solves
//! `J v = K (x̄ − x)` (damped least squares when `λ > 0`) and takes an
//! explicit Euler step `q ← q + dt·v`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::actuation::ActuationBox;
use crate::error::{Error, Result};
use crate::gain::GainMatrix;
use crate::model::ShapeModel;
use crate::plot::{render_svg, Panel, Series};
use crate::tasks::{evaluate_task, TaskEvaluation, TaskSpec};

/// Above this condition number an undamped solve is refused.
pub const SINGULAR_COND: f64 = 1e14;
/// `s_*` moves larger than this between steps are logged.
const S_JUMP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ClikConfig {
    pub gain: GainMatrix,
    pub dt: f64,
    pub t_end: f64,
    /// Desired task value `x̄`.
    pub target: DVector<f64>,
    /// Damped-least-squares `λ`; zero means a plain solve.
    pub damping: f64,
    /// Condition numbers above this are logged.
    pub cond_warn: f64,
    /// Clamp the actuation to this box after every step.
    pub clamp: Option<ActuationBox>,
    /// Record a shape snapshot every this many steps (0 disables).
    pub snapshot_every: usize,
    pub snapshot_nodes: usize,
}

impl ClikConfig {
    /// Defaults: `dt = 1e-3`, `t_end = 1`, `x̄ = 0`, `λ = 1e-6`.
    pub fn new(gain: GainMatrix) -> Self {
        let p = gain.dim();
        Self {
            gain,
            dt: 1e-3,
            t_end: 1.0,
            target: DVector::zeros(p),
            damping: 1e-6,
            cond_warn: 1e8,
            clamp: None,
            snapshot_every: 100,
            snapshot_nodes: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end = {} must be at least dt = {}", self.t_end, self.dt)));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidArgument("damping must be non-negative".into()));
        }
        if self.target.len() != self.gain.dim() {
            return Err(Error::DimensionMismatch { expected: self.gain.dim(), got: self.target.len() });
        }
        if self.snapshot_every > 0 && self.snapshot_nodes < 2 {
            return Err(Error::InvalidArgument("snapshots need at least two nodes".into()));
        }
        Ok(())
    }

    /// `⌊t_end / dt⌋`, tolerant of representation error in the ratio.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt * (1.0 + 1e-12)).floor() as usize
    }
}

/// What one step saw.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Task value at the pre-step actuation.
    pub value: DVector<f64>,
    /// `‖x̄ − x‖`.
    pub error_norm: f64,
    pub cond: f64,
    pub s_eval: f64,
    pub clamped: bool,
}

/// 2-norm condition number; infinite for a rank-deficient matrix.
pub fn condition_number(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `J v = rhs`: damped least squares for `λ > 0`, otherwise a plain LU
/// solve that refuses near-singular `J`.
pub fn solve_velocity(j: &DMatrix<f64>, rhs: &DVector<f64>, damping: f64, cond: f64, step: usize) -> Result<DVector<f64>> {
    if damping > 0.0 {
        let mut normal = j.transpose() * j;
        for i in 0..normal.nrows() {
            normal[(i, i)] += damping;
        }
        let jt_rhs = j.transpose() * rhs;
        return normal
            .cholesky()
            .map(|c| c.solve(&jt_rhs))
            .ok_or(Error::Singular { step, cond });
    }
    if !(cond < SINGULAR_COND) {
        return Err(Error::Singular { step, cond });
    }
    j.clone().lu().solve(rhs).ok_or(Error::Singular { step, cond })
}

fn advance(
    ev: &TaskEvaluation,
    q: &DVector<f64>,
    cfg: &ClikConfig,
    step: usize,
) -> Result<(DVector<f64>, StepDiagnostics)> {
    let error = &cfg.target - &ev.value;
    if error.iter().chain(ev.jacobian.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical { step, what: "task value or Jacobian".into() });
    }
    let cond = condition_number(&ev.jacobian);
    if cond > cfg.cond_warn {
        log::warn!("step {step}: Jacobian condition number {cond:.3e}");
    }
    let rhs = cfg.gain.matrix() * &error;
    let v = solve_velocity(&ev.jacobian, &rhs, cfg.damping, cond, step)?;
    let mut next = q + v * cfg.dt;
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical { step, what: "actuation update".into() });
    }
    let clamped = match &cfg.clamp {
        Some(b) => b.clamp(&mut next),
        None => false,
    };
    if clamped {
        log::debug!("step {step}: actuation clamped to {:?}", next.as_slice());
    }
    let diag = StepDiagnostics { value: ev.value.clone(), error_norm: error.norm(), cond, s_eval: ev.s_eval, clamped };
    Ok((next, diag))
}

fn check(spec: &TaskSpec, model: &dyn ShapeModel, q: &DVector<f64>, cfg: &ClikConfig) -> Result<()> {
    cfg.validate()?;
    spec.check_square(model.actuation_dim())?;
    if cfg.gain.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: cfg.gain.dim() });
    }
    if q.len() != model.actuation_dim() {
        return Err(Error::DimensionMismatch { expected: model.actuation_dim(), got: q.len() });
    }
    Ok(())
}

/// One controller step from `q`. `step` only labels errors and logs.
pub fn clik_step(
    spec: &TaskSpec,
    model: &dyn ShapeModel,
    q: &DVector<f64>,
    cfg: &ClikConfig,
    step: usize,
) -> Result<(DVector<f64>, StepDiagnostics)> {
    check(spec, model, q, cfg)?;
    let ev = evaluate_task(spec, model, q)?;
    advance(&ev, q, cfg, step)
}

/// Recorded closed-loop run. Every history has one entry per time sample,
/// the initial state included.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub actuation: Vec<DVector<f64>>,
    pub task_values: Vec<DVector<f64>>,
    pub errors: Vec<f64>,
    pub s_eval: Vec<f64>,
    pub cond: Vec<f64>,
    pub clamped: Vec<bool>,
    /// `(t, nodes × d)` shape samples.
    pub snapshots: Vec<(f64, DMatrix<f64>)>,
    m: usize,
    p: usize,
}

impl Trajectory {
    /// No samples yet, for `m` actuators and a `p`-dimensional task.
    pub fn empty(m: usize, p: usize) -> Self {
        Self { m, p, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn actuation_dim(&self) -> usize {
        self.m
    }

    pub fn task_dim(&self) -> usize {
        self.p
    }

    pub fn final_actuation(&self) -> Option<&DVector<f64>> {
        self.actuation.last()
    }

    /// `(t, ‖x̄ − x‖)` pairs.
    pub fn error_curve(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.errors.iter().copied()).collect()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..self.m).map(|i| format!("q{i}")));
        cols.extend((0..self.p).map(|i| format!("x{i}")));
        cols.push("s_star".into());
        cols.push("cond".into());
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.actuation[k].iter().map(f64::to_string));
            row.extend(self.task_values[k].iter().map(f64::to_string));
            row.push(self.s_eval[k].to_string());
            row.push(self.cond[k].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Error norm (log scale), actuation and shape snapshots; 3-D shapes are
    /// drawn in their first and last coordinates.
    pub fn to_svg(&self) -> String {
        let error = Panel {
            title: "task error".into(),
            x_label: "t".into(),
            y_label: "‖x̄ − x‖".into(),
            log_y: true,
            series: vec![Series::new("error", self.error_curve())],
            ..Panel::default()
        };
        let actuation = Panel {
            title: "actuation".into(),
            x_label: "t".into(),
            y_label: "q".into(),
            series: (0..self.m)
                .map(|i| {
                    let pts = self.times.iter().zip(&self.actuation).map(|(t, q)| (*t, q[i])).collect();
                    Series::new(format!("q{i}"), pts)
                })
                .collect(),
            ..Panel::default()
        };
        let shapes = Panel {
            title: "shape snapshots".into(),
            x_label: "x0".into(),
            y_label: "last coordinate".into(),
            equal_aspect: true,
            series: self
                .snapshots
                .iter()
                .map(|(t, nodes)| {
                    let last = nodes.ncols().saturating_sub(1);
                    let pts = nodes.row_iter().map(|r| (r[0], r[last])).collect();
                    Series::new(format!("t={t:.2}"), pts)
                })
                .collect(),
            ..Panel::default()
        };
        render_svg(&[error, actuation, shapes])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Svg,
}

pub fn export_trajectory(traj: &Trajectory, path: &Path, format: ExportFormat) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    match format {
        ExportFormat::Csv => traj.write_csv(&mut w)?,
        ExportFormat::Svg => w.write_all(traj.to_svg().as_bytes())?,
    }
    w.flush()?;
    Ok(())
}

fn snapshot(model: &dyn ShapeModel, q: &DVector<f64>, nodes: usize) -> DMatrix<f64> {
    let curve = model.curve(q);
    let d = model.ambient_dim();
    let mut out = DMatrix::zeros(nodes, d);
    for k in 0..nodes {
        out.row_mut(k).copy_from(&curve(k as f64 / (nodes - 1) as f64).transpose());
    }
    out
}

/// Runs `⌊t_end/dt⌋` steps from `q0`. Closest-point tasks re-solve `s_*`
/// at every step.
pub fn run_clik(spec: &TaskSpec, model: &dyn ShapeModel, q0: &DVector<f64>, cfg: &ClikConfig) -> Result<Trajectory> {
    check(spec, model, q0, cfg)?;
    let n = cfg.steps();
    let mut traj = Trajectory::empty(model.actuation_dim(), spec.dim());
    let mut q = q0.clone();
    let mut clamped = false;
    for k in 0..=n {
        let ev = evaluate_task(spec, model, &q)?;
        if let Some(&prev) = traj.s_eval.last() {
            if (ev.s_eval - prev).abs() > S_JUMP {
                log::info!("step {k}: s_* jumped from {prev:.4} to {:.4}", ev.s_eval);
            }
        }
        let t = k as f64 * cfg.dt;
        if cfg.snapshot_every > 0 && (k % cfg.snapshot_every == 0 || k == n) {
            traj.snapshots.push((t, snapshot(model, &q, cfg.snapshot_nodes)));
        }
        let (next, diag) = if k < n {
            advance(&ev, &q, cfg, k)?
        } else {
            let error = &cfg.target - &ev.value;
            let diag = StepDiagnostics {
                value: ev.value.clone(),
                error_norm: error.norm(),
                cond: condition_number(&ev.jacobian),
                s_eval: ev.s_eval,
                clamped: false,
            };
            (q.clone(), diag)
        };
        traj.times.push(t);
        traj.actuation.push(q);
        traj.task_values.push(diag.value);
        traj.errors.push(diag.error_norm);
        traj.s_eval.push(diag.s_eval);
        traj.cond.push(diag.cond);
        traj.clamped.push(clamped);
        clamped = diag.clamped;
        q = next;
    }
    Ok(traj)
}
