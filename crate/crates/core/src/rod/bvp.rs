//! Shooting solver for the clamped-free rod.
//!
//! Unknowns are the base force and moment `ξ = (n(0), m(0))`; the residual
//! is the free-end load `(n(1), m(1))`. Newton iterations use a
//! forward-difference Jacobian with Armijo backtracking. If plain Newton
//! stalls, the weight is ramped up in stages, each warm-started from the
//! previous one.

use nalgebra::{DMatrix, DVector, Matrix6, UnitQuaternion, Vector3, Vector6};

use super::params::{fiber_activations, RodParams};
use super::rhs::{rk4_step, Packed, RhsContext, RodState};
use crate::curve::{grid_point, Centerline};
use crate::error::{Error, Result};

/// RK4 sub-steps per grid interval.
pub const SUBSTEPS: usize = 4;

const LOAD_STAGES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub fd_step: f64,
    pub max_iterations: usize,
    /// Smallest Armijo step before declaring stagnation.
    pub damping_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, fd_step: 1e-7, max_iterations: 40, damping_floor: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub centerline: Centerline,
    pub frames: Vec<UnitQuaternion<f64>>,
    pub forces: Vec<Vector3<f64>>,
    pub moments: Vec<Vector3<f64>>,
    /// Base load `(n(0), m(0))`.
    pub base_load: Vector6<f64>,
    /// `‖(n(1), m(1))‖`.
    pub residual: f64,
    pub iterations: usize,
}

/// Base frame: `d₃` along gravity, so the unactuated rod hangs straight.
pub fn base_frame(gravity: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(&Vector3::z(), gravity)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI))
}

struct Shooter<'a> {
    params: &'a RodParams,
    activations: [f64; 3],
    n_s: usize,
    opts: SolverOptions,
}

impl Shooter<'_> {
    fn initial_state(&self, xi: &Vector6<f64>) -> Packed {
        RodState {
            position: Vector3::zeros(),
            frame: *base_frame(&self.params.gravity).quaternion(),
            force: xi.fixed_rows::<3>(0).into_owned(),
            moment: xi.fixed_rows::<3>(3).into_owned(),
        }
        .pack()
    }

    /// Integrates base to tip; `on_node` sees the state at every grid node.
    fn integrate<F: FnMut(usize, &Packed)>(&self, xi: &Vector6<f64>, load: f64, mut on_node: F) -> Packed {
        let ctx = RhsContext::new(self.params, self.activations, load);
        let intervals = self.n_s - 1;
        let h = 1.0 / (intervals * SUBSTEPS) as f64;
        let mut x = self.initial_state(xi);
        on_node(0, &x);
        for k in 0..intervals {
            let s0 = grid_point(k, self.n_s);
            for j in 0..SUBSTEPS {
                x = rk4_step(&ctx, s0 + j as f64 * h, h, &x);
            }
            on_node(k + 1, &x);
        }
        x
    }

    fn residual(&self, xi: &Vector6<f64>, load: f64) -> Vector6<f64> {
        let end = self.integrate(xi, load, |_, _| {});
        end.fixed_rows::<6>(7).into_owned()
    }

    /// Base load of the intrinsic (unloaded) shape carrying the full weight:
    /// `n(0) = w L ∫ζ̂ g`, `m(0) = ∫ r' × n ds`.
    fn initial_guess(&self, load: f64) -> Vector6<f64> {
        let p = self.params;
        let mut tangents = Vec::with_capacity(self.n_s);
        let mut stretch = Vec::with_capacity(self.n_s);
        self.integrate(&Vector6::zeros(), 0.0, |k, x| {
            let s = grid_point(k, self.n_s);
            let st = RodState::unpack(x);
            let (_, zh) = p.activation.strains_unchecked(&self.activations, s);
            tangents.push(st.directors().column(2) * (p.length * zh));
            stretch.push(zh);
        });
        let h = 1.0 / (self.n_s - 1) as f64;
        // Weight carried below each node, by reverse trapezoid.
        let mut below = vec![0.0; self.n_s];
        for k in (0..self.n_s - 1).rev() {
            below[k] = below[k + 1] + 0.5 * h * (stretch[k] + stretch[k + 1]);
        }
        let wl = p.weight * load * p.length;
        let mut moment = Vector3::zeros();
        for k in 0..self.n_s - 1 {
            let a = tangents[k].cross(&(p.gravity * (wl * below[k])));
            let b = tangents[k + 1].cross(&(p.gravity * (wl * below[k + 1])));
            moment += (a + b) * (0.5 * h);
        }
        let mut xi = Vector6::zeros();
        xi.fixed_rows_mut::<3>(0).copy_from(&(p.gravity * (wl * below[0])));
        xi.fixed_rows_mut::<3>(3).copy_from(&moment);
        xi
    }

    /// Damped Newton. `Err` carries the last iterate and residual on stagnation.
    fn newton(&self, mut xi: Vector6<f64>, load: f64, iterations: &mut usize) -> std::result::Result<Vector6<f64>, (Vector6<f64>, f64)> {
        let mut f = self.residual(&xi, load);
        let mut norm = f.norm();
        for _ in 0..self.opts.max_iterations {
            if !norm.is_finite() {
                return Err((xi, norm));
            }
            if norm <= self.opts.tol {
                return Ok(xi);
            }
            *iterations += 1;
            let mut jac = Matrix6::zeros();
            for j in 0..6 {
                let mut xp = xi;
                xp[j] += self.opts.fd_step;
                jac.set_column(j, &((self.residual(&xp, load) - f) / self.opts.fd_step));
            }
            let Some(step) = jac.lu().solve(&(-f)) else {
                return Err((xi, norm));
            };
            let mut alpha = 1.0;
            loop {
                let trial = xi + step * alpha;
                let f_trial = self.residual(&trial, load);
                let n_trial = f_trial.norm();
                if n_trial.is_finite() && n_trial <= (1.0 - 1e-4 * alpha) * norm {
                    xi = trial;
                    f = f_trial;
                    norm = n_trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < self.opts.damping_floor {
                    return Err((xi, norm));
                }
            }
        }
        if norm <= self.opts.tol {
            Ok(xi)
        } else {
            Err((xi, norm))
        }
    }

    fn solve(&self, guess: Option<Vector6<f64>>) -> Result<(Vector6<f64>, usize)> {
        let mut iterations = 0;
        let start = guess.unwrap_or_else(|| self.initial_guess(1.0));
        match self.newton(start, 1.0, &mut iterations) {
            Ok(xi) => return Ok((xi, iterations)),
            Err((_, residual)) => {
                log::debug!("newton stalled at residual {residual:e}; ramping load");
            }
        }
        let mut xi = Vector6::zeros();
        for (stage, &load) in LOAD_STAGES.iter().enumerate() {
            if stage > 0 {
                // Force part scales with the load; keep the moment warm start.
                let prev = LOAD_STAGES[stage - 1];
                if prev > 0.0 {
                    let nf = xi.fixed_rows::<3>(0) * (load / prev);
                    xi.fixed_rows_mut::<3>(0).copy_from(&nf);
                } else {
                    xi = self.initial_guess(load);
                }
            }
            match self.newton(xi, load, &mut iterations) {
                Ok(next) => xi = next,
                Err((_, residual)) => return Err(Error::SolverFailure { residual, iterations }),
            }
        }
        Ok((xi, iterations))
    }

    fn assemble(&self, xi: Vector6<f64>, iterations: usize) -> Result<BvpSolution> {
        let mut values = DMatrix::zeros(self.n_s, 3);
        let mut frames = Vec::with_capacity(self.n_s);
        let mut forces = Vec::with_capacity(self.n_s);
        let mut moments = Vec::with_capacity(self.n_s);
        let end = self.integrate(&xi, 1.0, |k, x| {
            let st = RodState::unpack(x);
            values.row_mut(k).copy_from(&st.position.transpose());
            frames.push(UnitQuaternion::new_normalize(st.frame));
            forces.push(st.force);
            moments.push(st.moment);
        });
        let residual = end.fixed_rows::<6>(7).norm();
        Ok(BvpSolution {
            centerline: Centerline::new(values)?,
            frames,
            forces,
            moments,
            base_load: xi,
            residual,
            iterations,
        })
    }
}

fn check_physical(p: &RodParams, activations: &[f64; 3], n_s: usize) -> Result<()> {
    for k in 0..n_s {
        let s = grid_point(k, n_s);
        let (_, stretch) = p.activation.strains_unchecked(activations, s);
        if !(stretch > 0.0) {
            return Err(Error::NonPhysicalActivation { s, stretch });
        }
    }
    Ok(())
}

/// Equilibrium shape of the rod for activations `q` on an `n_s`-node grid.
pub fn solve_bvp(p: &RodParams, q: &DVector<f64>, n_s: usize, tol: f64) -> Result<BvpSolution> {
    let opts = SolverOptions { tol, ..SolverOptions::default() };
    solve_bvp_with(p, q, n_s, opts, None)
}

/// [`solve_bvp`] with explicit options and an optional warm start for `ξ`.
pub fn solve_bvp_with(
    p: &RodParams,
    q: &DVector<f64>,
    n_s: usize,
    opts: SolverOptions,
    guess: Option<Vector6<f64>>,
) -> Result<BvpSolution> {
    p.validate()?;
    if n_s < 2 {
        return Err(Error::InvalidArgument(format!("n_s must be >= 2, got {n_s}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
    }
    let activations = fiber_activations(q)?;
    check_physical(p, &activations, n_s)?;
    let shooter = Shooter { params: p, activations, n_s, opts };
    let (xi, iterations) = shooter.solve(guess)?;
    let sol = shooter.assemble(xi, iterations)?;
    if !(sol.residual <= opts.tol) {
        return Err(Error::SolverFailure { residual: sol.residual, iterations });
    }
    Ok(sol)
}

/// Central-difference sensitivities `∂r/∂q_i` on the grid, one `n_s × 3`
/// matrix per actuator. Each perturbed solve is warm-started from the
/// base solution.
pub fn shape_partials(p: &RodParams, q: &DVector<f64>, n_s: usize, tol: f64, h: f64) -> Result<Vec<DMatrix<f64>>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let opts = SolverOptions { tol, ..SolverOptions::default() };
    let base = solve_bvp_with(p, q, n_s, opts, None)?;
    let mut out = Vec::with_capacity(q.len());
    for i in 0..q.len() {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        let plus = solve_bvp_with(p, &qp, n_s, opts, Some(base.base_load))?;
        let minus = solve_bvp_with(p, &qm, n_s, opts, Some(base.base_load))?;
        out.push((plus.centerline.values() - minus.centerline.values()) / (2.0 * h));
    }
    Ok(out)
}
