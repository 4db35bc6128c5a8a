use nalgebra::{Matrix3, Quaternion, SVector, UnitQuaternion, Vector3};

use super::params::{fiber_activations, RodParams};
use crate::error::Result;
use nalgebra::DVector;

/// Packed state: `r` (0..3), frame quaternion `[i, j, k, w]` (3..7), `n` (7..10), `m` (10..13).
pub(crate) type Packed = SVector<f64, 13>;

/// Rod state at one body coordinate. All vectors are in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodState {
    pub position: Vector3<f64>,
    /// Director frame; rotation columns are `d₁, d₂, d₃`. Kept as a raw
    /// quaternion because integrator stages are not unit-norm.
    pub frame: Quaternion<f64>,
    /// Internal force (N).
    pub force: Vector3<f64>,
    /// Internal moment (N·m).
    pub moment: Vector3<f64>,
}

impl RodState {
    pub fn directors(&self) -> Matrix3<f64> {
        UnitQuaternion::new_normalize(self.frame).to_rotation_matrix().into_inner()
    }

    pub(crate) fn pack(&self) -> Packed {
        let mut x = Packed::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<4>(3).copy_from(&self.frame.coords);
        x.fixed_rows_mut::<3>(7).copy_from(&self.force);
        x.fixed_rows_mut::<3>(10).copy_from(&self.moment);
        x
    }

    pub(crate) fn unpack(x: &Packed) -> Self {
        Self {
            position: x.fixed_rows::<3>(0).into_owned(),
            frame: Quaternion::from(x.fixed_rows::<4>(3).into_owned()),
            force: x.fixed_rows::<3>(7).into_owned(),
            moment: x.fixed_rows::<3>(10).into_owned(),
        }
    }
}

/// Everything the right-hand side needs that does not vary along the rod.
pub(crate) struct RhsContext<'a> {
    pub params: &'a RodParams,
    pub activations: [f64; 3],
    /// Scales the weight; used by gravity continuation.
    pub load_scale: f64,
    compliance: Vector3<f64>,
}

impl<'a> RhsContext<'a> {
    pub fn new(params: &'a RodParams, activations: [f64; 3], load_scale: f64) -> Self {
        let compliance = Vector3::new(
            1.0 / params.bend_stiffness[0],
            1.0 / params.bend_stiffness[1],
            1.0 / params.torsion_stiffness,
        );
        Self { params, activations, load_scale, compliance }
    }

    /// Derivative with respect to normalized arc length `s`.
    ///
    /// Linear moment law `m_body = K (u - û)`, linear axial law
    /// `ζ = ζ̂ + n·d₃ / EA`, unshearable. Body force `f = w g`.
    pub fn eval(&self, s: f64, x: &Packed) -> Packed {
        let p = self.params;
        let l = p.length;
        let quat = Quaternion::from(x.fixed_rows::<4>(3).into_owned());
        let rot = UnitQuaternion::new_normalize(quat).to_rotation_matrix().into_inner();
        let n = x.fixed_rows::<3>(7).into_owned();
        let m = x.fixed_rows::<3>(10).into_owned();

        let (u_hat, stretch_hat) = p.activation.strains_unchecked(&self.activations, s);
        let m_body = rot.transpose() * m;
        let u = u_hat + m_body.component_mul(&self.compliance);
        let d3 = rot.column(2).into_owned();
        let stretch = stretch_hat + n.dot(&d3) / p.axial_stiffness;

        let dr = d3 * (l * stretch);
        let omega = u * (l * stretch_hat);
        let dq = quat * Quaternion::from_imag(omega) * 0.5;
        let body_force = p.gravity * (p.weight * self.load_scale);
        let dn = -body_force * (l * stretch_hat);
        let dm = -dr.cross(&n);

        let mut out = Packed::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&dr);
        out.fixed_rows_mut::<4>(3).copy_from(&dq.coords);
        out.fixed_rows_mut::<3>(7).copy_from(&dn);
        out.fixed_rows_mut::<3>(10).copy_from(&dm);
        out
    }
}

/// `d(state)/ds` of the quasi-static rod, per unit normalized arc length.
pub fn rod_rhs(p: &RodParams, q: &DVector<f64>, s: f64, state: &RodState) -> Result<RodState> {
    let ctx = RhsContext::new(p, fiber_activations(q)?, 1.0);
    Ok(RodState::unpack(&ctx.eval(s, &state.pack())))
}

/// One classical RK4 step.
pub(crate) fn rk4_step(ctx: &RhsContext<'_>, s: f64, h: f64, x: &Packed) -> Packed {
    let k1 = ctx.eval(s, x);
    let k2 = ctx.eval(s + 0.5 * h, &(x + k1 * (0.5 * h)));
    let k3 = ctx.eval(s + 0.5 * h, &(x + k2 * (0.5 * h)));
    let k4 = ctx.eval(s + h, &(x + k3 * h));
    let mut next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let mut quat = next.fixed_rows_mut::<4>(3);
    let norm = quat.norm();
    quat /= norm;
    next
}
