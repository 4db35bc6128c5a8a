use std::f64::consts::PI;

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};

/// Linear map from fiber activations to intrinsic strains.
///
/// Fiber 1 runs straight along the body, offset towards `d₁`, and bends
/// the rod about `d₂`. Fibers 2 and 3 form a helical pair of opposite
/// handedness with `turns` turns over the body; their curvature profiles
/// are mirror images across the `d₁–d₃` plane. Each fiber also changes
/// the intrinsic stretch in proportion to its activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationMap {
    /// Curvature per unit activation of the straight fiber (1/m).
    pub longitudinal_bend: f64,
    /// Stretch per unit activation of the straight fiber.
    pub longitudinal_stretch: f64,
    /// Curvature amplitude per unit activation of each helical fiber (1/m).
    pub helical_bend: f64,
    /// Twist-to-bend ratio of the helical fibers.
    pub helical_twist: f64,
    /// Stretch per unit activation of each helical fiber.
    pub helical_stretch: f64,
    /// Helix turns along the body.
    pub helical_turns: f64,
}

impl Default for ActivationMap {
    fn default() -> Self {
        Self {
            longitudinal_bend: 2.0,
            longitudinal_stretch: 0.15,
            helical_bend: 1.2,
            helical_twist: 0.5,
            helical_stretch: 0.10,
            helical_turns: 1.5,
        }
    }
}

impl ActivationMap {
    /// A map under which activations have no effect.
    pub fn zero() -> Self {
        Self {
            longitudinal_bend: 0.0,
            longitudinal_stretch: 0.0,
            helical_bend: 0.0,
            helical_twist: 0.0,
            helical_stretch: 0.0,
            helical_turns: 0.0,
        }
    }

    /// Curvature per unit activation `b_i(s)`, in the body frame, for fiber `i` (0-based).
    pub fn bend(&self, fiber: usize, s: f64) -> Vector3<f64> {
        match fiber {
            0 => Vector3::new(0.0, self.longitudinal_bend, 0.0),
            1 | 2 => {
                let (sin, cos) = (2.0 * PI * self.helical_turns * s).sin_cos();
                let c = self.helical_bend;
                let sign = if fiber == 1 { -1.0 } else { 1.0 };
                Vector3::new(sign * c * sin, c * cos, sign * c * self.helical_twist)
            }
            _ => panic!("three-fiber map has no fiber {fiber}"),
        }
    }

    /// Stretch per unit activation `e_i(s)` for fiber `i` (0-based).
    pub fn stretch(&self, fiber: usize, _s: f64) -> f64 {
        match fiber {
            0 => self.longitudinal_stretch,
            1 | 2 => self.helical_stretch,
            _ => panic!("three-fiber map has no fiber {fiber}"),
        }
    }

    /// `(û(s), ζ̂(s))` without the positivity check.
    pub(crate) fn strains_unchecked(&self, q: &[f64; 3], s: f64) -> (Vector3<f64>, f64) {
        let (sin, cos) = (2.0 * PI * self.helical_turns * s).sin_cos();
        let c = self.helical_bend;
        let pair_sum = q[1] + q[2];
        let pair_diff = q[2] - q[1];
        let u = Vector3::new(
            c * sin * pair_diff,
            q[0] * self.longitudinal_bend + c * cos * pair_sum,
            c * self.helical_twist * pair_diff,
        );
        let stretch = 1.0 + q[0] * self.longitudinal_stretch + pair_sum * self.helical_stretch;
        (u, stretch)
    }
}

/// Material, load and actuation parameters of the three-fiber rod.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodParams {
    /// Rest length (m).
    pub length: f64,
    /// Bending stiffnesses about `d₁`, `d₂` (N·m²).
    pub bend_stiffness: [f64; 2],
    /// Torsional stiffness (N·m²).
    pub torsion_stiffness: f64,
    /// Axial stiffness (N).
    pub axial_stiffness: f64,
    /// Weight per unit length (N/m).
    pub weight: f64,
    /// Unit vector along which gravity pulls.
    pub gravity: Vector3<f64>,
    pub activation: ActivationMap,
}

impl Default for RodParams {
    fn default() -> Self {
        Self {
            length: 0.18,
            bend_stiffness: [1e-3, 1e-3],
            torsion_stiffness: 8e-4,
            axial_stiffness: 50.0,
            weight: 0.25,
            gravity: Vector3::new(0.0, 0.0, -1.0),
            activation: ActivationMap::default(),
        }
    }
}

impl RodParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("bend_stiffness[0]", self.bend_stiffness[0]),
            ("bend_stiffness[1]", self.bend_stiffness[1]),
            ("torsion_stiffness", self.torsion_stiffness),
            ("axial_stiffness", self.axial_stiffness),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight must be >= 0, got {}", self.weight)));
        }
        if (self.gravity.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("gravity direction must be a unit vector".into()));
        }
        Ok(())
    }

    /// Stable fingerprint of the parameter values, stored with datasets.
    pub fn fingerprint(&self) -> u64 {
        let a = &self.activation;
        let values = [
            self.length,
            self.bend_stiffness[0],
            self.bend_stiffness[1],
            self.torsion_stiffness,
            self.axial_stiffness,
            self.weight,
            self.gravity.x,
            self.gravity.y,
            self.gravity.z,
            a.longitudinal_bend,
            a.longitudinal_stretch,
            a.helical_bend,
            a.helical_twist,
            a.helical_stretch,
            a.helical_turns,
        ];
        crate::hash::fnv1a(values.iter().flat_map(|v| v.to_bits().to_le_bytes()))
    }
}

pub(crate) fn fiber_activations(q: &DVector<f64>) -> Result<[f64; 3]> {
    if q.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: q.len() });
    }
    Ok([q[0], q[1], q[2]])
}

/// Intrinsic curvature `û(s)` (body frame, 1/m) and stretch `ζ̂(s)`.
pub fn intrinsic_strains(p: &RodParams, q: &DVector<f64>, s: f64) -> Result<(Vector3<f64>, f64)> {
    let q = fiber_activations(q)?;
    let (u, stretch) = p.activation.strains_unchecked(&q, s);
    if !(stretch > 0.0) {
        return Err(Error::NonPhysicalActivation { s, stretch });
    }
    Ok((u, stretch))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: f64, b: f64, c: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b, c])
    }

    #[test]
    fn rest_state_has_no_intrinsic_strain() {
        let p = RodParams::default();
        let (u, z) = intrinsic_strains(&p, &q(0.0, 0.0, 0.0), 0.37).unwrap();
        assert_eq!(u, Vector3::zeros());
        assert_eq!(z, 1.0);
    }

    #[test]
    fn single_fiber_is_linear() {
        let p = RodParams::default();
        for s in [0.0, 0.2, 0.9] {
            let (u, z) = intrinsic_strains(&p, &q(-1.0, 0.0, 0.0), s).unwrap();
            assert!((u + p.activation.bend(0, s)).norm() < 1e-15);
            assert!((z - (1.0 - p.activation.stretch(0, s))).abs() < 1e-15);
        }
    }

    #[test]
    fn superposition_of_fibers() {
        let p = RodParams::default();
        let s = 0.61;
        let rest = intrinsic_strains(&p, &q(0.0, 0.0, 0.0), s).unwrap();
        let singles = [q(-0.5, 0.0, 0.0), q(0.0, -0.5, 0.0), q(0.0, 0.0, -0.5)]
            .map(|qi| intrinsic_strains(&p, &qi, s).unwrap());
        let (u, z) = intrinsic_strains(&p, &q(-0.5, -0.5, -0.5), s).unwrap();
        let u_sum = singles.iter().map(|x| x.0).sum::<Vector3<f64>>() - rest.0 * 2.0;
        let z_sum = singles.iter().map(|x| x.1).sum::<f64>() - rest.1 * 2.0;
        assert!((u - u_sum).norm() < 1e-14);
        assert!((z - z_sum).abs() < 1e-14);
        // Each bend profile agrees with the closed-form strain evaluation.
        for i in 0..3 {
            let mut qi = [0.0; 3];
            qi[i] = 1.0;
            let (ui, _) = p.activation.strains_unchecked(&qi, s);
            assert!((ui - p.activation.bend(i, s)).norm() < 1e-15);
        }
    }

    #[test]
    fn helical_pair_is_mirror_symmetric() {
        let a = ActivationMap::default();
        for s in [0.1, 0.4, 0.8] {
            let (b2, b3) = (a.bend(1, s), a.bend(2, s));
            // Pseudovector under y -> -y: (u1, u2, u3) -> (-u1, u2, -u3).
            assert!((b3 - Vector3::new(-b2.x, b2.y, -b2.z)).norm() < 1e-15);
        }
    }

    #[test]
    fn whole_box_is_physical_with_defaults() {
        let p = RodParams::default();
        assert!(intrinsic_strains(&p, &q(-1.67, -1.67, -1.67), 0.5).unwrap().1 > 0.4);
    }

    #[test]
    fn collapsed_stretch_is_rejected() {
        let mut p = RodParams::default();
        p.activation.longitudinal_stretch = 1.0;
        let err = intrinsic_strains(&p, &q(-1.5, 0.0, 0.0), 0.5).unwrap_err();
        assert!(matches!(err, Error::NonPhysicalActivation { .. }));
    }

    #[test]
    fn validation() {
        let mut p = RodParams::default();
        assert!(p.validate().is_ok());
        p.gravity = Vector3::new(0.0, 0.0, -2.0);
        assert!(p.validate().is_err());
        let p = RodParams { axial_stiffness: 0.0, ..RodParams::default() };
        assert!(p.validate().is_err());
    }
}
