//! Actuation coordinates and their admissible box.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Per-coordinate bounds `lo_i <= q_i <= hi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationBox {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl ActuationBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.is_empty() {
            return Err(Error::InvalidArgument("actuation box must have m >= 1".into()));
        }
        for i in 0..lo.len() {
            if !(lo[i].is_finite() && hi[i].is_finite()) || lo[i] > hi[i] {
                return Err(Error::InvalidArgument(format!(
                    "invalid bounds [{}, {}] for coordinate {i}",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The same interval `[lo, hi]` on each of `m` coordinates.
    pub fn uniform(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_element(m, lo), DVector::from_element(m, hi))
    }

    /// The three-fiber activation box `[-1.67, 0]^3`.
    pub fn three_fiber() -> Self {
        Self::uniform(3, -1.67, 0.0).expect("static bounds")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn contains(&self, q: &DVector<f64>) -> bool {
        q.len() == self.dim() && q.iter().enumerate().all(|(i, v)| self.lo[i] <= *v && *v <= self.hi[i])
    }

    /// Component-wise clamp; returns `true` if any coordinate moved.
    pub fn clamp(&self, q: &mut DVector<f64>) -> bool {
        let mut moved = false;
        for i in 0..self.dim() {
            let c = q[i].clamp(self.lo[i], self.hi[i]);
            if c != q[i] {
                q[i] = c;
                moved = true;
            }
        }
        moved
    }

    /// The box widened by `margin` on every side.
    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            lo: self.lo.add_scalar(-margin),
            hi: self.hi.add_scalar(margin),
        }
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_inverted_bounds() {
        assert!(ActuationBox::uniform(2, 1.0, 0.0).is_err());
        assert!(ActuationBox::new(DVector::zeros(2), DVector::zeros(3)).is_err());
    }

    proptest! {
        #[test]
        fn clamp_lands_inside(v in proptest::collection::vec(-10.0f64..10.0, 3)) {
            let b = ActuationBox::three_fiber();
            let mut q = DVector::from_vec(v);
            b.clamp(&mut q);
            prop_assert!(b.contains(&q));
        }
    }
}
