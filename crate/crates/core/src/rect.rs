use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};

/// Axis-aligned box `{x : lo <= x <= hi}` containing the origin.
///
/// Input and increment ranges are boxes around the current operating point,
/// so the origin-containment invariant is part of the type: a zero move and a
/// zero set-point excursion are always admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectangle {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl Rectangle {
    /// Requires finite bounds with `lo <= 0 <= hi` coordinatewise.
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension(format!(
                "rectangle bounds of lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for i in 0..lo.len() {
            if !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::Invalid(format!(
                    "rectangle bound {i} is not finite"
                )));
            }
            if lo[i] > 0.0 || hi[i] < 0.0 {
                return Err(Error::Invalid(format!(
                    "rectangle must contain the origin: coordinate {i} has [{}, {}]",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric box `[-half, half]^dim`.
    pub fn symmetric(dim: usize, half: f64) -> Result<Self> {
        if half.is_nan() || half < 0.0 {
            return Err(Error::Invalid(format!("negative half-width {half}")));
        }
        Ok(Self {
            lo: DVector::from_element(dim, -half),
            hi: DVector::from_element(dim, half),
        })
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

    /// Membership with slack `tol >= 0` on each face.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.lo.len()
            && (0..x.len()).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            self.lo[i] + (self.hi[i] - self.lo[i]) * rng.random::<f64>()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn accepts_boxes_containing_the_origin() {
        let r = Rectangle::new(dvector![-1.0, -2.0], dvector![1.0, 1.0]).unwrap();
        assert_eq!(r.dim(), 2);
        assert!(r.contains(&dvector![0.0, 0.0], 0.0));
        assert!(r.contains(&dvector![1.0, -2.0], 0.0));
        assert!(!r.contains(&dvector![1.1, 0.0], 0.0));
        assert!(r.contains(&dvector![1.1, 0.0], 0.2));
    }

    #[test]
    fn rejects_boxes_missing_the_origin() {
        assert!(Rectangle::new(dvector![0.5, -1.0], dvector![1.0, 1.0]).is_err());
        assert!(Rectangle::new(dvector![-1.0], dvector![-0.5]).is_err());
        assert!(Rectangle::new(dvector![-1.0], dvector![f64::INFINITY]).is_err());
    }

    #[test]
    fn boundary_origin_is_allowed() {
        let r = Rectangle::new(dvector![0.0], dvector![2.0]).unwrap();
        assert!(r.contains(&dvector![0.0], 0.0));
    }
}
