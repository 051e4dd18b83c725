//! Velocity fields over latent space.

use crate::error::Result;

/// A time-dependent vector field v(x, t) on ℝ^d, defined for t ∈ [0, horizon].
pub trait VelocityField {
    fn dim(&self) -> usize;

    /// Largest admissible t (the early-stopping time T < 1).
    fn horizon(&self) -> f64;

    fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>>;
}

/// Wrap a closure as a velocity field.
pub struct FnField<F: Fn(&[f64], f64) -> Vec<f64>> {
    pub dim: usize,
    pub horizon: f64,
    pub f: F,
}

impl<F: Fn(&[f64], f64) -> Vec<f64>> VelocityField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok((self.f)(x, t))
    }
}
