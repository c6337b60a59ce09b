use nalgebra::DVector;

use super::{nonlocal_gradient, NonlocalConfig};
use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField};

/// First-order expansion `A_n(x₀, x) = u(x₀) + (x - x₀)ᵀ ∇_n u(x₀)` and its
/// remainder `r_n(x₀, x) = u(x) - A_n(x₀, x)`.
#[derive(Debug, Clone)]
pub struct TaylorData {
    pub base: Point,
    pub value: f64,
    pub gradient: DVector<f64>,
    field: ScalarField,
}

impl TaylorData {
    pub fn affine(&self, x: &Point) -> f64 {
        self.value + (x - &self.base).dot(&self.gradient)
    }

    pub fn remainder(&self, x: &Point) -> Result<f64> {
        if x == &self.base {
            return Ok(0.0);
        }
        Ok(self.field.value(x)? - self.affine(x))
    }

    /// Classical remainder `u(x) - u(x₀) - (x - x₀)ᵀ ∇u(x₀)`.
    pub fn classical_remainder(&self, x: &Point) -> Result<f64> {
        let g = self
            .field
            .analytic_gradient(&self.base)
            .ok_or(Error::MissingDerivative(
                "classical remainder needs an analytic gradient",
            ))?;
        Ok(self.field.value(x)? - self.value - (x - &self.base).dot(&g))
    }
}

pub fn taylor_affine(field: &ScalarField, x0: &Point, config: &NonlocalConfig) -> Result<TaylorData> {
    let gradient = nonlocal_gradient(field, x0, config)?;
    Ok(TaylorData {
        base: x0.clone(),
        value: field.value(x0)?,
        gradient,
        field: field.clone(),
    })
}
