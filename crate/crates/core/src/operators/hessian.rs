use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{gradient_closed, nonlocal_gradient, nonlocal_jacobian, NonlocalConfig};
use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField};
use crate::quadrature::{CompensatedSum, NODE_BUDGET};

/// Default step of the finite difference in H3.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Prefactor of the second-difference Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H4Constant {
    /// `D(D+1)/2`.
    DPlusOne,
    /// `D(D+2)/2`, the value for which quadratics are reproduced exactly.
    #[default]
    Moment,
}

impl H4Constant {
    pub fn prefactor(self, dim: usize) -> f64 {
        let d = dim as f64;
        match self {
            H4Constant::DPlusOne => d * (d + 1.0) / 2.0,
            H4Constant::Moment => d * (d + 2.0) / 2.0,
        }
    }
}

/// The nonlocal Hessian constructions. The inner scale `n` is the kernel of
/// the [`NonlocalConfig`] passed alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum HessianVariant {
    /// Nonlocal derivative at scale `m` of the nonlocal partials at scale `n`.
    H1 { m: u32 },
    /// Nonlocal derivative of the classical partials. Uses the analytic
    /// gradient if present, otherwise central differences with `fd_step`.
    H2 {
        #[serde(default)]
        fd_step: Option<f64>,
    },
    /// Central difference of the nonlocal partials.
    H3 {
        #[serde(default = "default_fd_step")]
        fd_step: f64,
    },
    /// Kernel-weighted second central differences over `ℝ^D` (field
    /// extended by zero outside Ω).
    H4 {
        #[serde(default)]
        constant: H4Constant,
    },
}

fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}

impl Default for HessianVariant {
    fn default() -> Self {
        HessianVariant::H4 {
            constant: H4Constant::Moment,
        }
    }
}

pub fn nonlocal_hessian(
    field: &ScalarField,
    x: &Point,
    variant: HessianVariant,
    config: &NonlocalConfig,
) -> Result<DMatrix<f64>> {
    super::check_dims(field, x, config)?;
    field.domain().require_interior(x)?;
    match variant {
        HessianVariant::H1 { m } => h1(field, x, config, m),
        HessianVariant::H2 { fd_step } => h2(field, x, config, fd_step),
        HessianVariant::H3 { fd_step } => h3(field, x, config, fd_step),
        HessianVariant::H4 { constant } => h4(field, x, config, constant),
    }
}

fn h1(field: &ScalarField, x: &Point, config: &NonlocalConfig, m: u32) -> Result<DMatrix<f64>> {
    let outer = config.with_scale_index(m)?;
    let requested = outer.node_count().saturating_mul(config.node_count());
    if requested > NODE_BUDGET {
        return Err(Error::NodeBudget {
            requested,
            budget: NODE_BUDGET,
        });
    }
    let dim = field.dim();
    let jac = nonlocal_jacobian(&outer, field.domain(), x, dim, None, |y, out| {
        out.copy_from_slice(gradient_closed(field, y, config)?.as_slice());
        Ok(())
    })?;
    Ok(jac.transpose())
}

fn classical_gradient(field: &ScalarField, y: &Point, fd_step: Option<f64>) -> Result<DVector<f64>> {
    if let Some(g) = field.analytic_gradient(y) {
        return Ok(g);
    }
    let step = fd_step.ok_or(Error::MissingDerivative(
        "H2 needs an analytic gradient or a finite-difference step",
    ))?;
    let mut yp = y.clone();
    let mut g = DVector::zeros(y.len());
    for i in 0..y.len() {
        yp[i] = y[i] + step;
        let up = field.value(&yp)?;
        yp[i] = y[i] - step;
        let um = field.value(&yp)?;
        yp[i] = y[i];
        g[i] = (up - um) / (2.0 * step);
    }
    Ok(g)
}

fn h2(field: &ScalarField, x: &Point, config: &NonlocalConfig, fd_step: Option<f64>) -> Result<DMatrix<f64>> {
    if !field.has_gradient() && fd_step.is_none() {
        return Err(Error::MissingDerivative(
            "H2 needs an analytic gradient or a finite-difference step",
        ));
    }
    let dim = field.dim();
    let jac = nonlocal_jacobian(config, field.domain(), x, dim, None, |y, out| {
        out.copy_from_slice(classical_gradient(field, y, fd_step)?.as_slice());
        Ok(())
    })?;
    Ok(jac.transpose())
}

fn h3(field: &ScalarField, x: &Point, config: &NonlocalConfig, step: f64) -> Result<DMatrix<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("fd step must be positive, got {step}")));
    }
    let dim = field.dim();
    let mut h = DMatrix::zeros(dim, dim);
    let mut xs = x.clone();
    for j in 0..dim {
        xs[j] = x[j] + step;
        let gp = nonlocal_gradient(field, &xs, config)?;
        xs[j] = x[j] - step;
        let gm = nonlocal_gradient(field, &xs, config)?;
        xs[j] = x[j];
        h.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    Ok(h)
}

fn h4(field: &ScalarField, x: &Point, config: &NonlocalConfig, constant: H4Constant) -> Result<DMatrix<f64>> {
    let dim = field.dim();
    let kernel = config.kernel();
    let radius = kernel.effective_radius();
    let eps = config.pv().exclusion_radius;
    let ux = field.value(x)?;
    let iso = 1.0 / (dim as f64 + 2.0);
    let mut acc = vec![CompensatedSum::default(); dim * dim];
    let mut yp = x.clone();
    let mut ym = x.clone();
    config.rule().for_each_node(
        |_| vec![(eps, radius)],
        |omega, r, w| {
            yp.copy_from(x);
            yp.axpy(r, omega, 1.0);
            ym.copy_from(x);
            ym.axpy(-r, omega, 1.0);
            let second = field.value_extended(&yp)? - 2.0 * ux + field.value_extended(&ym)?;
            let s = w * kernel.radial_density(r) * second / (r * r);
            for i in 0..dim {
                for j in i..dim {
                    let t = omega[i] * omega[j] - if i == j { iso } else { 0.0 };
                    acc[i * dim + j].add(s * t);
                }
            }
            Ok(())
        },
    )?;
    let c = constant.prefactor(dim);
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        c * acc[a * dim + b].value()
    }))
}
