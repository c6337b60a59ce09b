//! Nonlocal gradient, restricted gradient, nonlocal Hessians and the
//! nonlocal Taylor approximant.
//!
//! All integrals are taken in polar coordinates around the evaluation point,
//! `y = x + r·ω`, so the singular point `y = x` is never a node and the
//! integrand `(u(y) - u(x)) / r · ω` stays bounded for Lipschitz `u`.

mod hessian;
mod subset;
mod taylor;

pub use hessian::{nonlocal_hessian, H4Constant, HessianVariant};
pub use subset::find_vanishing_subset_1d;
pub use taylor::{taylor_affine, TaylorData};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Point, ScalarField, SubsetIndicator};
use crate::kernels::RadialKernel;
use crate::quadrature::{richardson, CompensatedSum, PolarRule, PolarSettings, PvMode, PvPolicy};

/// Kernel, quadrature resolution and principal-value policy of a nonlocal
/// operator.
#[derive(Debug, Clone)]
pub struct NonlocalConfig {
    kernel: RadialKernel,
    polar: PolarSettings,
    pv: PvPolicy,
    rule: PolarRule,
}

impl NonlocalConfig {
    pub fn new(kernel: RadialKernel) -> Result<Self> {
        Self::with_settings(kernel, PolarSettings::default(), PvPolicy::default())
    }

    pub fn with_settings(kernel: RadialKernel, polar: PolarSettings, pv: PvPolicy) -> Result<Self> {
        let rule = PolarRule::new(kernel.dim(), polar)?;
        Ok(Self {
            kernel,
            polar,
            pv,
            rule,
        })
    }

    pub fn with_polar(&self, polar: PolarSettings) -> Result<Self> {
        Self::with_settings(self.kernel.clone(), polar, self.pv)
    }

    pub fn with_pv(&self, pv: PvPolicy) -> Self {
        Self { pv, ..self.clone() }
    }

    /// Same family and quadrature at scale index `n`.
    pub fn with_scale_index(&self, n: u32) -> Result<Self> {
        Ok(Self {
            kernel: self.kernel.with_scale_index(n)?,
            ..self.clone()
        })
    }

    pub fn kernel(&self) -> &RadialKernel {
        &self.kernel
    }

    pub fn polar(&self) -> PolarSettings {
        self.polar
    }

    pub fn pv(&self) -> PvPolicy {
        self.pv
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Quadrature nodes used by one gradient evaluation with an interior
    /// kernel ball.
    pub fn node_count(&self) -> usize {
        self.rule.node_count()
    }

    pub(crate) fn rule(&self) -> &PolarRule {
        &self.rule
    }
}

/// `k_u(x, y) = (u(x) - u(y)) / ‖x - y‖² · (x - y)`.
pub fn difference_quotient(field: &ScalarField, x: &Point, y: &Point) -> Result<DVector<f64>> {
    let diff = x - y;
    let d2 = diff.norm_squared();
    if d2 == 0.0 {
        return Err(Error::Coincident);
    }
    let du = field.value(x)? - field.value(y)?;
    Ok(diff * (du / d2))
}

/// `∇_n u(x) = D ∫_Ω (u(x) - u(y)) / ‖x - y‖ · (x - y) / ‖x - y‖ · ρ_n(x - y) dy`.
pub fn nonlocal_gradient(field: &ScalarField, x: &Point, config: &NonlocalConfig) -> Result<DVector<f64>> {
    check_dims(field, x, config)?;
    field.domain().require_interior(x)?;
    gradient_inner(field, x, config, None)
}

/// The nonlocal gradient with the integral restricted to `subset ∩ Ω`.
pub fn restricted_nonlocal_gradient(
    field: &ScalarField,
    x: &Point,
    config: &NonlocalConfig,
    subset: &SubsetIndicator,
) -> Result<DVector<f64>> {
    check_dims(field, x, config)?;
    if subset.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: subset.dim(),
        });
    }
    field.domain().require_interior(x)?;
    gradient_inner(field, x, config, Some(subset))
}

/// Gradient at a point of the closed domain; directions pointing out of Ω
/// contribute nothing.
pub(crate) fn gradient_closed(field: &ScalarField, x: &Point, config: &NonlocalConfig) -> Result<DVector<f64>> {
    check_dims(field, x, config)?;
    gradient_inner(field, x, config, None)
}

fn gradient_inner(
    field: &ScalarField,
    x: &Point,
    config: &NonlocalConfig,
    subset: Option<&SubsetIndicator>,
) -> Result<DVector<f64>> {
    let jac = nonlocal_jacobian(config, field.domain(), x, 1, subset, |y, out| {
        out[0] = field.value(y)?;
        Ok(())
    })?;
    Ok(jac.column(0).into_owned())
}

fn check_dims(field: &ScalarField, x: &Point, config: &NonlocalConfig) -> Result<()> {
    if x.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x.len(),
        });
    }
    if config.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: config.dim(),
        });
    }
    Ok(())
}

fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a0, a1) in a {
        for &(b0, b1) in b {
            let (lo, hi) = (a0.max(b0), a1.min(b1));
            if lo < hi {
                out.push((lo, hi));
            }
        }
    }
    out
}

/// Nonlocal derivative of a vector-valued map `v: Ω → ℝ^m` at `x`:
/// entry `(i, j)` is `D ∫ (v_j(y) - v_j(x)) / r · ω_i ρ̂_n(r)` over the
/// kernel ball intersected with Ω (and `subset`, if given).
pub(crate) fn nonlocal_jacobian(
    config: &NonlocalConfig,
    domain: &BoxDomain,
    x: &Point,
    m: usize,
    subset: Option<&SubsetIndicator>,
    mut f: impl FnMut(&Point, &mut [f64]) -> Result<()>,
) -> Result<DMatrix<f64>> {
    let mut fx = vec![0.0; m];
    f(x, &mut fx)?;
    let eps = config.pv.exclusion_radius;
    match config.pv.mode {
        PvMode::DropNodes => jacobian_at(config, domain, x, &fx, subset, eps, &mut f),
        PvMode::LimitSequence => {
            let levels = [
                jacobian_at(config, domain, x, &fx, subset, eps, &mut f)?,
                jacobian_at(config, domain, x, &fx, subset, eps / 2.0, &mut f)?,
                jacobian_at(config, domain, x, &fx, subset, eps / 4.0, &mut f)?,
            ];
            let dim = config.dim();
            let mut out = DMatrix::zeros(dim, m);
            for i in 0..dim {
                for j in 0..m {
                    out[(i, j)] = richardson([levels[0][(i, j)], levels[1][(i, j)], levels[2][(i, j)]], dim)?;
                }
            }
            Ok(out)
        }
    }
}

fn jacobian_at(
    config: &NonlocalConfig,
    domain: &BoxDomain,
    x: &Point,
    fx: &[f64],
    subset: Option<&SubsetIndicator>,
    eps: f64,
    f: &mut impl FnMut(&Point, &mut [f64]) -> Result<()>,
) -> Result<DMatrix<f64>> {
    let dim = config.dim();
    let m = fx.len();
    let radius = config.kernel.effective_radius();
    let mut acc = vec![CompensatedSum::default(); dim * m];
    let mut y = x.clone();
    let mut fy = vec![0.0; m];
    config.rule.for_each_node(
        |omega| {
            let ball = [(eps, radius.min(domain.exit_distance(x, omega)))];
            match subset {
                None => ball.to_vec(),
                Some(s) => intersect(&ball, &s.ray_segments(x, omega)),
            }
        },
        |omega, r, w| {
            y.copy_from(x);
            y.axpy(r, omega, 1.0);
            f(&y, &mut fy)?;
            let scale = w * config.kernel.radial_density(r) / r;
            for j in 0..m {
                let dv = (fy[j] - fx[j]) * scale;
                for i in 0..dim {
                    acc[j * dim + i].add(dv * omega[i]);
                }
            }
            Ok(())
        },
    )?;
    let d = dim as f64;
    Ok(DMatrix::from_fn(dim, m, |i, j| d * acc[j * dim + i].value()))
}
