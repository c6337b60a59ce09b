use nalgebra::DVector;

use super::{run_descent, OptimizerTrace, StepSchedule};
use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField};
use crate::operators::{nonlocal_gradient, NonlocalConfig};

const GRID_POINTS: usize = 64;
const GOLDEN_TOL: f64 = 1e-8;

/// `x^{k+1} = x^k - α^k ∇_n u(x^k)` at a fixed scale `n`.
pub fn nlgd_fixed(
    field: &ScalarField,
    x0: &Point,
    config: &NonlocalConfig,
    schedule: &StepSchedule,
    max_iters: usize,
    grad_tol: f64,
) -> Result<OptimizerTrace> {
    schedule.validate()?;
    run_descent(
        field,
        x0,
        max_iters,
        grad_tol,
        |x| nonlocal_gradient(field, x, config),
        |k, x, g| {
            let a = schedule.step(k);
            Ok((x - g * a, a))
        },
    )
}

/// Nonlocal gradient descent with `α^k = argmin_{α ∈ [0, A]} u(x^k - α ∇_n u(x^k))`.
pub fn nlgd_linesearch(
    field: &ScalarField,
    x0: &Point,
    config: &NonlocalConfig,
    cap: f64,
    max_iters: usize,
    grad_tol: f64,
) -> Result<OptimizerTrace> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "line-search cap must be positive, got {cap}"
        )));
    }
    run_descent(
        field,
        x0,
        max_iters,
        grad_tol,
        |x| nonlocal_gradient(field, x, config),
        |_, x, g| exact_step(field, x, g, cap),
    )
}

/// Line-search step along `-g`, with the cap shrunk so the segment stays in Ω.
pub(crate) fn exact_step(field: &ScalarField, x: &Point, g: &DVector<f64>, cap: f64) -> Result<(Point, f64)> {
    let norm = g.norm();
    if norm == 0.0 {
        return Ok((x.clone(), 0.0));
    }
    let dir = -g / norm;
    let reach = field.domain().exit_distance(x, &dir) / norm;
    let cap = cap.min(reach * (1.0 - 1e-9));
    let alpha = line_search(|a| field.value(&(x - g * a)), cap)?;
    Ok((x - g * alpha, alpha))
}

/// Smallest minimizer of `phi` on `[0, cap]`: best point of a 64-point
/// grid, refined by golden-section search between its neighbours. Ties go
/// to the smaller step.
pub fn line_search(mut phi: impl FnMut(f64) -> Result<f64>, cap: f64) -> Result<f64> {
    if !(cap > 0.0) {
        return Ok(0.0);
    }
    let h = cap / (GRID_POINTS - 1) as f64;
    let mut best = (0usize, phi(0.0)?);
    for i in 1..GRID_POINTS {
        let v = phi(i as f64 * h)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    let mut lo = best.0.saturating_sub(1) as f64 * h;
    let mut hi = ((best.0 + 1).min(GRID_POINTS - 1) as f64 * h).min(cap);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (phi(c)?, phi(d)?);
    while hi - lo > GOLDEN_TOL {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = phi(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = phi(d)?;
        }
    }
    let refined = 0.5 * (lo + hi);
    let grid_alpha = best.0 as f64 * h;
    if phi(refined)? < best.1 {
        Ok(refined)
    } else {
        Ok(grid_alpha)
    }
}
