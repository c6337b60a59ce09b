use super::{restricted_nonlocal_gradient, NonlocalConfig};
use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField, SubsetIndicator};

const RESIDUAL_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

/// A union of two intervals `(x* - a, x*) ∪ (x*, x* + b)` on which the
/// restricted nonlocal gradient at `x*` vanishes.
///
/// Near a local minimum the right half-ball contributes a nonnegative
/// amount and the left half-ball a nonpositive one, each monotone in its
/// length. The right side is held at full length while the left length is
/// bisected; if the right side dominates even a full left side, the roles
/// swap.
pub fn find_vanishing_subset_1d(
    field: &ScalarField,
    x_star: &Point,
    config: &NonlocalConfig,
) -> Result<SubsetIndicator> {
    if field.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "vanishing subsets are constructed in one dimension only, got D = {}",
            field.dim()
        )));
    }
    super::check_dims(field, x_star, config)?;
    field.domain().require_interior(x_star)?;
    let x = x_star[0];
    let radius = config.kernel().effective_radius();
    let a_max = radius.min(x - field.domain().lower()[0]);
    let b_max = radius.min(field.domain().upper()[0] - x);

    let residual = |a: f64, b: f64| -> Result<f64> {
        let s = SubsetIndicator::intervals(&[(x - a, x), (x, x + b)]);
        Ok(restricted_nonlocal_gradient(field, x_star, config, &s)?[0])
    };

    let full = residual(a_max, b_max)?;
    if full.abs() <= RESIDUAL_TOL {
        return Ok(SubsetIndicator::intervals(&[(x - a_max, x), (x, x + b_max)]));
    }
    let right = residual(0.0, b_max)?;
    let left = residual(a_max, 0.0)?;
    if right > 0.0 && full < 0.0 {
        let a = bisect(|a| residual(a, b_max), 0.0, a_max, right)?;
        return Ok(SubsetIndicator::intervals(&[(x - a, x), (x, x + b_max)]));
    }
    if left < 0.0 && full > 0.0 {
        let b = bisect(|b| residual(a_max, b), 0.0, b_max, left)?;
        return Ok(SubsetIndicator::intervals(&[(x - a_max, x), (x, x + b)]));
    }
    Err(Error::NoBracket { x_star: x })
}

/// Root of `f` on `[lo, hi]` given `f(lo) = f_lo` and a sign change.
fn bisect(mut f: impl FnMut(f64) -> Result<f64>, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<f64> {
    let lo_sign = f_lo.signum();
    let mut best = (f_lo.abs(), lo);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v.abs() < best.0 {
            best = (v.abs(), mid);
        }
        if v.abs() <= RESIDUAL_TOL || hi - lo <= f64::EPSILON * hi.abs() {
            break;
        }
        if v.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}
