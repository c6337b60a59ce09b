use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{run_descent, OptimizerTrace};
use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField};
use crate::operators::{nonlocal_gradient, nonlocal_hessian, H4Constant, HessianVariant, NonlocalConfig};

/// Hessians with a 1-norm condition estimate above this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Damping `β^k` of the Newton step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSchedule {
    Fixed {
        beta: f64,
    },
    /// Start at `initial` and halve while the objective does not decrease.
    Backtracking {
        initial: f64,
        max_halvings: u32,
    },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Backtracking {
            initial: 1.0,
            max_halvings: 30,
        }
    }
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        let beta = match self {
            BetaSchedule::Fixed { beta } => *beta,
            BetaSchedule::Backtracking { initial, .. } => *initial,
        };
        if beta > 0.0 && beta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("β must be positive, got {beta}")))
        }
    }

    pub(crate) fn apply(&self, field: &ScalarField, x: &Point, d: &DVector<f64>) -> (Point, f64) {
        match *self {
            BetaSchedule::Fixed { beta } => (x - d * beta, beta),
            BetaSchedule::Backtracking { initial, max_halvings } => {
                let ux = field.eval(x);
                let mut beta = initial;
                for _ in 0..max_halvings {
                    let cand = x - d * beta;
                    if field.domain().contains_unchecked(&cand) && field.eval(&cand) <= ux {
                        return (cand, beta);
                    }
                    beta *= 0.5;
                }
                (x - d * beta, beta)
            }
        }
    }
}

/// Solve `H d = g` by LU with partial pivoting, rejecting ill-conditioned `H`.
pub(crate) fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, iteration: usize) -> Result<DVector<f64>> {
    let lu = h.clone().lu();
    let singular = |condition| Error::SingularHessian { iteration, condition };
    let inv = lu.try_inverse().ok_or_else(|| singular(f64::INFINITY))?;
    let condition = column_norm(h) * column_norm(&inv);
    if !(condition <= CONDITION_LIMIT) {
        return Err(singular(condition));
    }
    lu.solve(g).ok_or_else(|| singular(condition))
}

/// Induced 1-norm (maximum absolute column sum).
fn column_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

/// `x^{k+1} = x^k - β^k (H⁴_n u(x^k))⁻¹ ∇_n u(x^k)`.
pub fn nonlocal_newton(
    field: &ScalarField,
    x0: &Point,
    config: &NonlocalConfig,
    beta: &BetaSchedule,
    max_iters: usize,
    grad_tol: f64,
) -> Result<OptimizerTrace> {
    beta.validate()?;
    let variant = HessianVariant::H4 {
        constant: H4Constant::Moment,
    };
    run_descent(
        field,
        x0,
        max_iters,
        grad_tol,
        |x| nonlocal_gradient(field, x, config),
        |k, x, g| {
            let h = nonlocal_hessian(field, x, variant, config)?;
            let d = newton_direction(&h, g, k)?;
            Ok(beta.apply(field, x, &d))
        },
    )
}
