//! Nonlocal gradient descent (fixed steps and exact line search), ε-SGD,
//! nonlocal Newton and their classical counterparts.

mod descent;
mod local;
mod newton;
mod sgd;
mod trace;

pub use descent::{line_search, nlgd_fixed, nlgd_linesearch};
pub use local::{local_counterpart, LocalMethod};
pub use newton::{nonlocal_newton, BetaSchedule, CONDITION_LIMIT};
pub use sgd::{epsilon_sgd, epsilon_subgradient_check, required_iterations, SgdConfig, SubgradientReport};
pub use trace::{OptimizerTrace, Termination};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField};

/// Step sizes `α^k`, `k = 0, 1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Fixed {
        alpha: f64,
    },
    /// Explicit steps; the last one repeats.
    Sequence {
        alphas: Vec<f64>,
    },
    /// `α₀ q^k`, summing to `α₀ / (1 - q)`.
    SummableGeometric {
        alpha0: f64,
        q: f64,
    },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Fixed { alpha: 0.1 }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match self {
            StepSchedule::Fixed { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                bad(format!("step must be positive, got {alpha}"))
            }
            StepSchedule::Sequence { alphas } if alphas.is_empty() => bad("empty step sequence".into()),
            StepSchedule::Sequence { alphas } if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) => {
                bad("every step must be positive".into())
            }
            StepSchedule::SummableGeometric { alpha0, q }
                if !(*alpha0 > 0.0 && alpha0.is_finite() && *q > 0.0 && *q < 1.0) =>
            {
                bad(format!(
                    "geometric schedule needs α₀ > 0 and 0 < q < 1, got α₀ = {alpha0}, q = {q}"
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn step(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Fixed { alpha } => *alpha,
            StepSchedule::Sequence { alphas } => alphas[k.min(alphas.len() - 1)],
            StepSchedule::SummableGeometric { alpha0, q } => alpha0 * q.powi(k as i32),
        }
    }

    /// `Σ_{k < count} α^k`.
    pub fn partial_sum(&self, count: usize) -> f64 {
        (0..count).map(|k| self.step(k)).sum()
    }

    /// Whether every partial sum stays below 1, the condition under which
    /// iterates stay within `‖x⁰‖ + D·M`.
    pub fn sum_below_one(&self, count: usize) -> bool {
        match self {
            StepSchedule::SummableGeometric { alpha0, q } => alpha0 / (1.0 - q) < 1.0,
            _ => self.partial_sum(count) < 1.0,
        }
    }
}

const DIVERGENCE_STREAK: usize = 3;

/// Shared iteration loop for first-order methods: `step(k, x, g)` returns
/// the next point and the step size used.
pub(crate) fn run_descent(
    field: &ScalarField,
    x0: &Point,
    max_iters: usize,
    grad_tol: f64,
    mut gradient: impl FnMut(&Point) -> Result<DVector<f64>>,
    mut step: impl FnMut(usize, &Point, &DVector<f64>) -> Result<(Point, f64)>,
) -> Result<OptimizerTrace> {
    let domain = field.domain();
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x0.len(),
        });
    }
    domain.require_interior(x0)?;
    let mut trace = OptimizerTrace::new();
    let mut x = x0.clone();
    let mut g = gradient(&x).map_err(|e| e.at_iteration(0))?;
    trace.push(x.clone(), field.value(&x).map_err(|e| e.at_iteration(0))?, g.norm());
    if g.norm() < grad_tol {
        trace.termination = Termination::GradTol;
        return Ok(trace);
    }
    let mut streak = 0;
    for k in 0..max_iters {
        let (next, alpha) = step(k, &x, &g).map_err(|e| e.at_iteration(k))?;
        if next.iter().any(|v| !v.is_finite()) {
            trace.termination = Termination::Diverged;
            trace.offending_point = Some(next);
            return Ok(trace);
        }
        if !domain.contains_unchecked(&next) {
            trace.termination = Termination::LeftDomain;
            trace.offending_point = Some(next);
            return Ok(trace);
        }
        let value = field.eval(&next);
        let prev = *trace.objective_values.last().unwrap_or(&value);
        x = next;
        g = gradient(&x).map_err(|e| e.at_iteration(k + 1))?;
        trace.steps_taken.push(alpha);
        trace.push(x.clone(), value, g.norm());
        if !value.is_finite() || !g.norm().is_finite() {
            trace.termination = Termination::Diverged;
            return Ok(trace);
        }
        if value > prev + 1e-12 * (1.0 + prev.abs()) {
            streak += 1;
            if streak >= DIVERGENCE_STREAK {
                trace.termination = Termination::Diverged;
                return Ok(trace);
            }
        } else {
            streak = 0;
        }
        if g.norm() < grad_tol {
            trace.termination = Termination::GradTol;
            return Ok(trace);
        }
    }
    trace.termination = Termination::MaxIters;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedules() {
        let s = StepSchedule::Sequence { alphas: vec![0.3, 0.2] };
        assert_eq!([s.step(0), s.step(1), s.step(9)], [0.3, 0.2, 0.2]);
        let g = StepSchedule::SummableGeometric { alpha0: 0.4, q: 0.5 };
        assert!(g.sum_below_one(1000));
        assert!((g.partial_sum(60) - 0.8).abs() < 1e-12);
        assert!(!StepSchedule::SummableGeometric { alpha0: 0.6, q: 0.5 }.sum_below_one(10));
        assert!(StepSchedule::Fixed { alpha: 0.0 }.validate().is_err());
        assert!(StepSchedule::SummableGeometric { alpha0: 0.1, q: 1.0 }
            .validate()
            .is_err());
        assert!(StepSchedule::Sequence { alphas: vec![] }.validate().is_err());
    }

    #[test]
    fn schedule_serde() {
        let s: StepSchedule = serde_json::from_str(r#"{"kind":"summable_geometric","alpha0":0.3,"q":0.6}"#).unwrap();
        assert_eq!(s, StepSchedule::SummableGeometric { alpha0: 0.3, q: 0.6 });
        assert!(serde_json::from_str::<StepSchedule>(r#"{"kind":"fixed","alpha":0.1,"beta":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn geometric_steps_positive_and_decreasing(a in 1e-3f64..1.0, q in 0.01f64..0.99, k in 0usize..200) {
            let s = StepSchedule::SummableGeometric { alpha0: a, q };
            prop_assert!(s.step(k) > 0.0 || a * q.powi(k as i32) == 0.0);
            prop_assert!(s.step(k + 1) <= s.step(k));
        }
    }
}
