use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::descent::exact_step;
use super::newton::{newton_direction, BetaSchedule};
use super::{run_descent, OptimizerTrace, StepSchedule};
use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField};

/// Classical method used as the reference for a nonlocal run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum LocalMethod {
    GradientDescent { schedule: StepSchedule },
    GradientDescentLineSearch { cap: f64 },
    Newton { beta: BetaSchedule },
}

fn fd_step(x: &Point) -> f64 {
    1e-5 * (1.0 + x.norm())
}

/// Analytic gradient, or central differences with step `1e-5·(1 + ‖x‖)`.
pub(crate) fn classical_gradient(field: &ScalarField, x: &Point) -> Result<DVector<f64>> {
    if let Some(g) = field.analytic_gradient(x) {
        return Ok(g);
    }
    let h = fd_step(x);
    let mut y = x.clone();
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let up = field.value(&y)?;
        y[i] = x[i] - h;
        let um = field.value(&y)?;
        y[i] = x[i];
        g[i] = (up - um) / (2.0 * h);
    }
    Ok(g)
}

/// Analytic Hessian, or central differences of the analytic gradient.
pub(crate) fn classical_hessian(field: &ScalarField, x: &Point) -> Result<DMatrix<f64>> {
    if let Some(h) = field.analytic_hessian(x) {
        return Ok(h);
    }
    if !field.has_gradient() {
        return Err(Error::MissingDerivative("Newton needs an analytic Hessian or gradient"));
    }
    let h = fd_step(x);
    let dim = x.len();
    let mut y = x.clone();
    let mut out = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        y[j] = x[j] + h;
        let gp = field.analytic_gradient(&y).expect("gradient checked above");
        y[j] = x[j] - h;
        let gm = field.analytic_gradient(&y).expect("gradient checked above");
        y[j] = x[j];
        out.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    Ok((&out + out.transpose()) * 0.5)
}

/// Classical gradient descent, line search or Newton with the same trace
/// format as the nonlocal methods.
pub fn local_counterpart(
    field: &ScalarField,
    x0: &Point,
    method: &LocalMethod,
    max_iters: usize,
    grad_tol: f64,
) -> Result<OptimizerTrace> {
    match method {
        LocalMethod::GradientDescent { schedule } => {
            schedule.validate()?;
            run_descent(
                field,
                x0,
                max_iters,
                grad_tol,
                |x| classical_gradient(field, x),
                |k, x, g| {
                    let a = schedule.step(k);
                    Ok((x - g * a, a))
                },
            )
        }
        LocalMethod::GradientDescentLineSearch { cap } => run_descent(
            field,
            x0,
            max_iters,
            grad_tol,
            |x| classical_gradient(field, x),
            |_, x, g| exact_step(field, x, g, *cap),
        ),
        LocalMethod::Newton { beta } => {
            beta.validate()?;
            run_descent(
                field,
                x0,
                max_iters,
                grad_tol,
                |x| classical_gradient(field, x),
                |k, x, g| {
                    let h = classical_hessian(field, x)?;
                    let d = newton_direction(&h, g, k)?;
                    Ok(beta.apply(field, x, &d))
                },
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxDomain;
    use crate::optimizers::Termination;

    #[test]
    fn exact_newton_converges_in_one_step() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_column_slice(&[-0.5, 0.3]);
        let (a1, a2, a3, b1, b2) = (a.clone(), a.clone(), a.clone(), b.clone(), b.clone());
        let u = ScalarField::new(BoxDomain::cube(2, -1.0, 1.0), move |x| {
            0.5 * (x.transpose() * &a1 * x)[0] + b1.dot(x)
        })
        .with_gradient(move |x| &a2 * x + &b2)
        .with_hessian(move |_| a3.clone());
        let x_star = -a.clone().lu().solve(&b).unwrap();
        let t = local_counterpart(
            &u,
            &Point::from_column_slice(&[0.5, -0.5]),
            &LocalMethod::Newton {
                beta: BetaSchedule::Fixed { beta: 1.0 },
            },
            5,
            1e-12,
        )
        .unwrap();
        assert!((&t.iterates[1] - &x_star).norm() < 1e-12);
        assert_eq!(t.termination, Termination::GradTol);
    }

    #[test]
    fn unit_step_on_half_square() {
        let u = ScalarField::new(BoxDomain::cube(1, -1.0, 1.0), |x| 0.5 * x[0] * x[0]);
        let t = local_counterpart(
            &u,
            &Point::from_element(1, 0.7),
            &LocalMethod::GradientDescent {
                schedule: StepSchedule::Fixed { alpha: 1.0 },
            },
            3,
            1e-9,
        )
        .unwrap();
        assert!(t.iterates[1][0].abs() < 1e-9);
    }

    #[test]
    fn oversized_step_diverges() {
        let c = 4.0;
        let u = ScalarField::new(BoxDomain::cube(1, -1e6, 1e6), move |x| 0.5 * c * x[0] * x[0])
            .with_gradient(move |x| x * c);
        let t = local_counterpart(
            &u,
            &Point::from_element(1, 0.1),
            &LocalMethod::GradientDescent {
                schedule: StepSchedule::Fixed { alpha: 2.5 / c },
            },
            100,
            1e-12,
        )
        .unwrap();
        assert_eq!(t.termination, Termination::Diverged);
    }

    #[test]
    fn newton_without_derivatives_is_rejected() {
        let u = ScalarField::new(BoxDomain::unit(1), |x| x[0] * x[0]);
        let err = local_counterpart(
            &u,
            &Point::from_element(1, 0.7),
            &LocalMethod::Newton {
                beta: BetaSchedule::default(),
            },
            3,
            1e-9,
        )
        .unwrap_err();
        assert!(matches!(err, Error::AtIteration { source, .. } if matches!(*source, Error::MissingDerivative(_))));
    }

    #[test]
    fn fd_gradient_fallback() {
        let u = ScalarField::new(BoxDomain::unit(2), |x| (x[0] * 2.0).sin() + x[1] * x[1]);
        let g = classical_gradient(&u, &Point::from_column_slice(&[0.3, 0.4])).unwrap();
        assert!((g[0] - 2.0 * 0.6f64.cos()).abs() < 1e-8);
        assert!((g[1] - 0.8).abs() < 1e-8);
    }
}
