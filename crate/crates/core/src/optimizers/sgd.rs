use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{OptimizerTrace, Termination};
use crate::error::{Error, Result};
use crate::geometry::{Point, ScalarField};
use crate::kernels::{RadialKernel, MAX_ATTEMPTS};
use crate::operators::{difference_quotient, nonlocal_gradient, NonlocalConfig};

/// Parameters of ε-stochastic subgradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    /// `B`: radius of the ball containing the minimizer.
    pub radius_bound: f64,
    /// `M`: bound on the sampled direction norms.
    pub lipschitz_bound: f64,
    /// `K`.
    pub iterations: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            radius_bound: 1.0,
            lipschitz_bound: 2.0,
            iterations: 100,
            epsilon: 0.02,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.radius_bound) && ok(self.lipschitz_bound) && ok(self.epsilon) && self.iterations > 0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "B, M, K and ε must all be positive, got B = {}, M = {}, K = {}, ε = {}",
                self.radius_bound, self.lipschitz_bound, self.iterations, self.epsilon
            )))
        }
    }

    /// `α = √(B² / (M² K))`.
    pub fn step_size(&self) -> f64 {
        (self.radius_bound.powi(2) / (self.lipschitz_bound.powi(2) * self.iterations as f64)).sqrt()
    }

    /// `BM/√K + ε`, the bound on `E[u(x̄)] - u(x*)`.
    pub fn gap_bound(&self) -> f64 {
        self.radius_bound * self.lipschitz_bound / (self.iterations as f64).sqrt() + self.epsilon
    }
}

/// Iterations needed for an expected gap `ε̂ > ε`: `⌈B²M² / (ε̂ - ε)²⌉`.
pub fn required_iterations(b: f64, m: f64, eps_hat: f64, eps: f64) -> Result<usize> {
    if !(eps_hat > eps) {
        return Err(Error::InvalidArgument(format!(
            "target gap {eps_hat} must exceed ε = {eps}"
        )));
    }
    // round away representation noise before taking the ceiling
    let k = (b * b * m * m / (eps_hat - eps).powi(2) * 1e9).round() / 1e9;
    Ok(k.ceil() as usize)
}

/// Algorithm: start at the centre of Ω, draw `y = x^k - h` with `h ~ ρ_n`
/// (redrawn until `y ∈ Ω`), step along `g^k = D·k_u(x^k, y)` and return the
/// average of the iterates.
pub fn epsilon_sgd(field: &ScalarField, config: &SgdConfig, kernel: &RadialKernel) -> Result<(Point, OptimizerTrace)> {
    config.validate()?;
    if kernel.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: kernel.dim(),
        });
    }
    let domain = field.domain();
    let center = domain.center();
    let alpha = config.step_size();
    let d = field.dim() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = OptimizerTrace::new();
    let mut x = center.clone();
    let mut sum = DVector::zeros(field.dim());
    trace.termination = Termination::MaxIters;
    for k in 0..config.iterations {
        let y = draw_inside(field, &x, kernel, &mut rng).map_err(|e| e.at_iteration(k))?;
        let g = difference_quotient(field, &x, &y).map_err(|e| e.at_iteration(k))? * d;
        let value = field.value(&x).map_err(|e| e.at_iteration(k))?;
        if k > 0 {
            trace.steps_taken.push(alpha);
        }
        trace.push(x.clone(), value, g.norm());
        sum += &x;
        let next = &x - g * alpha;
        if !next.iter().all(|v| v.is_finite()) || (&next - &center).norm() > 10.0 * config.radius_bound {
            trace.termination = Termination::Diverged;
            trace.offending_point = Some(next);
            break;
        }
        if k + 1 < config.iterations && !domain.contains_unchecked(&next) {
            trace.termination = Termination::LeftDomain;
            trace.offending_point = Some(next);
            break;
        }
        x = next;
    }
    let x_bar = sum / trace.len() as f64;
    Ok((x_bar, trace))
}

fn draw_inside(field: &ScalarField, x: &Point, kernel: &RadialKernel, rng: &mut ChaCha8Rng) -> Result<Point> {
    for _ in 0..MAX_ATTEMPTS {
        let y = x - kernel.sample_offset(rng)?;
        if field.domain().contains_unchecked(&y) && y != *x {
            return Ok(y);
        }
    }
    Err(Error::SamplerExhausted { attempts: MAX_ATTEMPTS })
}

/// Outcome of checking `u(y) - u(x) ≥ (y - x)ᵀ ∇_n u(x) - ε` at probe points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgradientReport {
    pub passed: bool,
    /// Smallest `u(y) - u(x) - (y - x)ᵀ∇_n u(x) + ε` over the probes.
    pub worst_margin: f64,
    pub worst_probe: Option<Vec<f64>>,
    pub violations: usize,
}

pub fn epsilon_subgradient_check(
    field: &ScalarField,
    x: &Point,
    config: &NonlocalConfig,
    probes: &[Point],
    epsilon: f64,
) -> Result<SubgradientReport> {
    let g = nonlocal_gradient(field, x, config)?;
    let ux = field.value(x)?;
    let mut report = SubgradientReport {
        passed: true,
        worst_margin: f64::INFINITY,
        worst_probe: None,
        violations: 0,
    };
    for y in probes {
        let margin = field.value(y)? - ux - (y - x).dot(&g) + epsilon;
        if margin < 0.0 {
            report.violations += 1;
            report.passed = false;
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_probe = Some(y.iter().copied().collect());
        }
    }
    Ok(report)
}
