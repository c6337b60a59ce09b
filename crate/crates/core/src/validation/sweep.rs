use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::catalog_field;
use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Point, ScalarField};
use crate::kernels::{KernelFamily, KernelSpec, RadialKernel};
use crate::operators::{
    nonlocal_gradient, nonlocal_hessian, taylor_affine, H4Constant, HessianVariant, NonlocalConfig,
};
use crate::optimizers::{
    epsilon_sgd, local_counterpart, nlgd_fixed, nonlocal_newton, BetaSchedule, LocalMethod, SgdConfig, StepSchedule,
};
use crate::quadrature::{PolarSettings, PvPolicy};

/// Registered convergence checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    GradientLocalization,
    HessianLocalization,
    TaylorRemainder,
    IterateTracking,
    SgdBound,
    NewtonFloor,
    MomentC,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::GradientLocalization,
        Check::HessianLocalization,
        Check::TaylorRemainder,
        Check::IterateTracking,
        Check::SgdBound,
        Check::NewtonFloor,
        Check::MomentC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::GradientLocalization => "gradient-localization",
            Check::HessianLocalization => "hessian-localization",
            Check::TaylorRemainder => "taylor-remainder",
            Check::IterateTracking => "iterate-tracking",
            Check::SgdBound => "sgd-bound",
            Check::NewtonFloor => "newton-floor",
            Check::MomentC => "moment-c",
        }
    }

    /// Scale indices swept when none are given.
    pub fn default_n_values(self) -> Vec<u32> {
        match self {
            Check::NewtonFloor => vec![8, 16, 32],
            Check::SgdBound => vec![32],
            _ => vec![4, 8, 16, 32],
        }
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCheck(s.to_string()))
    }
}

/// Everything a sweep needs besides the scale indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub dim: usize,
    pub field: String,
    pub family: KernelFamily,
    pub base_scale: f64,
    pub polar: PolarSettings,
    pub probes: usize,
    pub seed: u64,
    /// Starting point relative to the unit box, repeated over coordinates.
    pub start: f64,
    pub steps: usize,
    pub schedule: StepSchedule,
    pub sgd: SgdConfig,
    pub sgd_seeds: usize,
    /// Minimizer of the ε-SGD objective `‖x - s·e₁‖²` along the first axis.
    pub sgd_shift: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self::defaults_for(Check::GradientLocalization)
    }
}

impl SweepSettings {
    /// Calibrated defaults of each check.
    pub fn defaults_for(check: Check) -> Self {
        let base = Self {
            dim: 1,
            field: "sin_product".into(),
            family: KernelFamily::Gaussian,
            base_scale: 0.1,
            polar: PolarSettings {
                radial: 512,
                angular: 32,
            },
            probes: 50,
            seed: 0,
            start: 0.05,
            steps: 20,
            schedule: StepSchedule::SummableGeometric { alpha0: 0.4, q: 0.9 },
            sgd: SgdConfig {
                radius_bound: 1.0,
                lipschitz_bound: 2.0,
                iterations: 100,
                epsilon: 0.02,
                seed: 0,
            },
            sgd_seeds: 400,
            sgd_shift: 0.0,
        };
        match check {
            Check::GradientLocalization => base,
            Check::HessianLocalization => Self {
                field: "bump".into(),
                ..base
            },
            Check::TaylorRemainder => Self {
                field: "bump".into(),
                probes: 200,
                ..base
            },
            Check::IterateTracking => Self {
                field: "quadratic".into(),
                base_scale: 0.5,
                ..base
            },
            Check::SgdBound => Self {
                dim: 2,
                field: "norm_squared".into(),
                polar: PolarSettings::default(),
                ..base
            },
            Check::NewtonFloor => Self {
                dim: 2,
                field: "quartic".into(),
                polar: PolarSettings::default(),
                steps: 12,
                start: 0.3,
                ..base
            },
            Check::MomentC => Self {
                dim: 2,
                field: "constant".into(),
                polar: PolarSettings::default(),
                probes: 1,
                ..base
            },
        }
    }

    fn kernel(&self, n: u32) -> Result<RadialKernel> {
        KernelSpec {
            family: self.family,
            base_scale: self.base_scale,
            n,
        }
        .build(self.dim)
    }

    fn config(&self, n: u32) -> Result<NonlocalConfig> {
        NonlocalConfig::with_settings(self.kernel(n)?, self.polar, PvPolicy::default())
    }
}

/// Per-scale errors of one check with the verdict derived from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub check: Check,
    pub params: Vec<u32>,
    pub errors: Vec<f64>,
    /// Where each error was attained.
    pub locations: Vec<Vec<f64>>,
    pub monotone: bool,
    /// Per-scale bound the errors are compared against, where the check has one.
    pub limits: Option<Vec<f64>>,
    pub passed: bool,
}

/// Absolute size of the single increase a strictly decreasing sequence may show.
pub const NOISE_FLOOR: f64 = 1e-9;

/// Strictly decreasing, tolerating one increase of at most [`NOISE_FLOOR`].
pub fn is_monotone_decreasing(errors: &[f64]) -> bool {
    let mut inversions = 0;
    for w in errors.windows(2) {
        if w[1] >= w[0] {
            if w[1] - w[0] > NOISE_FLOOR {
                return false;
            }
            inversions += 1;
        }
    }
    inversions <= 1
}

impl SweepReport {
    fn new(check: Check, params: Vec<u32>, results: Vec<(f64, Vec<f64>, Option<f64>)>) -> Self {
        let errors: Vec<f64> = results.iter().map(|r| r.0).collect();
        let locations = results.iter().map(|r| r.1.clone()).collect();
        let limits: Option<Vec<f64>> = results.iter().map(|r| r.2).collect();
        let monotone = is_monotone_decreasing(&errors);
        let last = errors.last().copied().unwrap_or(f64::NAN);
        let passed = match check {
            Check::GradientLocalization => monotone && last <= 1e-3,
            Check::IterateTracking => monotone && last <= 1e-2,
            Check::HessianLocalization | Check::TaylorRemainder | Check::NewtonFloor => monotone,
            Check::SgdBound => limits
                .as_ref()
                .is_some_and(|l| errors.iter().zip(l).all(|(e, b)| e <= b)),
            Check::MomentC => errors.iter().all(|e| *e <= 1e-6),
        };
        Self {
            check,
            params,
            errors,
            locations,
            monotone,
            limits,
            passed,
        }
    }

    /// `param,error,location` rows, coordinates separated by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,error,location\n");
        for ((p, e), loc) in self.params.iter().zip(&self.errors).zip(&self.locations) {
            let loc: Vec<String> = loc.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{p},{e:.16e},{}", loc.join(";"));
        }
        out
    }
}

/// Run `check` at each scale index and summarize.
pub fn convergence_sweep(check: Check, n_values: &[u32], settings: &SweepSettings) -> Result<SweepReport> {
    if n_values.is_empty() {
        return Err(Error::InvalidArgument("no scale indices to sweep".into()));
    }
    let results = n_values
        .par_iter()
        .map(|&n| run_one(check, n, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::new(check, n_values.to_vec(), results))
}

/// Name-based entry point; unknown names are rejected.
pub fn convergence_sweep_named(check: &str, n_values: &[u32], settings: &SweepSettings) -> Result<SweepReport> {
    convergence_sweep(check.parse()?, n_values, settings)
}

type One = (f64, Vec<f64>, Option<f64>);

fn run_one(check: Check, n: u32, s: &SweepSettings) -> Result<One> {
    match check {
        Check::GradientLocalization => gradient_localization(n, s),
        Check::HessianLocalization => hessian_localization(n, s),
        Check::TaylorRemainder => taylor_remainder(n, s),
        Check::IterateTracking => iterate_tracking(n, s),
        Check::SgdBound => sgd_bound(n, s),
        Check::NewtonFloor => newton_floor(n, s),
        Check::MomentC => moment_c(n, s),
    }
}

fn unit_field(s: &SweepSettings) -> Result<ScalarField> {
    Ok(catalog_field(&s.field, &BoxDomain::unit(s.dim))?.field)
}

/// Equispaced probes on `[0.1, 0.9]^D` (a tensor grid with `probes` points
/// per axis in 1-D, about `probes^{1/D}` otherwise).
fn probe_points(s: &SweepSettings) -> Vec<Point> {
    let per_axis = ((s.probes as f64).powf(1.0 / s.dim as f64).round() as usize).max(1);
    let coord = |i: usize| {
        if per_axis == 1 {
            0.5
        } else {
            0.1 + 0.8 * i as f64 / (per_axis - 1) as f64
        }
    };
    let total = per_axis.pow(s.dim as u32);
    (0..total)
        .map(|mut k| {
            Point::from_fn(s.dim, |_, _| {
                let c = coord(k % per_axis);
                k /= per_axis;
                c
            })
        })
        .collect()
}

fn worst(results: impl Iterator<Item = Result<(f64, Point)>>) -> Result<One> {
    let mut best: Option<(f64, Point)> = None;
    for r in results {
        let (e, x) = r?;
        if best.as_ref().is_none_or(|b| e > b.0) {
            best = Some((e, x));
        }
    }
    let (e, x) = best.ok_or_else(|| Error::InvalidArgument("no probes".into()))?;
    Ok((e, x.iter().copied().collect(), None))
}

fn gradient_localization(n: u32, s: &SweepSettings) -> Result<One> {
    let u = unit_field(s)?;
    let cfg = s.config(n)?;
    worst(probe_points(s).into_iter().map(|x| {
        let g = nonlocal_gradient(&u, &x, &cfg)?;
        let exact = u
            .analytic_gradient(&x)
            .ok_or(Error::MissingDerivative("sweep field needs a gradient"))?;
        Ok(((g - exact).amax(), x))
    }))
}

fn hessian_localization(n: u32, s: &SweepSettings) -> Result<One> {
    let u = unit_field(s)?;
    let cfg = s.config(n)?;
    let variant = HessianVariant::H4 {
        constant: H4Constant::Moment,
    };
    worst(probe_points(s).into_iter().map(|x| {
        let h = nonlocal_hessian(&u, &x, variant, &cfg)?;
        let exact = u
            .analytic_hessian(&x)
            .ok_or(Error::MissingDerivative("sweep field needs a Hessian"))?;
        Ok(((h - exact).amax(), x))
    }))
}

/// `sup |r_n(x₀, x) - r(x₀, x)|` over seeded pairs in `[0.05, 0.95]^D`.
fn taylor_remainder(n: u32, s: &SweepSettings) -> Result<One> {
    let u = unit_field(s)?;
    let cfg = s.config(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let pairs: Vec<(Point, Point)> = (0..s.probes)
        .map(|_| {
            let a = Point::from_fn(s.dim, |_, _| rng.random_range(0.05..0.95));
            let b = Point::from_fn(s.dim, |_, _| rng.random_range(0.05..0.95));
            (a, b)
        })
        .collect();
    worst(pairs.into_iter().map(|(x0, x)| {
        let t = taylor_affine(&u, &x0, &cfg)?;
        Ok(((t.remainder(&x)? - t.classical_remainder(&x)?).abs(), x0))
    }))
}

fn start_point(s: &SweepSettings) -> Point {
    Point::from_element(s.dim, s.start)
}

/// Largest gap between nonlocal and classical gradient-descent iterates.
fn iterate_tracking(n: u32, s: &SweepSettings) -> Result<One> {
    let u = unit_field(s)?;
    let cfg = s.config(n)?;
    let x0 = start_point(s);
    let nl = nlgd_fixed(&u, &x0, &cfg, &s.schedule, s.steps, 0.0)?;
    let local = local_counterpart(
        &u,
        &x0,
        &LocalMethod::GradientDescent {
            schedule: s.schedule.clone(),
        },
        s.steps,
        0.0,
    )?;
    if nl.len() != local.len() {
        return Err(Error::InvalidArgument(format!(
            "runs stopped early ({:?} vs {:?})",
            nl.termination, local.termination
        )));
    }
    worst(
        nl.iterates
            .iter()
            .zip(&local.iterates)
            .map(|(a, b)| Ok(((a - b).norm(), a.clone()))),
    )
}

/// Mean optimality gap of ε-SGD on `‖x - s·e₁‖²` over `(-1, 1)^D`, with the
/// bound `BM/√K + ε + 3·stderr` as the limit.
fn sgd_bound(n: u32, s: &SweepSettings) -> Result<One> {
    let shift = s.sgd_shift;
    let u = ScalarField::new(BoxDomain::cube(s.dim, -1.0, 1.0), move |x| {
        x.norm_squared() - 2.0 * shift * x[0] + shift * shift
    });
    let kernel = s.kernel(n)?;
    s.sgd.validate()?;
    if s.sgd_seeds < 2 {
        return Err(Error::InvalidArgument("need at least two seeds".into()));
    }
    let runs = (0..s.sgd_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SgdConfig {
                seed: s.seed.wrapping_add(i),
                ..s.sgd.clone()
            };
            let (x_bar, _) = epsilon_sgd(&u, &cfg, &kernel)?;
            Ok((u.value(&x_bar)?, x_bar))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = runs.len() as f64;
    let mean = runs.iter().map(|r| r.0).sum::<f64>() / m;
    let var = runs.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let stderr = (var / m).sqrt();
    let worst_x = runs
        .iter()
        .fold(&runs[0], |a, b| if b.0 > a.0 { b } else { a })
        .1
        .iter()
        .copied()
        .collect();
    Ok((mean, worst_x, Some(s.sgd.gap_bound() + 3.0 * stderr)))
}

/// Terminal distance of undamped nonlocal Newton to the true minimizer.
fn newton_floor(n: u32, s: &SweepSettings) -> Result<One> {
    let entry = catalog_field(&s.field, &BoxDomain::unit(s.dim))?;
    let x_star = entry
        .minimizer
        .ok_or_else(|| Error::InvalidArgument(format!("field `{}` has no known minimizer", s.field)))?;
    let cfg = s.config(n)?;
    let t = nonlocal_newton(
        &entry.field,
        &start_point(s),
        &cfg,
        &BetaSchedule::Fixed { beta: 1.0 },
        s.steps,
        0.0,
    )?;
    let last = t.last_iterate().expect("trace holds the start point");
    Ok(((last - &x_star).norm(), last.iter().copied().collect(), None))
}

/// `max_i |D·c_n^i(x) - 1|` at the domain centre.
fn moment_c(n: u32, s: &SweepSettings) -> Result<One> {
    let dom = BoxDomain::unit(s.dim);
    let x = dom.center();
    let diag = s.kernel(n)?.moment_diagnostics(&dom, &x)?;
    Ok((diag.deviation(), x.iter().copied().collect(), None))
}
