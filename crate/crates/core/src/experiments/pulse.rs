use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Point, ScalarField};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::operators::{gradient_closed, NonlocalConfig};
use crate::optimizers::{OptimizerTrace, Termination};
use crate::quadrature::{PolarSettings, PvPolicy};

/// How `‖f_θ - g‖` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Square root of the measure of the symmetric difference of the supports.
    #[default]
    Exact,
    /// Rectangle rule at the midpoints of the signal grid.
    Grid,
}

/// Translates `f_θ = 1_{[θ, θ + w] ∩ [0, 1]}` of a rectangular pulse in `L²([0, 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseManifold {
    pub pulse_width: f64,
    pub signal_grid: usize,
    pub template_theta: f64,
    pub norm: NormMode,
}

impl Default for PulseManifold {
    fn default() -> Self {
        Self {
            pulse_width: 0.125,
            signal_grid: 4096,
            template_theta: 0.5,
            norm: NormMode::Exact,
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("θ = {theta} lies outside [0, 1]")))
    }
}

impl PulseManifold {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pulse_width) {
            return Err(Error::InvalidArgument(format!(
                "pulse width must lie in [0, 1), got {}",
                self.pulse_width
            )));
        }
        if self.signal_grid == 0 {
            return Err(Error::InvalidArgument("signal grid must be nonempty".into()));
        }
        check_theta(self.template_theta)
    }

    fn support(&self, theta: f64) -> (f64, f64) {
        (theta, (theta + self.pulse_width).min(1.0))
    }

    /// `‖f_a - f_b‖_{L²([0, 1])}` for `a, b ∈ [0, 1]`.
    pub fn distance(&self, a: f64, b: f64) -> Result<f64> {
        check_theta(a)?;
        check_theta(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    fn distance_unchecked(&self, a: f64, b: f64) -> f64 {
        let (a0, a1) = self.support(a);
        let (b0, b1) = self.support(b);
        match self.norm {
            NormMode::Exact => {
                let overlap = (a1.min(b1) - a0.max(b0)).max(0.0);
                ((a1 - a0) + (b1 - b0) - 2.0 * overlap).max(0.0).sqrt()
            }
            NormMode::Grid => {
                let n = self.signal_grid;
                let h = 1.0 / n as f64;
                let inside = |t: f64, lo: f64, hi: f64| t >= lo && t <= hi;
                let count = (0..n)
                    .filter(|&i| {
                        let t = (i as f64 + 0.5) * h;
                        inside(t, a0, a1) != inside(t, b0, b1)
                    })
                    .count();
                (count as f64 * h).sqrt()
            }
        }
    }

    /// The objective as a field on `Θ = [0, 1]`.
    pub fn field(&self) -> ScalarField {
        let m = self.clone();
        let target = self.template_theta;
        ScalarField::new(BoxDomain::unit(1), move |t| {
            m.distance_unchecked(t[0].clamp(0.0, 1.0), target)
        })
    }
}

/// `𝓔(θ) = ‖f_θ - g‖_{L²([0, 1])}` with `g = f_{θ*}`.
pub fn pulse_objective(manifold: &PulseManifold, theta: f64) -> Result<f64> {
    manifold.distance(theta, manifold.template_theta)
}

/// Least-squares slope of `log(‖f_{c+δ} - f_c‖ / δ)` against `log δ`.
pub fn holder_exponent_fit(manifold: &PulseManifold, center: f64, offsets: &[f64]) -> Result<f64> {
    if offsets.len() < 2 {
        return Err(Error::InvalidArgument("need at least two offsets".into()));
    }
    let mut xs = Vec::with_capacity(offsets.len());
    let mut ys = Vec::with_capacity(offsets.len());
    for &d in offsets {
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!("offsets must be positive, got {d}")));
        }
        let dist = manifold.distance(center + d, center)?;
        if !(dist > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "degenerate manifold: zero distance at offset {d}"
            )));
        }
        xs.push(d.ln());
        ys.push((dist / d).ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("offsets must not all coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Settings of the pulse-recovery experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseRunConfig {
    pub manifold: PulseManifold,
    pub families: Vec<KernelFamily>,
    pub n_values: Vec<u32>,
    /// `σ₀` of the Gaussian kernels on `Θ`.
    pub gaussian_scale: f64,
    /// `r₀` of the bump kernels on `Θ`.
    pub bump_scale: f64,
    pub alpha: f64,
    /// `α` is halved whenever `|∇_n 𝓔(θ^{k+1})| / |∇_n 𝓔(θ^k)|` exceeds this.
    pub halving_threshold: f64,
    pub theta0: f64,
    pub max_iters: usize,
    /// `|θ - θ*|` counted as recovered.
    pub tolerance: f64,
    pub radial_nodes: usize,
}

impl Default for PulseRunConfig {
    fn default() -> Self {
        Self {
            manifold: PulseManifold::default(),
            families: vec![KernelFamily::Gaussian, KernelFamily::Bump],
            n_values: vec![1, 2, 3],
            gaussian_scale: 2.0,
            bump_scale: 4.0,
            alpha: 0.1,
            halving_threshold: 2.5,
            theta0: 0.1,
            max_iters: 200,
            tolerance: 0.02,
            radial_nodes: 1024,
        }
    }
}

impl PulseRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.manifold.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("α must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.halving_threshold > 1.0) {
            return bad(format!(
                "halving threshold must exceed 1, got {}",
                self.halving_threshold
            ));
        }
        if self.families.is_empty() || self.n_values.is_empty() {
            return bad("need at least one kernel family and one scale index".into());
        }
        if self.families.contains(&KernelFamily::Custom) {
            return bad("the pulse experiment runs Gaussian and bump kernels only".into());
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        check_theta(self.theta0)
    }

    pub fn kernel_spec(&self, family: KernelFamily, n: u32) -> KernelSpec {
        let base_scale = match family {
            KernelFamily::Bump => self.bump_scale,
            _ => self.gaussian_scale,
        };
        KernelSpec { family, base_scale, n }
    }
}

/// Outcome of one `(family, n)` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseRun {
    pub family: KernelFamily,
    pub n: u32,
    pub trace: OptimizerTrace,
    pub theta_hat: f64,
    pub final_error: f64,
    /// First iteration with `|θ^k - θ*| ≤ tolerance`.
    pub iterations_to_tolerance: Option<usize>,
    pub objective_increases: usize,
    /// Iterations whose update was clamped into `[0, 1]`.
    pub clamped: Vec<usize>,
    pub halvings: usize,
}

impl PulseRun {
    pub fn label(&self) -> String {
        let family = match self.family {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Bump => "bump",
            KernelFamily::Custom => "custom",
        };
        format!("{family} n={}", self.n)
    }

    pub fn converged(&self, tolerance: f64) -> bool {
        self.final_error <= tolerance
    }
}

/// Every `(family, n)` combination of `config`, in family-major order.
pub fn run_pulse_experiment(config: &PulseRunConfig) -> Result<Vec<PulseRun>> {
    config.validate()?;
    let jobs: Vec<(KernelFamily, u32)> = config
        .families
        .iter()
        .flat_map(|&f| config.n_values.iter().map(move |&n| (f, n)))
        .collect();
    jobs.par_iter().map(|&(f, n)| run_single(config, f, n)).collect()
}

/// Nonlocal gradient descent on `𝓔` with gradient-ratio step halving.
pub fn run_single(config: &PulseRunConfig, family: KernelFamily, n: u32) -> Result<PulseRun> {
    config.validate()?;
    let kernel = config.kernel_spec(family, n).build(1)?;
    let polar = PolarSettings {
        radial: config.radial_nodes,
        angular: PolarSettings::default().angular,
    };
    let nl = NonlocalConfig::with_settings(kernel, polar, PvPolicy::default())?;
    let field = config.manifold.field();
    let target = config.manifold.template_theta;
    let grad = |t: f64| -> Result<f64> { Ok(gradient_closed(&field, &Point::from_element(1, t), &nl)?[0]) };
    let value = |t: f64| pulse_objective(&config.manifold, t);

    let mut trace = OptimizerTrace::new();
    let mut theta = config.theta0;
    let mut alpha = config.alpha;
    let mut g = grad(theta).map_err(|e| e.at_iteration(0))?;
    let mut clamped = Vec::new();
    let mut halvings = 0;
    trace.push(Point::from_element(1, theta), value(theta)?, g.abs());
    trace.termination = Termination::MaxIters;
    for k in 0..config.max_iters {
        if trace.objective_values[k] == 0.0 {
            trace.termination = Termination::ZeroObjective;
            break;
        }
        let raw = theta - alpha * g;
        if !raw.is_finite() {
            trace.termination = Termination::Diverged;
            trace.offending_point = Some(Point::from_element(1, raw));
            break;
        }
        let next = raw.clamp(0.0, 1.0);
        if next != raw {
            clamped.push(k + 1);
        }
        let g_next = grad(next).map_err(|e| e.at_iteration(k + 1))?;
        trace.steps_taken.push(alpha);
        trace.push(Point::from_element(1, next), value(next)?, g_next.abs());
        if g != 0.0 && (g_next / g).abs() > config.halving_threshold {
            alpha *= 0.5;
            halvings += 1;
        }
        theta = next;
        g = g_next;
    }
    let errors: Vec<f64> = trace.iterates.iter().map(|p| (p[0] - target).abs()).collect();
    Ok(PulseRun {
        family,
        n,
        theta_hat: theta,
        final_error: (theta - target).abs(),
        iterations_to_tolerance: errors.iter().position(|e| *e <= config.tolerance),
        objective_increases: trace.objective_increases(),
        trace,
        clamped,
        halvings,
    })
}

/// `∇_n 𝓔(θ)` at a point of the closed parameter interval.
pub fn pulse_gradient(config: &PulseRunConfig, family: KernelFamily, n: u32, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let kernel = config.kernel_spec(family, n).build(1)?;
    let polar = PolarSettings {
        radial: config.radial_nodes,
        angular: PolarSettings::default().angular,
    };
    let nl = NonlocalConfig::with_settings(kernel, polar, PvPolicy::default())?;
    let g: DVector<f64> = gradient_closed(&config.manifold.field(), &Point::from_element(1, theta), &nl)?;
    Ok(g[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::brute_force_min;
    use proptest::prelude::*;

    fn log_offsets(scale: f64) -> Vec<f64> {
        (0..10).map(|i| scale * 1e-3 * 10f64.powf(i as f64 / 9.0)).collect()
    }

    #[test]
    fn objective_examples() {
        let m = PulseManifold::default();
        assert_eq!(pulse_objective(&m, 0.5).unwrap(), 0.0);
        assert!((pulse_objective(&m, 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert!((pulse_objective(&m, 0.51).unwrap() - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(pulse_objective(&m, 1.2).is_err());
        assert!(pulse_objective(&m, -0.1).is_err());
    }

    #[test]
    fn grid_mode_matches_exact_within_grid_error() {
        let exact = PulseManifold::default();
        let grid = PulseManifold {
            norm: NormMode::Grid,
            ..exact.clone()
        };
        for t in [0.1, 0.3, 0.45, 0.51, 0.7, 0.9] {
            let a = pulse_objective(&exact, t).unwrap();
            let b = pulse_objective(&grid, t).unwrap();
            // at most two boundary cells of width 1/4096 differ
            assert!((a * a - b * b).abs() <= 2.0 / 4096.0 + 1e-12, "{t}: {a} vs {b}");
        }
        assert!((pulse_objective(&grid, 0.51).unwrap() - 0.1414).abs() < 2e-3);
    }

    #[test]
    fn brute_force_recovers_template() {
        let m = PulseManifold::default();
        let (t, v) = brute_force_min(&m.field(), 512).unwrap();
        assert!((t[0] - 0.5).abs() <= 1.0 / 512.0);
        assert!(v < 0.05);
    }

    #[test]
    fn holder_exponent() {
        let m = PulseManifold::default();
        for c in [0.2, 0.3, 0.4, 0.5, 0.6] {
            let e = holder_exponent_fit(&m, c, &log_offsets(1.0)).unwrap();
            assert!((e + 0.5).abs() <= 0.02, "{c}: {e}");
            let e2 = holder_exponent_fit(&m, c, &log_offsets(2.0)).unwrap();
            assert!((e - e2).abs() < 1e-12);
        }
        let flat = PulseManifold {
            pulse_width: 0.0,
            ..m.clone()
        };
        assert!(holder_exponent_fit(&flat, 0.4, &log_offsets(1.0)).is_err());
        assert!(holder_exponent_fit(&m, 0.4, &[1e-3]).is_err());
        assert!(holder_exponent_fit(&m, 0.4, &[1e-3, 1e-3]).is_err());
    }

    #[test]
    fn grid_holder_fit_is_close() {
        let m = PulseManifold {
            norm: NormMode::Grid,
            ..PulseManifold::default()
        };
        let e = holder_exponent_fit(&m, 0.4, &log_offsets(1.0)).unwrap();
        assert!((e + 0.5).abs() < 0.1, "{e}");
    }

    #[test]
    fn config_validation() {
        assert!(PulseRunConfig::default().validate().is_ok());
        for bad in [
            PulseRunConfig {
                alpha: 0.0,
                ..Default::default()
            },
            PulseRunConfig {
                alpha: 1.5,
                ..Default::default()
            },
            PulseRunConfig {
                halving_threshold: 1.0,
                ..Default::default()
            },
            PulseRunConfig {
                theta0: 2.0,
                ..Default::default()
            },
            PulseRunConfig {
                families: vec![],
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn gradient_is_finite_everywhere() {
        let c = PulseRunConfig::default();
        for family in [KernelFamily::Gaussian, KernelFamily::Bump] {
            for n in 1..=3 {
                for i in 0..200 {
                    let t = i as f64 / 199.0;
                    assert!(pulse_gradient(&c, family, n, t).unwrap().is_finite());
                }
            }
        }
    }

    #[test]
    fn first_step_from_flat_region_heads_for_the_template() {
        let c = PulseRunConfig::default();
        for family in [KernelFamily::Gaussian, KernelFamily::Bump] {
            let g = pulse_gradient(&c, family, 1, 0.3).unwrap();
            assert!(g < 0.0, "{family:?}: {g}");
        }
    }

    #[test]
    fn start_at_template_stops_immediately() {
        let c = PulseRunConfig {
            theta0: 0.5,
            ..Default::default()
        };
        let r = run_single(&c, KernelFamily::Gaussian, 2).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace.termination, Termination::ZeroObjective);
        assert_eq!(r.iterations_to_tolerance, Some(0));
    }

    #[test]
    fn runs_record_steps_and_clamps() {
        let c = PulseRunConfig {
            alpha: 1.0,
            theta0: 0.95,
            max_iters: 20,
            ..Default::default()
        };
        let r = run_single(&c, KernelFamily::Gaussian, 3).unwrap();
        assert!(r.trace.lengths_consistent());
        assert!(r.trace.iterates.iter().all(|t| (0.0..=1.0).contains(&t[0])));
        assert_eq!(r.trace.steps_taken[0], 1.0);
    }

    proptest! {
        #[test]
        fn objective_is_symmetric_about_template(d in 0.0f64..0.37) {
            let m = PulseManifold::default();
            let a = pulse_objective(&m, 0.5 + d).unwrap();
            let b = pulse_objective(&m, 0.5 - d).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn small_shifts_follow_the_sliver_law(t in 0.0f64..0.8, d in 1e-4f64..0.05) {
            let m = PulseManifold::default();
            let dist = m.distance(t, t + d).unwrap();
            prop_assert!((dist - (2.0 * d).sqrt()).abs() < 1e-12);
        }
    }
}
