//! The acceptance suite: ten end-to-end checks of the operators,
//! optimizers and the pulse experiment, runnable from the command line.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{
    emit_csv, emit_plot_svg, holder_exponent_fit, parse_trace_csv, run_pulse_experiment, PulseManifold, PulseRun,
    PulseRunConfig,
};
use crate::geometry::{BoxDomain, Point, ScalarField, SubsetIndicator};
use crate::kernels::{KernelFamily, RadialKernel};
use crate::operators::{
    find_vanishing_subset_1d, nonlocal_gradient, nonlocal_hessian, restricted_nonlocal_gradient, H4Constant,
    HessianVariant, NonlocalConfig,
};
use crate::optimizers::{local_counterpart, nonlocal_newton, BetaSchedule, LocalMethod};
use crate::validation::{catalog_field, convergence_sweep, mc_nonlocal_gradient, Check, SweepReport, SweepSettings};

/// Verdict of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    /// `PASS <id> <title>: <detail>` or the same with `FAIL`.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!(
            "{verdict} {:>2} {} ({:.2}s): {}",
            self.id, self.title, self.seconds, self.detail
        )
    }
}

pub const TITLES: [&str; 10] = [
    "gradient localization",
    "quadratic exactness",
    "H4 constant discrepancy",
    "Lipschitz gradient bound",
    "iterate tracking",
    "epsilon-SGD bound",
    "Newton epsilon-floor",
    "Taylor remainder",
    "vanishing subset",
    "pulse experiment",
];

/// Run criterion `id` (1-based). Artifacts of the pulse run go to `out_dir`
/// when given, otherwise to a fresh directory under the system temp dir.
pub fn run_criterion(id: usize, out_dir: Option<&Path>) -> Result<CriterionOutcome> {
    let title = *TITLES
        .get(id.wrapping_sub(1))
        .ok_or_else(|| Error::InvalidArgument(format!("no acceptance criterion {id}")))?;
    let start = Instant::now();
    let (passed, detail) = match id {
        1 => sweep_verdict(Check::GradientLocalization, Some(10.0), start)?,
        2 => quadratic_exactness()?,
        3 => h4_constants()?,
        4 => lipschitz_bound()?,
        5 => sweep_verdict(Check::IterateTracking, None, start)?,
        6 => sweep_verdict(Check::SgdBound, Some(120.0), start)?,
        7 => newton_floor()?,
        8 => sweep_verdict(Check::TaylorRemainder, None, start)?,
        9 => vanishing_subset()?,
        _ => pulse(out_dir, start)?,
    };
    Ok(CriterionOutcome {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(out_dir: Option<&Path>) -> Result<Vec<CriterionOutcome>> {
    (1..=TITLES.len()).map(|i| run_criterion(i, out_dir)).collect()
}

fn fmt_errors(r: &SweepReport) -> String {
    let parts: Vec<String> = r
        .params
        .iter()
        .zip(&r.errors)
        .map(|(n, e)| format!("n={n}: {e:.3e}"))
        .collect();
    parts.join(", ")
}

fn sweep_verdict(check: Check, budget_secs: Option<f64>, start: Instant) -> Result<(bool, String)> {
    let r = convergence_sweep(check, &check.default_n_values(), &SweepSettings::defaults_for(check))?;
    let mut detail = fmt_errors(&r);
    if let Some(l) = &r.limits {
        let l: Vec<String> = l.iter().map(|v| format!("{v:.3e}")).collect();
        detail.push_str(&format!(" (limits {})", l.join(", ")));
    }
    let in_time = budget_secs.is_none_or(|b| start.elapsed().as_secs_f64() < b);
    if !in_time {
        detail.push_str(" [over time budget]");
    }
    Ok((r.passed && in_time, detail))
}

fn interior_probes(dim: usize, margin: f64, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Point::from_fn(dim, |_, _| rng.random_range(margin..1.0 - margin)))
        .collect()
}

fn quadratic_exactness() -> Result<(bool, String)> {
    let mut worst_g: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    let mut mc_ok = true;
    for dim in 1..=2 {
        let u = ScalarField::new(BoxDomain::unit(dim), |x| x.norm_squared());
        let kernel = RadialKernel::gaussian(dim, 0.1, 16)?;
        let margin = kernel.effective_radius() * 1.01;
        let cfg = NonlocalConfig::new(kernel.clone())?;
        let two = DMatrix::identity(dim, dim) * 2.0;
        let h4 = HessianVariant::H4 {
            constant: H4Constant::Moment,
        };
        for (i, x) in interior_probes(dim, margin, 10, 40 + dim as u64).iter().enumerate() {
            let g = nonlocal_gradient(&u, x, &cfg)?;
            worst_g = worst_g.max((&g - x * 2.0).amax());
            worst_h = worst_h.max((nonlocal_hessian(&u, x, h4, &cfg)? - &two).amax());
            let mc = mc_nonlocal_gradient(&u, x, &kernel, 20_000, i as u64)?;
            mc_ok &= mc.agrees_with(&g, 3.0);
        }
    }
    Ok((
        worst_g <= 1e-6 && worst_h <= 1e-5 && mc_ok,
        format!("max gradient error {worst_g:.2e}, max H4 error {worst_h:.2e}, Monte-Carlo agreement {mc_ok}"),
    ))
}

fn h4_constants() -> Result<(bool, String)> {
    let a = 1.7;
    let u = ScalarField::new(BoxDomain::unit(1), move |x| a * x[0] * x[0]);
    let cfg = NonlocalConfig::new(RadialKernel::gaussian(1, 0.1, 16)?)?;
    let x = Point::from_element(1, 0.5);
    let d_plus_one = nonlocal_hessian(
        &u,
        &x,
        HessianVariant::H4 {
            constant: H4Constant::DPlusOne,
        },
        &cfg,
    )?[(0, 0)];
    let moment = nonlocal_hessian(
        &u,
        &x,
        HessianVariant::H4 {
            constant: H4Constant::Moment,
        },
        &cfg,
    )?[(0, 0)];
    let ok = (d_plus_one - 4.0 * a / 3.0).abs() <= 1e-5 && (moment - 2.0 * a).abs() <= 1e-5;
    Ok((
        ok,
        format!("a = {a}: D(D+1)/2 constant {d_plus_one:.8}, moment constant {moment:.8}"),
    ))
}

fn lipschitz_bound() -> Result<(bool, String)> {
    let mut worst = f64::NEG_INFINITY;
    for dim in 1..=2 {
        let entry = catalog_field("ridge", &BoxDomain::unit(dim))?;
        let m = entry.field.lipschitz().unwrap_or(f64::INFINITY);
        for family in [KernelFamily::Gaussian, KernelFamily::Bump] {
            let kernel = match family {
                KernelFamily::Bump => RadialKernel::bump(dim, 0.2, 8)?,
                _ => RadialKernel::gaussian(dim, 0.1, 8)?,
            };
            let cfg = NonlocalConfig::new(kernel)?;
            for x in interior_probes(dim, 0.005, 100, 7) {
                let g = nonlocal_gradient(&entry.field, &x, &cfg)?;
                worst = worst.max(g.norm() - dim as f64 * m);
            }
        }
    }
    Ok((worst <= 1e-9, format!("max ‖∇_n u‖ - D·M = {worst:.3e}")))
}

fn newton_floor() -> Result<(bool, String)> {
    let check = Check::NewtonFloor;
    let settings = SweepSettings::defaults_for(check);
    let r = convergence_sweep(check, &check.default_n_values(), &settings)?;
    let entry = catalog_field(&settings.field, &BoxDomain::unit(settings.dim))?;
    let x0 = Point::from_element(settings.dim, settings.start);
    let cfg = NonlocalConfig::new(RadialKernel::gaussian(settings.dim, settings.base_scale, 32)?)?;
    let beta = BetaSchedule::Fixed { beta: 1.0 };
    let nl = nonlocal_newton(&entry.field, &x0, &cfg, &beta, 5, 0.0)?;
    let local = local_counterpart(&entry.field, &x0, &LocalMethod::Newton { beta }, 5, 0.0)?;
    let gap = nl
        .iterates
        .iter()
        .zip(&local.iterates)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let complete = nl.len() == 6 && local.len() == 6;
    Ok((
        r.passed && complete && gap <= 1e-3,
        format!(
            "terminal errors {}; n=32 gap to local Newton over 5 steps {gap:.2e}",
            fmt_errors(&r)
        ),
    ))
}

fn vanishing_subset() -> Result<(bool, String)> {
    let u = ScalarField::new(BoxDomain::unit(1), |x| {
        let t = x[0] - 0.5;
        t * t + 0.3 * t.powi(3)
    });
    let x = Point::from_element(1, 0.5);
    let cfg = NonlocalConfig::new(RadialKernel::bump(1, 0.2, 1)?)?;
    let s: SubsetIndicator = find_vanishing_subset_1d(&u, &x, &cfg)?;
    let g = restricted_nonlocal_gradient(&u, &x, &cfg, &s)?[0];
    let full = nonlocal_gradient(&u, &x, &cfg)?[0];
    Ok((
        g.abs() <= 1e-8,
        format!(
            "restricted gradient {g:.2e} (full-ball gradient {full:.2e}), subset measure {:.4}",
            s.measure()
        ),
    ))
}

fn pulse_runs_ok(runs: &[PulseRun], config: &PulseRunConfig) -> (bool, String) {
    let gauss: Vec<&PulseRun> = runs.iter().filter(|r| r.family == KernelFamily::Gaussian).collect();
    let gauss_ok = gauss.len() == 3
        && gauss
            .iter()
            .all(|r| r.converged(config.tolerance) && r.iterations_to_tolerance.is_some());
    let hits: Vec<Option<usize>> = gauss.iter().map(|r| r.iterations_to_tolerance).collect();
    let faster = hits
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b <= a));
    let bump3 = runs.iter().find(|r| r.family == KernelFamily::Bump && r.n == 3);
    let bump_ok = bump3.is_some_and(|r| r.converged(config.tolerance) && r.objective_increases > 0);
    let detail = format!(
        "Gaussian iterations to tolerance {hits:?}, final errors {:?}; bump n=3 final error {:?} with {} objective increases",
        gauss.iter().map(|r| format!("{:.4}", r.final_error)).collect::<Vec<_>>(),
        bump3.map(|r| format!("{:.4}", r.final_error)),
        bump3.map_or(0, |r| r.objective_increases)
    );
    (gauss_ok && faster && bump_ok, detail)
}

fn pulse(out_dir: Option<&Path>, start: Instant) -> Result<(bool, String)> {
    let config = PulseRunConfig::default();
    let runs = run_pulse_experiment(&config)?;
    let (runs_ok, mut detail) = pulse_runs_ok(&runs, &config);

    let offsets: Vec<f64> = (0..10).map(|i| 1e-3 * 10f64.powf(i as f64 / 9.0)).collect();
    let manifold = PulseManifold::default();
    let mut exps = Vec::new();
    for c in [0.2, 0.3, 0.4, 0.5, 0.6] {
        exps.push(holder_exponent_fit(&manifold, c, &offsets)?);
    }
    let holder_ok = exps.iter().all(|e| (e + 0.5).abs() <= 0.02);

    let tmp;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => {
            tmp = std::env::temp_dir().join(format!("nonlocal-acceptance-{}", std::process::id()));
            tmp.clone()
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut artifacts_ok = true;
    for r in &runs {
        let path = dir.join(format!("pulse_{}.csv", r.label().replace([' ', '='], "_")));
        emit_csv(&r.trace, Some(&["theta"]), &path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        artifacts_ok &= parse_trace_csv(&text)?.matches(&r.trace);
    }
    let labels: Vec<String> = runs.iter().map(PulseRun::label).collect();
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let traces: Vec<_> = runs.iter().map(|r| &r.trace).collect();
    let svg = dir.join("pulse.svg");
    emit_plot_svg(
        &traces,
        &label_refs,
        &Point::from_element(1, config.manifold.template_theta),
        &svg,
    )?;
    artifacts_ok &= svg.exists();

    let in_time = start.elapsed().as_secs_f64() < 120.0;
    detail.push_str(&format!(
        "; Hölder exponents {:?}; artifacts parse back {artifacts_ok}",
        exps.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>()
    ));
    Ok((runs_ok && holder_ok && artifacts_ok && in_time, detail))
}
