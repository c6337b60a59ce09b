use std::fs;
use std::path::Path;
use std::time::Instant;

use nonlocal_core::acceptance::{run_criterion, TITLES};
use nonlocal_core::config::{
    load_config, write_json, ConfigSchema, DescendConfig, DescentMethod, GradCheckConfig, HessCheckConfig, Manifest,
    NewtonConfig, Problem, SgdRunConfig, SweepConfig,
};
use nonlocal_core::experiments::{
    emit_csv, emit_plot_svg, emit_sweep_csv, run_pulse_experiment, PulseRun, PulseRunConfig,
};
use nonlocal_core::kernels::KernelSpec;
use nonlocal_core::optimizers::{
    epsilon_sgd, local_counterpart, nlgd_fixed, nlgd_linesearch, nonlocal_newton, LocalMethod, OptimizerTrace,
    SgdConfig,
};
use nonlocal_core::quadrature::PolarSettings;
use nonlocal_core::validation::{brute_force_min, catalog_field, mc_nonlocal_gradient, CatalogEntry};
use nonlocal_core::{nonlocal_gradient, nonlocal_hessian, Error, NonlocalConfig, Point, RadialKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{json_string, Cli, Command};

/// Standard deviations of Monte-Carlo disagreement tolerated by `grad-check`.
const MC_SIGMAS: f64 = 3.0;
/// Upper bound on brute-force grid nodes when a field has no known minimizer.
const SEARCH_NODES: f64 = 1e6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(Error),
    #[error("{0}")]
    Failed(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::UnknownCheck(_)
            | Error::InvalidArgument(_)
            | Error::InvalidKernel(_)
            | Error::InvalidDomain(_)
            | Error::DimensionMismatch { .. }
            | Error::OutsideDomain(_) => CliError::Usage(e),
            other => CliError::Failed(other),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// What a command produced besides `config.resolved.json` and `manifest.json`.
#[derive(Default)]
struct Outcome {
    outputs: Vec<String>,
    passed: Option<bool>,
    summary: Vec<String>,
}

/// `acceptance`: which criteria to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AcceptanceConfig {
    criteria: Vec<usize>,
}

impl ConfigSchema for AcceptanceConfig {
    fn defaults(_: &Value) -> nonlocal_core::Result<Self> {
        Ok(Self {
            criteria: (1..=TITLES.len()).collect(),
        })
    }
}

/// Run the parsed command. `Some(false)` means a check ran and failed.
pub fn run(cli: &Cli) -> CliResult<Option<bool>> {
    let start = Instant::now();
    let common = cli.common();
    let out = common.out.as_path();
    let mut overrides = Vec::new();
    match &cli.command {
        Command::GradCheck { problem, seed, .. }
        | Command::HessCheck { problem, seed, .. }
        | Command::Sgd { problem, seed, .. } => {
            overrides.extend(problem.overrides());
            overrides.extend(seed.map(|s| format!("seed={s}")));
        }
        Command::Descend { problem, .. } | Command::Newton { problem, .. } => overrides.extend(problem.overrides()),
        Command::Sweep {
            check, field, n, seed, ..
        } => {
            overrides.extend(check.as_ref().map(|c| format!("check={}", json_string(c))));
            overrides.extend(field.as_ref().map(|f| format!("settings.field={}", json_string(f))));
            if !n.is_empty() {
                overrides.push(format!("n_values={n:?}"));
            }
            overrides.extend(seed.map(|s| format!("settings.seed={s}")));
        }
        Command::Pulse { n, .. } => {
            if !n.is_empty() {
                overrides.push(format!("n_values={n:?}"));
            }
        }
        Command::Acceptance { criterion, .. } => {
            if !criterion.is_empty() {
                overrides.push(format!("criteria={criterion:?}"));
            }
        }
    }
    overrides.extend(common.set.iter().cloned());

    let cfg_path = common.config.as_deref();
    let (config, seed, outcome) = match &cli.command {
        Command::GradCheck { .. } => {
            let cfg: GradCheckConfig = load_config(cfg_path, &overrides)?;
            prepare(out, &cfg)?;
            (to_value(&cfg), Some(cfg.seed), grad_check(&cfg, out)?)
        }
        Command::HessCheck { .. } => {
            let cfg: HessCheckConfig = load_config(cfg_path, &overrides)?;
            prepare(out, &cfg)?;
            (to_value(&cfg), Some(cfg.seed), hess_check(&cfg, out)?)
        }
        Command::Sweep { .. } => {
            let cfg: SweepConfig = load_config(cfg_path, &overrides)?;
            prepare(out, &cfg)?;
            (to_value(&cfg), Some(cfg.settings.seed), sweep(&cfg, out)?)
        }
        Command::Descend { .. } => {
            let cfg: DescendConfig = load_config(cfg_path, &overrides)?;
            prepare(out, &cfg)?;
            (to_value(&cfg), None, descend(&cfg, out)?)
        }
        Command::Sgd { .. } => {
            let cfg: SgdRunConfig = load_config(cfg_path, &overrides)?;
            prepare(out, &cfg)?;
            (to_value(&cfg), Some(cfg.seed), sgd(&cfg, out)?)
        }
        Command::Newton { .. } => {
            let cfg: NewtonConfig = load_config(cfg_path, &overrides)?;
            prepare(out, &cfg)?;
            (to_value(&cfg), None, newton(&cfg, out)?)
        }
        Command::Pulse { .. } => {
            let cfg: PulseRunConfig = load_config(cfg_path, &overrides)?;
            cfg.validate()?;
            prepare(out, &cfg)?;
            (to_value(&cfg), None, pulse(&cfg, out)?)
        }
        Command::Acceptance { .. } => {
            let cfg: AcceptanceConfig = load_config(cfg_path, &overrides)?;
            prepare(out, &cfg)?;
            (to_value(&cfg), None, acceptance(&cfg, out)?)
        }
    };

    let mut outputs = vec!["config.resolved.json".to_string()];
    outputs.extend(outcome.outputs);
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        command: cli.name().into(),
        argv: std::env::args().collect(),
        config,
        seed,
        workers: rayon::current_num_threads(),
        version: format!("nonlocal {}", env!("CARGO_PKG_VERSION")),
        wall_time_secs: start.elapsed().as_secs_f64(),
        outputs,
        passed: outcome.passed,
    };
    write_json(&manifest, &out.join("manifest.json"))?;
    if !common.quiet {
        for line in &outcome.summary {
            println!("{line}");
        }
        if let Some(p) = outcome.passed {
            println!("{}", if p { "PASS" } else { "FAIL" });
        }
    }
    Ok(outcome.passed)
}

fn to_value<T: Serialize>(cfg: &T) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

fn prepare<T: Serialize>(out: &Path, cfg: &T) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    write_json(cfg, &out.join("config.resolved.json"))?;
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failed(Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_text(out: &Path, name: &str, text: &str, outcome: &mut Outcome) -> CliResult<()> {
    let path = out.join(name);
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    outcome.outputs.push(name.into());
    Ok(())
}

fn setup(
    problem: &Problem,
    kernel: &KernelSpec,
    polar: Option<&PolarSettings>,
) -> CliResult<(CatalogEntry, RadialKernel, NonlocalConfig)> {
    let entry = catalog_field(&problem.field, &problem.domain()?)?;
    let k = kernel.build(problem.dim)?;
    let mut cfg = NonlocalConfig::new(k.clone())?;
    if let Some(p) = polar {
        cfg = cfg.with_polar(*p)?;
    }
    Ok((entry, k, cfg))
}

/// Seeded uniform points whose kernel ball lies inside the domain.
fn interior_probes(problem: &Problem, kernel: &RadialKernel, count: usize, seed: u64) -> CliResult<Vec<Point>> {
    let margin = 1.01 * kernel.effective_radius();
    let (lo, hi) = (problem.lower + margin, problem.upper - margin);
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "kernel radius {:.3e} leaves no probe whose ball fits in [{}, {}]",
            kernel.effective_radius(),
            problem.lower,
            problem.upper
        ))
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| Point::from_fn(problem.dim, |_, _| rng.random_range(lo..hi)))
        .collect())
}

fn coord_header(dim: usize) -> String {
    (0..dim).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",")
}

fn coords(x: &Point) -> String {
    x.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

fn grad_check(cfg: &GradCheckConfig, out: &Path) -> CliResult<Outcome> {
    let (entry, kernel, nl) = setup(&cfg.problem, &cfg.kernel, Some(&cfg.polar))?;
    let probes = interior_probes(&cfg.problem, &kernel, cfg.probes, cfg.seed)?;
    let mut csv = format!("probe,{},error,mc_agrees\n", coord_header(cfg.problem.dim));
    let (mut worst, mut mc_ok) = (0.0f64, true);
    for (i, x) in probes.iter().enumerate() {
        let g = nonlocal_gradient(&entry.field, x, &nl)?;
        let exact = entry
            .field
            .analytic_gradient(x)
            .ok_or(Error::MissingDerivative("analytic gradient"))?;
        let err = (&g - exact).amax();
        worst = worst.max(err);
        let agrees = if cfg.mc_samples > 0 {
            let seed = cfg.seed.wrapping_add(1 + i as u64);
            let mc = mc_nonlocal_gradient(&entry.field, x, &kernel, cfg.mc_samples, seed)?;
            let a = mc.agrees_with(&g, MC_SIGMAS);
            mc_ok &= a;
            a.to_string()
        } else {
            String::new()
        };
        csv.push_str(&format!("{i},{},{err:.16e},{agrees}\n", coords(x)));
    }
    let mut o = Outcome::default();
    write_text(out, "grad_check.csv", &csv, &mut o)?;
    o.passed = Some(worst <= cfg.tolerance && mc_ok);
    o.summary.push(format!(
        "{} probes on `{}`: max |∇_n u - ∇u| = {worst:.3e} (tolerance {:.1e}), Monte-Carlo agreement {mc_ok}",
        probes.len(),
        cfg.problem.field,
        cfg.tolerance
    ));
    Ok(o)
}

fn hess_check(cfg: &HessCheckConfig, out: &Path) -> CliResult<Outcome> {
    let (entry, kernel, nl) = setup(&cfg.problem, &cfg.kernel, Some(&cfg.polar))?;
    let probes = interior_probes(&cfg.problem, &kernel, cfg.probes, cfg.seed)?;
    let mut csv = format!("probe,{},error\n", coord_header(cfg.problem.dim));
    let mut worst = 0.0f64;
    for (i, x) in probes.iter().enumerate() {
        let h = nonlocal_hessian(&entry.field, x, cfg.hessian, &nl)?;
        let exact = entry
            .field
            .analytic_hessian(x)
            .ok_or(Error::MissingDerivative("analytic Hessian"))?;
        let err = (h - exact).amax();
        worst = worst.max(err);
        csv.push_str(&format!("{i},{},{err:.16e}\n", coords(x)));
    }
    let mut o = Outcome::default();
    write_text(out, "hess_check.csv", &csv, &mut o)?;
    o.passed = Some(worst <= cfg.tolerance);
    o.summary.push(format!(
        "{} probes on `{}`: max |H_n u - ∇²u| = {worst:.3e} (tolerance {:.1e})",
        probes.len(),
        cfg.problem.field,
        cfg.tolerance
    ));
    Ok(o)
}

fn sweep(cfg: &SweepConfig, out: &Path) -> CliResult<Outcome> {
    let report = nonlocal_core::convergence_sweep(cfg.check, &cfg.n_values, &cfg.settings)?;
    let mut o = Outcome::default();
    let name = format!("sweep_{}.csv", cfg.check.name().replace('-', "_"));
    emit_sweep_csv(&report, &out.join(&name))?;
    o.outputs.push(name);
    for (i, (n, e)) in report.params.iter().zip(&report.errors).enumerate() {
        let limit = report
            .limits
            .as_ref()
            .map(|l| format!(" (limit {:.3e})", l[i]))
            .unwrap_or_default();
        o.summary.push(format!("n = {n}: {e:.3e}{limit}"));
    }
    o.summary
        .push(format!("{}: monotone {}", cfg.check.name(), report.monotone));
    o.passed = Some(report.passed);
    Ok(o)
}

fn start_point(problem: &Problem, x0: &[f64]) -> CliResult<Point> {
    if x0.len() != problem.dim {
        return Err(Error::DimensionMismatch {
            expected: problem.dim,
            got: x0.len(),
        }
        .into());
    }
    Ok(Point::from_vec(x0.to_vec()))
}

/// The catalog minimizer, or a grid search when the field declares none.
fn target(entry: &CatalogEntry) -> CliResult<Point> {
    if let Some(x) = &entry.minimizer {
        return Ok(x.clone());
    }
    let dim = entry.field.dim() as f64;
    let resolution = SEARCH_NODES.powf(1.0 / dim).floor().clamp(3.0, 1001.0) as usize;
    Ok(brute_force_min(&entry.field, resolution)?.0)
}

/// Trace CSVs for a nonlocal run and its classical counterpart, plus the
/// error plot against the minimizer.
fn emit_pair(
    prefix: &str,
    nonlocal: &OptimizerTrace,
    local: Option<&OptimizerTrace>,
    entry: &CatalogEntry,
    out: &Path,
) -> CliResult<Outcome> {
    let mut o = Outcome::default();
    let x_star = target(entry)?;
    let mut traces = vec![nonlocal];
    let mut labels = vec!["nonlocal"];
    let name = format!("{prefix}_nonlocal.csv");
    emit_csv(nonlocal, None, &out.join(&name))?;
    o.outputs.push(name);
    if let Some(l) = local {
        let name = format!("{prefix}_local.csv");
        emit_csv(l, None, &out.join(&name))?;
        o.outputs.push(name);
        traces.push(l);
        labels.push("classical");
    }
    let svg = format!("{prefix}.svg");
    emit_plot_svg(&traces, &labels, &x_star, &out.join(&svg))?;
    o.outputs.push(svg);
    for (label, t) in labels.iter().zip(&traces) {
        let last = t.last_iterate().map(|x| (x - &x_star).norm()).unwrap_or(f64::NAN);
        o.summary.push(format!(
            "{label}: {} iterations, {:?}, final distance to minimizer {last:.3e}",
            t.len().saturating_sub(1),
            t.termination
        ));
    }
    Ok(o)
}

fn descend(cfg: &DescendConfig, out: &Path) -> CliResult<Outcome> {
    let (entry, _, nl) = setup(&cfg.problem, &cfg.kernel, Some(&cfg.polar))?;
    let x0 = start_point(&cfg.problem, &cfg.x0)?;
    let (trace, method) = match &cfg.descent {
        DescentMethod::Fixed { schedule } => (
            nlgd_fixed(&entry.field, &x0, &nl, schedule, cfg.max_iters, cfg.grad_tol)?,
            LocalMethod::GradientDescent {
                schedule: schedule.clone(),
            },
        ),
        DescentMethod::LineSearch { cap } => (
            nlgd_linesearch(&entry.field, &x0, &nl, *cap, cfg.max_iters, cfg.grad_tol)?,
            LocalMethod::GradientDescentLineSearch { cap: *cap },
        ),
    };
    let local = if cfg.compare_local {
        Some(local_counterpart(
            &entry.field,
            &x0,
            &method,
            cfg.max_iters,
            cfg.grad_tol,
        )?)
    } else {
        None
    };
    emit_pair("descend", &trace, local.as_ref(), &entry, out)
}

fn newton(cfg: &NewtonConfig, out: &Path) -> CliResult<Outcome> {
    let (entry, _, nl) = setup(&cfg.problem, &cfg.kernel, Some(&cfg.polar))?;
    let x0 = start_point(&cfg.problem, &cfg.x0)?;
    let trace = nonlocal_newton(&entry.field, &x0, &nl, &cfg.beta, cfg.max_iters, cfg.grad_tol)?;
    let local = if cfg.compare_local {
        let method = LocalMethod::Newton { beta: cfg.beta };
        Some(local_counterpart(
            &entry.field,
            &x0,
            &method,
            cfg.max_iters,
            cfg.grad_tol,
        )?)
    } else {
        None
    };
    emit_pair("newton", &trace, local.as_ref(), &entry, out)
}

fn sgd(cfg: &SgdRunConfig, out: &Path) -> CliResult<Outcome> {
    let (entry, kernel, _) = setup(&cfg.problem, &cfg.kernel, None)?;
    cfg.sgd.validate()?;
    if cfg.seeds < 2 {
        return Err(Error::InvalidArgument("sgd needs at least two seeds".into()).into());
    }
    let x_star = target(&entry)?;
    let u_star = entry.field.value(&x_star)?;
    let runs = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let run = SgdConfig {
                seed: cfg.seed.wrapping_add(i),
                ..cfg.sgd.clone()
            };
            let (x_bar, _) = epsilon_sgd(&entry.field, &run, &kernel)?;
            Ok((run.seed, entry.field.value(&x_bar)? - u_star, x_bar))
        })
        .collect::<nonlocal_core::Result<Vec<_>>>()?;
    let m = runs.len() as f64;
    let mean = runs.iter().map(|r| r.1).sum::<f64>() / m;
    let stderr = (runs.iter().map(|r| (r.1 - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
    let bound = cfg.sgd.gap_bound();

    let mut csv = format!("seed,gap,{}\n", coord_header(cfg.problem.dim));
    for (seed, gap, x) in &runs {
        csv.push_str(&format!("{seed},{gap:.16e},{}\n", coords(x)));
    }
    let mut o = Outcome::default();
    write_text(out, "sgd_runs.csv", &csv, &mut o)?;
    o.passed = Some(mean <= bound + MC_SIGMAS * stderr);
    o.summary.push(format!(
        "{} runs: mean gap {mean:.4e} ± {stderr:.1e}, bound BM/√K + ε = {bound:.4e}",
        runs.len()
    ));
    Ok(o)
}

fn pulse(cfg: &PulseRunConfig, out: &Path) -> CliResult<Outcome> {
    let runs = run_pulse_experiment(cfg)?;
    let mut o = Outcome::default();
    let mut csv =
        String::from("family,n,theta_hat,final_error,iterations_to_tolerance,objective_increases,halvings,clamped\n");
    for r in &runs {
        let name = format!("pulse_{}_n{}.csv", family_name(r), r.n);
        emit_csv(&r.trace, Some(&["theta"]), &out.join(&name))?;
        o.outputs.push(name);
        let hit = r.iterations_to_tolerance.map(|k| k.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{:.16e},{:.16e},{hit},{},{},{}\n",
            family_name(r),
            r.n,
            r.theta_hat,
            r.final_error,
            r.objective_increases,
            r.halvings,
            r.clamped.len()
        ));
        o.summary.push(format!(
            "{}: θ̂ = {:.5}, error {:.4}, tolerance reached at {}, {} objective increases",
            r.label(),
            r.theta_hat,
            r.final_error,
            if hit.is_empty() { "never".into() } else { hit },
            r.objective_increases
        ));
    }
    write_text(out, "pulse_summary.csv", &csv, &mut o)?;
    let labels: Vec<String> = runs.iter().map(PulseRun::label).collect();
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    let traces: Vec<&OptimizerTrace> = runs.iter().map(|r| &r.trace).collect();
    emit_plot_svg(
        &traces,
        &labels,
        &Point::from_element(1, cfg.manifold.template_theta),
        &out.join("pulse.svg"),
    )?;
    o.outputs.push("pulse.svg".into());
    Ok(o)
}

fn family_name(r: &PulseRun) -> String {
    serde_json::to_value(r.family)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn acceptance(cfg: &AcceptanceConfig, out: &Path) -> CliResult<Outcome> {
    let mut o = Outcome::default();
    let mut results = Vec::new();
    for &id in &cfg.criteria {
        let r = run_criterion(id, Some(out))?;
        o.summary.push(r.line());
        results.push(r);
    }
    write_json(&results, &out.join("acceptance.json"))?;
    o.outputs.push("acceptance.json".into());
    o.passed = Some(results.iter().all(|r| r.passed));
    Ok(o)
}
