use nonlocal_core::config::{resolve_config, DescendConfig, DescentMethod, GradCheckConfig};
use nonlocal_core::experiments::{parse_trace_csv, trace_csv};
use nonlocal_core::optimizers::nlgd_fixed;
use nonlocal_core::validation::catalog_field;
use nonlocal_core::{
    nonlocal_gradient, BoxDomain, Error, KernelFamily, NonlocalConfig, Point, RadialKernel, ScalarField, StepSchedule,
};
use proptest::prelude::*;
use serde_json::json;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_fields_reproduce_their_slope(
        c0 in -3.0..3.0f64, c1 in -3.0..3.0f64, x0 in 0.3..0.7f64, x1 in 0.3..0.7f64,
        bump in any::<bool>(),
    ) {
        let u = ScalarField::new(BoxDomain::unit(2), move |x| c0 * x[0] + c1 * x[1] + 0.5);
        let k = if bump { RadialKernel::bump(2, 0.2, 2) } else { RadialKernel::gaussian(2, 0.1, 4) }.unwrap();
        let g = nonlocal_gradient(&u, &Point::from_vec(vec![x0, x1]), &NonlocalConfig::new(k).unwrap()).unwrap();
        prop_assert!((g[0] - c0).abs() < 1e-9 && (g[1] - c1).abs() < 1e-9, "{g:?} vs ({c0}, {c1})");
    }

    #[test]
    fn resolved_configs_reproduce_themselves(n in 1u32..64, probes in 1usize..100, seed in any::<u64>()) {
        let overrides = vec![format!("kernel.n={n}"), format!("probes={probes}"), format!("seed={seed}")];
        let cfg: GradCheckConfig = resolve_config(json!({}), &overrides).unwrap();
        prop_assert_eq!(cfg.kernel.n, n);
        let again: GradCheckConfig = resolve_config(serde_json::to_value(&cfg).unwrap(), &[]).unwrap();
        prop_assert_eq!(again, cfg);
    }
}

#[test]
fn descent_trace_survives_csv_round_trip() {
    let entry = catalog_field("quadratic", &BoxDomain::unit(2)).unwrap();
    let cfg = NonlocalConfig::new(RadialKernel::gaussian(2, 0.1, 16).unwrap()).unwrap();
    let trace = nlgd_fixed(
        &entry.field,
        &Point::from_vec(vec![0.25, 0.75]),
        &cfg,
        &StepSchedule::Fixed { alpha: 0.2 },
        30,
        1e-10,
    )
    .unwrap();
    assert!(trace.lengths_consistent());
    let table = parse_trace_csv(&trace_csv(&trace, Some(&["x", "y"])).unwrap()).unwrap();
    assert!(table.matches(&trace));
    assert_eq!(table.coord_names, ["x", "y"]);
}

#[test]
fn descent_config_switches_method_wholesale() {
    let raw = json!({"descent": {"method": "line_search", "cap": 0.5}, "kernel": {"family": "bump"}});
    let cfg: DescendConfig = resolve_config(raw, &["max_iters=7".into()]).unwrap();
    assert_eq!(cfg.descent, DescentMethod::LineSearch { cap: 0.5 });
    assert_eq!(cfg.kernel.family, KernelFamily::Bump);
    assert_eq!(cfg.max_iters, 7);
}

#[test]
fn unknown_keys_name_their_path() {
    let err = resolve_config::<GradCheckConfig>(json!({"kernel": {"radius": 1.0}}), &[]).unwrap_err();
    match err {
        Error::Config { key, .. } => assert!(key.contains("kernel"), "{key}"),
        other => panic!("unexpected {other:?}"),
    }
}
