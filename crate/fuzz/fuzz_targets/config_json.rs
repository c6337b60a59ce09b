#![no_main]

use libfuzzer_sys::fuzz_target;
use nonlocal_core::config::{resolve_config, DescendConfig, GradCheckConfig, SweepConfig};
use nonlocal_core::experiments::PulseRunConfig;

// Resolving arbitrary JSON must fail with an error, never panic, and a
// resolved config must resolve to itself.
fuzz_target!(|data: &[u8]| {
    let Ok(raw) = serde_json::from_slice::<serde_json::Value>(data) else {
        return;
    };
    if let Ok(c) = resolve_config::<GradCheckConfig>(raw.clone(), &[]) {
        let again: GradCheckConfig = resolve_config(serde_json::to_value(&c).unwrap(), &[]).unwrap();
        assert_eq!(again, c);
    }
    let _ = resolve_config::<SweepConfig>(raw.clone(), &[]);
    let _ = resolve_config::<DescendConfig>(raw.clone(), &[]);
    let _ = resolve_config::<PulseRunConfig>(raw, &[]);
});
