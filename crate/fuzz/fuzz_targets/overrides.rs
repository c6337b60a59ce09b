#![no_main]

use libfuzzer_sys::fuzz_target;
use nonlocal_core::config::{apply_override, resolve_config, GradCheckConfig};
use serde_json::json;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let overrides: Vec<String> = text.lines().map(str::to_string).collect();
    let mut doc = json!({});
    for o in &overrides {
        let _ = apply_override(&mut doc, o);
    }
    let _ = resolve_config::<GradCheckConfig>(json!({}), &overrides);
});
