#![no_main]

use libfuzzer_sys::fuzz_target;
use nonlocal_core::kernels::KernelSpec;

// Any spec that builds must give a finite, positive normalization and a
// tail mass inside [0, 1].
fuzz_target!(|data: &[u8]| {
    if data.is_empty() {
        return;
    }
    let dim = 1 + (data[0] % 4) as usize;
    let Ok(spec) = serde_json::from_slice::<KernelSpec>(&data[1..]) else {
        return;
    };
    if let Ok(k) = spec.build(dim) {
        assert!(k.normalization().is_finite() && k.normalization() > 0.0);
        if let Ok(t) = k.tail_mass(0.5 * k.effective_radius()) {
            assert!((0.0..=1.0 + 1e-12).contains(&t), "{t}");
        }
    }
});
