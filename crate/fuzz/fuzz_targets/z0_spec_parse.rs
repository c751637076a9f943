#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = hosm_core::parse_z0_spec(text) {
            assert!(!spec.gammas.is_empty());
            assert!(spec.gammas.iter().all(|g| g.is_finite() && *g > 0.0));
        }
    }
});
