#![no_main]

use libfuzzer_sys::fuzz_target;
use hosm_core::scenario::{apply_override, dump_config, preset};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ov) = hosm_core::parse_override(text) else { return };
    let base = preset("paper-triple-fixed").unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&dump_config(&base)).unwrap();
    let _ = apply_override(&mut doc, &ov);
});
