#![no_main]

use hosm_core::scenario::dump_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = hosm_core::parse_config_str(text) {
        let dumped = dump_config(&cfg);
        let again = hosm_core::parse_config_str(&dumped).expect("dumped config reparses");
        assert_eq!(dumped, dump_config(&again));
    }
});
