#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = degenflow::config::parse_config(text) {
            // Accepted configs must expand into at least one run.
            assert!(!cfg.runs().is_empty());
        }
    }
});
