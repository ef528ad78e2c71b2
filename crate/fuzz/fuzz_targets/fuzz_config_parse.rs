//! Fuzz the config parser: arbitrary text must produce a clean parse or
//! a structured error, never a panic, and validation must not accept
//! non-finite or non-positive tolerances.

#![no_main]

use libfuzzer_sys::fuzz_target;
use veechlab::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_text(text) {
            assert!(cfg.tolerance.is_finite() && cfg.tolerance > 0.0);
            assert!(cfg.s.is_finite() && cfg.s > 0.0);
            assert!(cfg.k >= 1 && cfg.k <= 62);
            assert!(cfg.stride > 0);
        }
    }
});
