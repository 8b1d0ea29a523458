#![no_main]

use blandau::observables::PhysicalUnits;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(units) = PhysicalUnits::from_toml_str(text) {
            assert!(units.gamma_per_second() > 0.0);
        }
    }
});
