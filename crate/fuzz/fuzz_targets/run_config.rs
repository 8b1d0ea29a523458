#![no_main]

use blandau::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_toml_str(text) {
            let _ = cfg.model.to_params();
            if let Ok(again) = cfg.to_toml_string() {
                assert!(RunConfig::from_toml_str(&again).is_ok());
            }
        }
    }
});
