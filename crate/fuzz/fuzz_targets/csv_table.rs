#![no_main]

use blandau::output::parse_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok((_, table)) = parse_csv(text) {
            for row in &table.rows {
                assert_eq!(row.len(), table.columns.len());
            }
        }
    }
});
