#![no_main]

use fieldguard_core::parse_field_catalog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_field_catalog(text);
    }
});
