#![no_main]

use fieldguard_core::parse_policy;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(doc) = parse_policy(text) {
        let again = parse_policy(&doc.to_json()).expect("serialized policy parses");
        assert_eq!(doc, again);
    }
});
