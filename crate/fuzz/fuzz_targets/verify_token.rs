#![no_main]

use std::sync::OnceLock;

use fieldguard_core::{verify_token, VerifyKey};
use libfuzzer_sys::fuzz_target;

static KEYS: OnceLock<[VerifyKey; 2]> = OnceLock::new();

fuzz_target!(|data: &[u8]| {
    let keys = KEYS.get_or_init(|| {
        [
            VerifyKey::from_pem_auto(include_bytes!("../../assets/keys/rsa-a/public.pem")).unwrap(),
            VerifyKey::from_pem_auto(include_bytes!("../../assets/keys/ec-a/public.pem")).unwrap(),
        ]
    });
    let Ok(token) = std::str::from_utf8(data) else {
        return;
    };
    for key in keys {
        let _ = verify_token(token, key, 1_700_000_000);
    }
});
