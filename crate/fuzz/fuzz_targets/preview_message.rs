#![no_main]

use fieldguard_core::{minimize_message, request_rng, CompiledRule, FlatMessage, NoiseSpec, PurposeRule};
use libfuzzer_sys::fuzz_target;
use serde_json::Value;

fuzz_target!(|data: &[u8]| {
    let Ok(value) = serde_json::from_slice::<Value>(data) else {
        return;
    };
    let Ok(mut message) = FlatMessage::from_json(value) else {
        return;
    };
    let rule = PurposeRule::builder("fuzz")
        .allow("name")
        .generalize("age", 10.0)
        .generalize("zip", 3.0)
        .noise("latitude", NoiseSpec::laplace(1.0, 0.01).unwrap())
        .noise("balance", NoiseSpec::gaussian(1.0, 1e-5, 100.0).unwrap())
        .reduce("order_total", 10.0)
        .reduce("device_id", 4.0)
        .build()
        .unwrap();
    let rule = CompiledRule::from(&rule);
    minimize_message(&mut message, &rule, &mut request_rng(Some(0))).expect("flat messages minimize");
    let _ = message.to_json();
});
