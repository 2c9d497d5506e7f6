#![no_main]

use fieldguard_grpc::{encode_frame, parse_frame};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(payload) = parse_frame(data) {
        assert_eq!(&encode_frame(payload)[..], data);
    }
    assert_eq!(parse_frame(&encode_frame(data)), Ok(data));
});
