#![no_main]

use std::sync::{Arc, OnceLock};

use fieldguard_grpc::{FieldSchema, FieldType, MessageSchema, WireMessage};
use libfuzzer_sys::fuzz_target;

static SCHEMA: OnceLock<Arc<MessageSchema>> = OnceLock::new();

fn schema() -> Arc<MessageSchema> {
    use FieldType::*;
    let types = [
        Double, Float, Int64, Uint64, Int32, Fixed64, Fixed32, Bool, String, Bytes, Uint32, Enum, Sfixed32, Sfixed64,
        Sint32, Sint64, Message,
    ];
    let mut fields: Vec<FieldSchema> =
        types.iter().enumerate().map(|(i, ty)| FieldSchema::new(format!("f{}", i + 1), i as u32 + 1, *ty)).collect();
    fields.push(FieldSchema::new("rep_int", 20, Int64).repeated());
    fields.push(FieldSchema::new("opt_str", 21, String).with_presence());
    Arc::new(MessageSchema::new("fuzz.Everything", fields).unwrap())
}

fuzz_target!(|data: &[u8]| {
    let schema = SCHEMA.get_or_init(schema).clone();
    let Ok(message) = WireMessage::decode(schema.clone(), data) else {
        return;
    };
    let encoded = message.encode();
    let again = WireMessage::decode(schema, &encoded).expect("re-encoded message decodes");
    assert_eq!(again.encode(), encoded);
    let _ = message.to_json();
});
