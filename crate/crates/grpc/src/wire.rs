//! A protobuf message decoded just deep enough to rewrite its top-level
//! scalar fields.
//!
//! Singular integer, float and string fields are decoded into values;
//! every other known field (bool, enum, bytes, nested messages, repeated
//! and map fields) is kept as its raw encoded records, and unknown fields
//! are carried through verbatim. Re-encoding emits known fields in
//! declaration order followed by the unknown records.

use std::sync::Arc;

use fieldguard_core::{FieldInfo, FieldKind, ReflectError, ReflectMessage, ScalarValue};
use serde_json::Value;
use thiserror::Error;

use crate::schema::{FieldSchema, FieldType, MessageSchema};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid protobuf at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    schema: Arc<MessageSchema>,
    scalars: Vec<Option<ScalarValue>>,
    raw: Vec<Vec<u8>>,
    unknown: Vec<u8>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: &'static str) -> DecodeError {
        DecodeError { offset: self.pos, reason }
    }

    fn varint(&mut self) -> Result<u64, DecodeError> {
        let mut value = 0u64;
        for i in 0..10 {
            let Some(&byte) = self.buf.get(self.pos) else {
                return Err(self.err("truncated varint"));
            };
            self.pos += 1;
            if i == 9 && byte > 1 {
                return Err(self.err("varint overflows 64 bits"));
            }
            value |= u64::from(byte & 0x7f) << (7 * i);
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(self.err("varint longer than 10 bytes"))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&end| end <= self.buf.len());
        let Some(end) = end else {
            return Err(self.err("truncated field"));
        };
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn fixed32(&mut self) -> Result<[u8; 4], DecodeError> {
        Ok(self.take(4)?.try_into().expect("4 bytes"))
    }

    fn fixed64(&mut self) -> Result<[u8; 8], DecodeError> {
        Ok(self.take(8)?.try_into().expect("8 bytes"))
    }

    fn length_delimited(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.varint()?;
        let len = usize::try_from(len).map_err(|_| self.err("length overflows"))?;
        self.take(len)
    }

    /// Skips the payload of a record with the given wire type.
    fn skip(&mut self, wire_type: u8) -> Result<(), DecodeError> {
        match wire_type {
            0 => self.varint().map(drop),
            1 => self.take(8).map(drop),
            2 => self.length_delimited().map(drop),
            5 => self.take(4).map(drop),
            3 | 4 => Err(self.err("groups are not supported")),
            _ => Err(self.err("invalid wire type")),
        }
    }
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_key(out: &mut Vec<u8>, number: u32, wire_type: u8) {
    put_varint(out, (u64::from(number) << 3) | u64::from(wire_type));
}

fn decode_scalar(field: &FieldSchema, r: &mut Reader<'_>) -> Result<ScalarValue, DecodeError> {
    Ok(match field.ty {
        FieldType::Int32 => ScalarValue::Int(i64::from(r.varint()? as u32 as i32)),
        FieldType::Int64 => ScalarValue::Int(r.varint()? as i64),
        FieldType::Uint32 => ScalarValue::Uint(u64::from(r.varint()? as u32)),
        FieldType::Uint64 => ScalarValue::Uint(r.varint()?),
        FieldType::Sint32 => {
            let n = r.varint()? as u32;
            ScalarValue::Int(i64::from((n >> 1) as i32 ^ -((n & 1) as i32)))
        }
        FieldType::Sint64 => {
            let n = r.varint()?;
            ScalarValue::Int((n >> 1) as i64 ^ -((n & 1) as i64))
        }
        FieldType::Fixed32 => ScalarValue::Uint(u64::from(u32::from_le_bytes(r.fixed32()?))),
        FieldType::Sfixed32 => ScalarValue::Int(i64::from(i32::from_le_bytes(r.fixed32()?))),
        FieldType::Float => ScalarValue::Float(f64::from(f32::from_le_bytes(r.fixed32()?))),
        FieldType::Fixed64 => ScalarValue::Uint(u64::from_le_bytes(r.fixed64()?)),
        FieldType::Sfixed64 => ScalarValue::Int(i64::from_le_bytes(r.fixed64()?)),
        FieldType::Double => ScalarValue::Float(f64::from_le_bytes(r.fixed64()?)),
        FieldType::String => {
            let bytes = r.length_delimited()?;
            let s = std::str::from_utf8(bytes).map_err(|_| r.err("string field is not UTF-8"))?;
            ScalarValue::Str(s.to_owned())
        }
        FieldType::Bool | FieldType::Bytes | FieldType::Enum | FieldType::Message => {
            unreachable!("not a scalar field")
        }
    })
}

fn encode_scalar(out: &mut Vec<u8>, field: &FieldSchema, value: &ScalarValue) {
    put_key(out, field.number, field.ty.wire_type());
    match (field.ty, value) {
        (FieldType::Int32 | FieldType::Int64, ScalarValue::Int(v)) => put_varint(out, *v as u64),
        (FieldType::Uint32 | FieldType::Uint64, ScalarValue::Uint(v)) => put_varint(out, *v),
        (FieldType::Sint32, ScalarValue::Int(v)) => {
            let n = *v as i32;
            put_varint(out, u64::from(((n << 1) ^ (n >> 31)) as u32));
        }
        (FieldType::Sint64, ScalarValue::Int(v)) => put_varint(out, ((v << 1) ^ (v >> 63)) as u64),
        (FieldType::Fixed32, ScalarValue::Uint(v)) => out.extend_from_slice(&(*v as u32).to_le_bytes()),
        (FieldType::Sfixed32, ScalarValue::Int(v)) => out.extend_from_slice(&(*v as i32).to_le_bytes()),
        (FieldType::Float, ScalarValue::Float(v)) => out.extend_from_slice(&(*v as f32).to_le_bytes()),
        (FieldType::Fixed64, ScalarValue::Uint(v)) => out.extend_from_slice(&v.to_le_bytes()),
        (FieldType::Sfixed64, ScalarValue::Int(v)) => out.extend_from_slice(&v.to_le_bytes()),
        (FieldType::Double, ScalarValue::Float(v)) => out.extend_from_slice(&v.to_le_bytes()),
        (FieldType::String, ScalarValue::Str(s)) => {
            put_varint(out, s.len() as u64);
            out.extend_from_slice(s.as_bytes());
        }
        (ty, value) => unreachable!("{value:?} stored in a {ty:?} field"),
    }
}

/// Brings a value into the representable range of the field's type.
fn normalize(ty: FieldType, value: ScalarValue) -> ScalarValue {
    match (ty, value) {
        (FieldType::Int32 | FieldType::Sint32 | FieldType::Sfixed32, ScalarValue::Int(v)) => {
            ScalarValue::Int(v.clamp(i64::from(i32::MIN), i64::from(i32::MAX)))
        }
        (FieldType::Uint32 | FieldType::Fixed32, ScalarValue::Uint(v)) => ScalarValue::Uint(v.min(u64::from(u32::MAX))),
        (FieldType::Float, ScalarValue::Float(v)) => ScalarValue::Float(f64::from(v as f32)),
        (_, value) => value,
    }
}

fn is_default(value: &ScalarValue) -> bool {
    match value {
        ScalarValue::Int(v) => *v == 0,
        ScalarValue::Uint(v) => *v == 0,
        ScalarValue::Float(v) => *v == 0.0,
        ScalarValue::Str(s) => s.is_empty(),
    }
}

fn default_for(kind: FieldKind) -> ScalarValue {
    match kind {
        FieldKind::UnsignedInteger => ScalarValue::Uint(0),
        FieldKind::Float => ScalarValue::Float(0.0),
        FieldKind::String => ScalarValue::Str(String::new()),
        _ => ScalarValue::Int(0),
    }
}

fn scalar_slot(field: &FieldSchema) -> bool {
    field.is_scalar()
}

impl WireMessage {
    /// An empty message of the given type.
    pub fn new(schema: Arc<MessageSchema>) -> Self {
        let n = schema.fields().len();
        WireMessage { schema, scalars: vec![None; n], raw: vec![Vec::new(); n], unknown: Vec::new() }
    }

    pub fn decode(schema: Arc<MessageSchema>, buf: &[u8]) -> Result<Self, DecodeError> {
        let mut msg = WireMessage::new(schema);
        let mut r = Reader { buf, pos: 0 };
        while r.pos < buf.len() {
            let start = r.pos;
            let key = r.varint()?;
            let wire_type = (key & 7) as u8;
            let number = u32::try_from(key >> 3).map_err(|_| r.err("field number out of range"))?;
            if number == 0 {
                return Err(r.err("field number zero"));
            }
            match msg.schema.index_of_number(number) {
                Some(idx) if scalar_slot(&msg.schema.fields()[idx]) => {
                    let field = &msg.schema.fields()[idx];
                    if wire_type != field.ty.wire_type() {
                        return Err(r.err("wire type does not match the schema"));
                    }
                    let value = decode_scalar(field, &mut r)?;
                    msg.scalars[idx] = Some(value);
                }
                Some(idx) => {
                    r.skip(wire_type)?;
                    msg.raw[idx].extend_from_slice(&buf[start..r.pos]);
                }
                None => {
                    r.skip(wire_type)?;
                    msg.unknown.extend_from_slice(&buf[start..r.pos]);
                }
            }
        }
        Ok(msg)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (idx, field) in self.schema.fields().iter().enumerate() {
            if let Some(value) = &self.scalars[idx] {
                if field.explicit_presence || !is_default(value) {
                    encode_scalar(&mut out, field, value);
                }
            }
            out.extend_from_slice(&self.raw[idx]);
        }
        out.extend_from_slice(&self.unknown);
        out
    }

    pub fn schema(&self) -> &Arc<MessageSchema> {
        &self.schema
    }

    fn field(&self, name: &str) -> Result<(usize, &FieldSchema), ReflectError> {
        let idx = self.schema.index_of_name(name).ok_or_else(|| ReflectError::NoSuchField(name.to_owned()))?;
        Ok((idx, &self.schema.fields()[idx]))
    }

    /// The fields reported by [`ReflectMessage::fields`] as a JSON object,
    /// typed like `FlatMessage` (integers, floats, strings). Bool fields
    /// become booleans; other non-scalar fields become `null`.
    pub fn to_json(&self) -> Value {
        let mut map = serde_json::Map::new();
        for info in self.fields() {
            let value = match info.kind {
                kind if kind.is_scalar() => match self.get_scalar(&info.name) {
                    Ok(ScalarValue::Int(v)) => Value::from(v),
                    Ok(ScalarValue::Uint(v)) => Value::from(v),
                    Ok(ScalarValue::Float(v)) => Value::from(v),
                    Ok(ScalarValue::Str(v)) => Value::from(v),
                    Err(_) => Value::Null,
                },
                FieldKind::Bool => {
                    let (idx, _) = self.field(&info.name).expect("listed field");
                    Value::Bool(last_varint(&self.raw[idx]).is_some_and(|v| v != 0))
                }
                _ => Value::Null,
            };
            map.insert(info.name, value);
        }
        Value::Object(map)
    }
}

fn last_varint(records: &[u8]) -> Option<u64> {
    let mut r = Reader { buf: records, pos: 0 };
    let mut last = None;
    while r.pos < records.len() {
        let key = r.varint().ok()?;
        if key & 7 != 0 {
            r.skip((key & 7) as u8).ok()?;
            continue;
        }
        last = Some(r.varint().ok()?);
    }
    last
}

impl ReflectMessage for WireMessage {
    fn fields(&self) -> Vec<FieldInfo> {
        self.schema
            .fields()
            .iter()
            .enumerate()
            .filter(|(idx, field)| !(scalar_slot(field) && field.explicit_presence && self.scalars[*idx].is_none()))
            .map(|(_, field)| FieldInfo::new(field.name.clone(), field.kind()))
            .collect()
    }

    fn get_scalar(&self, name: &str) -> Result<ScalarValue, ReflectError> {
        let (idx, field) = self.field(name)?;
        if !scalar_slot(field) {
            return Err(ReflectError::KindMismatch {
                field: name.to_owned(),
                actual: field.kind(),
                requested: "scalar",
            });
        }
        Ok(self.scalars[idx].clone().unwrap_or_else(|| default_for(field.kind())))
    }

    fn set_scalar(&mut self, name: &str, value: ScalarValue) -> Result<(), ReflectError> {
        let (idx, field) = self.field(name)?;
        let expected = field.kind();
        let matches = matches!(
            (expected, &value),
            (FieldKind::Integer, ScalarValue::Int(_))
                | (FieldKind::UnsignedInteger, ScalarValue::Uint(_))
                | (FieldKind::Float, ScalarValue::Float(_))
                | (FieldKind::String, ScalarValue::Str(_))
        );
        if !matches {
            return Err(ReflectError::KindMismatch {
                field: name.to_owned(),
                actual: expected,
                requested: value.kind_name(),
            });
        }
        let ty = field.ty;
        self.scalars[idx] = Some(normalize(ty, value));
        Ok(())
    }

    fn clear_field(&mut self, name: &str) -> Result<(), ReflectError> {
        let (idx, _) = self.field(name)?;
        self.scalars[idx] = None;
        self.raw[idx].clear();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use prost::Message;

    #[derive(Clone, PartialEq, prost::Message)]
    struct Inner {
        #[prost(string, tag = "1")]
        city: String,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    struct Sample {
        #[prost(int32, tag = "1")]
        i32: i32,
        #[prost(int64, tag = "2")]
        i64: i64,
        #[prost(uint32, tag = "3")]
        u32: u32,
        #[prost(uint64, tag = "4")]
        u64: u64,
        #[prost(sint32, tag = "5")]
        s32: i32,
        #[prost(sint64, tag = "6")]
        s64: i64,
        #[prost(fixed32, tag = "7")]
        f32x: u32,
        #[prost(fixed64, tag = "8")]
        f64x: u64,
        #[prost(sfixed32, tag = "9")]
        sf32: i32,
        #[prost(sfixed64, tag = "10")]
        sf64: i64,
        #[prost(float, tag = "11")]
        flt: f32,
        #[prost(double, tag = "12")]
        dbl: f64,
        #[prost(string, tag = "13")]
        text: String,
        #[prost(bool, tag = "14")]
        flag: bool,
        #[prost(bytes = "vec", tag = "15")]
        blob: Vec<u8>,
        #[prost(message, optional, tag = "16")]
        inner: Option<Inner>,
        #[prost(int64, repeated, tag = "17")]
        list: Vec<i64>,
        #[prost(int64, optional, tag = "18")]
        maybe: Option<i64>,
    }

    /// `Sample` minus a few fields, to exercise unknown-field passthrough.
    #[derive(Clone, PartialEq, prost::Message)]
    struct SampleSubset {
        #[prost(int32, tag = "1")]
        i32: i32,
        #[prost(string, tag = "13")]
        text: String,
    }

    pub(crate) fn sample_schema() -> Arc<MessageSchema> {
        use FieldType::*;
        let fields = vec![
            FieldSchema::new("i32", 1, Int32),
            FieldSchema::new("i64", 2, Int64),
            FieldSchema::new("u32", 3, Uint32),
            FieldSchema::new("u64", 4, Uint64),
            FieldSchema::new("s32", 5, Sint32),
            FieldSchema::new("s64", 6, Sint64),
            FieldSchema::new("f32x", 7, Fixed32),
            FieldSchema::new("f64x", 8, Fixed64),
            FieldSchema::new("sf32", 9, Sfixed32),
            FieldSchema::new("sf64", 10, Sfixed64),
            FieldSchema::new("flt", 11, Float),
            FieldSchema::new("dbl", 12, Double),
            FieldSchema::new("text", 13, String),
            FieldSchema::new("flag", 14, Bool),
            FieldSchema::new("blob", 15, Bytes),
            FieldSchema::new("inner", 16, Message).with_presence(),
            FieldSchema::new("list", 17, Int64).repeated(),
            FieldSchema::new("maybe", 18, Int64).with_presence(),
        ];
        Arc::new(MessageSchema::new("test.Sample", fields).unwrap())
    }

    fn subset_schema() -> Arc<MessageSchema> {
        let fields =
            vec![FieldSchema::new("i32", 1, FieldType::Int32), FieldSchema::new("text", 13, FieldType::String)];
        Arc::new(MessageSchema::new("test.SampleSubset", fields).unwrap())
    }

    fn arb_sample() -> impl Strategy<Value = Sample> {
        (
            (any::<i32>(), any::<i64>(), any::<u32>(), any::<u64>(), any::<i32>(), any::<i64>()),
            (any::<u32>(), any::<u64>(), any::<i32>(), any::<i64>(), any::<f32>(), any::<f64>()),
            (".{0,8}", any::<bool>(), prop::collection::vec(any::<u8>(), 0..6)),
            (prop::option::of(".{0,4}"), prop::collection::vec(any::<i64>(), 0..4), prop::option::of(any::<i64>())),
        )
            .prop_filter("NaN breaks equality", |(_, (_, _, _, _, f, d), _, _)| !f.is_nan() && !d.is_nan())
            .prop_map(|(a, b, c, d)| Sample {
                i32: a.0,
                i64: a.1,
                u32: a.2,
                u64: a.3,
                s32: a.4,
                s64: a.5,
                f32x: b.0,
                f64x: b.1,
                sf32: b.2,
                sf64: b.3,
                flt: b.4,
                dbl: b.5,
                text: c.0,
                flag: c.1,
                blob: c.2,
                inner: d.0.map(|city| Inner { city }),
                list: d.1,
                maybe: d.2,
            })
    }

    #[test]
    fn reads_every_scalar_kind() {
        let sample = Sample {
            i32: -5,
            i64: -6,
            u32: 7,
            u64: 8,
            s32: -9,
            s64: -10,
            f32x: 11,
            f64x: 12,
            sf32: -13,
            sf64: -14,
            flt: 1.5,
            dbl: 2.25,
            text: "Alice".into(),
            flag: true,
            blob: vec![1, 2],
            inner: Some(Inner { city: "Berlin".into() }),
            list: vec![1, 2, 3],
            maybe: Some(0),
        };
        let msg = WireMessage::decode(sample_schema(), &sample.encode_to_vec()).unwrap();
        let get = |name| msg.get_scalar(name).unwrap();
        assert_eq!(get("i32"), ScalarValue::Int(-5));
        assert_eq!(get("i64"), ScalarValue::Int(-6));
        assert_eq!(get("u32"), ScalarValue::Uint(7));
        assert_eq!(get("u64"), ScalarValue::Uint(8));
        assert_eq!(get("s32"), ScalarValue::Int(-9));
        assert_eq!(get("s64"), ScalarValue::Int(-10));
        assert_eq!(get("f32x"), ScalarValue::Uint(11));
        assert_eq!(get("f64x"), ScalarValue::Uint(12));
        assert_eq!(get("sf32"), ScalarValue::Int(-13));
        assert_eq!(get("sf64"), ScalarValue::Int(-14));
        assert_eq!(get("flt"), ScalarValue::Float(1.5));
        assert_eq!(get("dbl"), ScalarValue::Float(2.25));
        assert_eq!(get("text"), ScalarValue::Str("Alice".into()));
        assert_eq!(get("maybe"), ScalarValue::Int(0));
        assert!(msg.get_scalar("flag").is_err());

        let kinds: Vec<_> = msg.fields().into_iter().map(|f| f.kind).collect();
        assert_eq!(kinds.len(), 18);
        assert_eq!(kinds[13], FieldKind::Bool);
        assert_eq!(kinds[14], FieldKind::Bytes);
        assert_eq!(kinds[15], FieldKind::Nested);
        assert_eq!(kinds[16], FieldKind::Repeated);
        assert_eq!(msg.to_json()["flag"], Value::Bool(true));
    }

    #[test]
    fn absent_optional_scalars_are_not_reported() {
        let msg = WireMessage::decode(sample_schema(), &Sample::default().encode_to_vec()).unwrap();
        let names: Vec<_> = msg.fields().into_iter().map(|f| f.name).collect();
        assert!(!names.contains(&"maybe".to_owned()));
        assert!(names.contains(&"i32".to_owned()));
        assert!(names.contains(&"inner".to_owned()));
    }

    #[test]
    fn writes_are_visible_to_prost_and_clamped() {
        let mut msg = WireMessage::new(sample_schema());
        msg.set_scalar("i32", ScalarValue::Int(i64::MIN)).unwrap();
        msg.set_scalar("u32", ScalarValue::Uint(u64::MAX)).unwrap();
        msg.set_scalar("s32", ScalarValue::Int(-1)).unwrap();
        msg.set_scalar("s64", ScalarValue::Int(i64::MIN)).unwrap();
        msg.set_scalar("flt", ScalarValue::Float(-1.0)).unwrap();
        msg.set_scalar("text", ScalarValue::Str("A".into())).unwrap();
        msg.set_scalar("maybe", ScalarValue::Int(0)).unwrap();
        assert!(msg.set_scalar("text", ScalarValue::Int(1)).is_err());
        assert!(msg.set_scalar("u64", ScalarValue::Int(1)).is_err());
        assert!(msg.set_scalar("nope", ScalarValue::Int(1)).is_err());
        let decoded = Sample::decode(msg.encode().as_slice()).unwrap();
        assert_eq!(decoded.i32, i32::MIN);
        assert_eq!(decoded.u32, u32::MAX);
        assert_eq!(decoded.s32, -1);
        assert_eq!(decoded.s64, i64::MIN);
        assert_eq!(decoded.flt, -1.0);
        assert_eq!(decoded.text, "A");
        assert_eq!(decoded.maybe, Some(0));
    }

    #[test]
    fn clearing_non_scalars_resets_them() {
        let sample = Sample {
            flag: true,
            blob: vec![9],
            inner: Some(Inner { city: "x".into() }),
            list: vec![4, 5],
            ..Sample::default()
        };
        let mut msg = WireMessage::decode(sample_schema(), &sample.encode_to_vec()).unwrap();
        for name in ["flag", "blob", "inner", "list"] {
            msg.clear_field(name).unwrap();
        }
        assert_eq!(Sample::decode(msg.encode().as_slice()).unwrap(), Sample::default());
    }

    #[test]
    fn unknown_fields_survive() {
        let sample = Sample { i32: 3, text: "keep".into(), dbl: 4.5, list: vec![1], ..Sample::default() };
        let mut msg = WireMessage::decode(subset_schema(), &sample.encode_to_vec()).unwrap();
        msg.set_scalar("i32", ScalarValue::Int(-1)).unwrap();
        let back = Sample::decode(msg.encode().as_slice()).unwrap();
        assert_eq!(back, Sample { i32: -1, ..sample });
        let subset = SampleSubset::decode(msg.encode().as_slice()).unwrap();
        assert_eq!(subset.text, "keep");
    }

    #[test]
    fn malformed_input_is_rejected() {
        let schema = sample_schema();
        for bad in [
            &[0x08][..],                                                         // truncated varint value
            &[0x00, 0x01],                                                       // field number zero
            &[0x6a, 0x05, b'a'],                                                 // string longer than buffer
            &[0x6a, 0x02, 0xff, 0xfe],                                           // invalid UTF-8
            &[0x0d, 1, 2, 3, 4],                                                 // wire type 5 on an int32 field
            &[0x0b],                                                             // group start
            &[0x08, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0x7f], // overlong varint
            &[0xf8, 0xff, 0xff, 0xff, 0xff, 0x0f, 0x01],                         // field number beyond u32
        ] {
            assert!(WireMessage::decode(schema.clone(), bad).is_err(), "{bad:?}");
        }
    }

    proptest! {
        #[test]
        fn re_encoding_preserves_prost_semantics(sample in arb_sample()) {
            let bytes = sample.encode_to_vec();
            let msg = WireMessage::decode(sample_schema(), &bytes).unwrap();
            let back = Sample::decode(msg.encode().as_slice()).unwrap();
            prop_assert_eq!(back, sample);
        }

        #[test]
        fn decoding_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            if let Ok(msg) = WireMessage::decode(sample_schema(), &bytes) {
                let again = WireMessage::decode(sample_schema(), &msg.encode()).unwrap();
                prop_assert_eq!(again.encode(), msg.encode());
            }
        }
    }
}
