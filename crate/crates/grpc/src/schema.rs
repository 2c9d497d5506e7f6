//! Runtime view of compiled protobuf schemas: just enough descriptor data to
//! address the top-level fields of a message and to find the response type
//! of a gRPC method.

use std::collections::HashMap;
use std::sync::Arc;

use fieldguard_core::FieldKind;
use prost::Message;
use prost_types::field_descriptor_proto::{Label, Type};
use prost_types::{DescriptorProto, FileDescriptorSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("cannot decode file descriptor set: {0}")]
    Decode(String),
    #[error("message `{message}`: field `{field}`: {reason}")]
    Field { message: String, field: String, reason: String },
    #[error("unknown message type `{0}`")]
    UnknownMessage(String),
}

/// Protobuf field types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldType {
    Double,
    Float,
    Int64,
    Uint64,
    Int32,
    Fixed64,
    Fixed32,
    Bool,
    String,
    Bytes,
    Uint32,
    Enum,
    Sfixed32,
    Sfixed64,
    Sint32,
    Sint64,
    Message,
}

impl FieldType {
    /// Wire type of a single (unpacked) value.
    pub fn wire_type(self) -> u8 {
        match self {
            FieldType::Double | FieldType::Fixed64 | FieldType::Sfixed64 => 1,
            FieldType::Float | FieldType::Fixed32 | FieldType::Sfixed32 => 5,
            FieldType::String | FieldType::Bytes | FieldType::Message => 2,
            _ => 0,
        }
    }

    fn from_proto(ty: Type) -> Option<Self> {
        Some(match ty {
            Type::Double => FieldType::Double,
            Type::Float => FieldType::Float,
            Type::Int64 => FieldType::Int64,
            Type::Uint64 => FieldType::Uint64,
            Type::Int32 => FieldType::Int32,
            Type::Fixed64 => FieldType::Fixed64,
            Type::Fixed32 => FieldType::Fixed32,
            Type::Bool => FieldType::Bool,
            Type::String => FieldType::String,
            Type::Bytes => FieldType::Bytes,
            Type::Uint32 => FieldType::Uint32,
            Type::Enum => FieldType::Enum,
            Type::Sfixed32 => FieldType::Sfixed32,
            Type::Sfixed64 => FieldType::Sfixed64,
            Type::Sint32 => FieldType::Sint32,
            Type::Sint64 => FieldType::Sint64,
            Type::Message => FieldType::Message,
            Type::Group => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSchema {
    pub name: String,
    pub number: u32,
    pub ty: FieldType,
    pub repeated: bool,
    /// Singular field that tracks presence (proto2, `optional`, oneof member).
    pub explicit_presence: bool,
}

impl FieldSchema {
    pub fn new(name: impl Into<String>, number: u32, ty: FieldType) -> Self {
        FieldSchema { name: name.into(), number, ty, repeated: false, explicit_presence: false }
    }

    pub fn repeated(mut self) -> Self {
        self.repeated = true;
        self
    }

    pub fn with_presence(mut self) -> Self {
        self.explicit_presence = true;
        self
    }

    pub fn kind(&self) -> FieldKind {
        if self.repeated {
            return FieldKind::Repeated;
        }
        match self.ty {
            FieldType::Int32
            | FieldType::Int64
            | FieldType::Sint32
            | FieldType::Sint64
            | FieldType::Sfixed32
            | FieldType::Sfixed64 => FieldKind::Integer,
            FieldType::Uint32 | FieldType::Uint64 | FieldType::Fixed32 | FieldType::Fixed64 => {
                FieldKind::UnsignedInteger
            }
            FieldType::Float | FieldType::Double => FieldKind::Float,
            FieldType::String => FieldKind::String,
            FieldType::Bool => FieldKind::Bool,
            FieldType::Bytes => FieldKind::Bytes,
            FieldType::Enum => FieldKind::Enum,
            FieldType::Message => FieldKind::Nested,
        }
    }

    pub(crate) fn is_scalar(&self) -> bool {
        self.kind().is_scalar()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageSchema {
    name: String,
    fields: Vec<FieldSchema>,
    by_number: HashMap<u32, usize>,
    by_name: HashMap<String, usize>,
}

impl MessageSchema {
    pub fn new(name: impl Into<String>, fields: Vec<FieldSchema>) -> Result<Self, SchemaError> {
        let name = name.into();
        let mut by_number = HashMap::new();
        let mut by_name = HashMap::new();
        for (idx, field) in fields.iter().enumerate() {
            let err = |reason: &str| SchemaError::Field {
                message: name.clone(),
                field: field.name.clone(),
                reason: reason.to_owned(),
            };
            if field.number == 0 || field.number > 0x1FFF_FFFF {
                return Err(err("field number out of range"));
            }
            if by_number.insert(field.number, idx).is_some() {
                return Err(err("duplicate field number"));
            }
            if by_name.insert(field.name.clone(), idx).is_some() {
                return Err(err("duplicate field name"));
            }
        }
        Ok(MessageSchema { name, fields, by_number, by_name })
    }

    /// Fully qualified name without the leading dot, e.g. `tracking.v1.Order`.
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fields(&self) -> &[FieldSchema] {
        &self.fields
    }

    pub fn index_of_number(&self, number: u32) -> Option<usize> {
        self.by_number.get(&number).copied()
    }

    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }
}

#[derive(Debug, Clone)]
pub struct MethodSchema {
    /// `/package.Service/Method`
    pub path: String,
    pub input: Arc<MessageSchema>,
    pub output: Arc<MessageSchema>,
    pub client_streaming: bool,
    pub server_streaming: bool,
}

impl MethodSchema {
    pub fn is_unary(&self) -> bool {
        !self.client_streaming && !self.server_streaming
    }
}

/// Messages and methods from a compiled `FileDescriptorSet`.
#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    messages: HashMap<String, Arc<MessageSchema>>,
    methods: HashMap<String, MethodSchema>,
}

impl SchemaRegistry {
    /// Decodes the binary output of `protoc --descriptor_set_out`.
    pub fn from_descriptor_set_bytes(bytes: &[u8]) -> Result<Self, SchemaError> {
        let set = FileDescriptorSet::decode(bytes).map_err(|e| SchemaError::Decode(e.to_string()))?;
        Self::from_descriptor_set(&set)
    }

    pub fn from_descriptor_set(set: &FileDescriptorSet) -> Result<Self, SchemaError> {
        let mut registry = SchemaRegistry::default();
        for file in &set.file {
            let proto3 = file.syntax.as_deref() == Some("proto3");
            let prefix = file.package.clone().unwrap_or_default();
            for message in &file.message_type {
                registry.add_message(&prefix, message, proto3)?;
            }
        }
        for file in &set.file {
            let package = file.package.clone().unwrap_or_default();
            for service in &file.service {
                let service_name = qualify(&package, service.name());
                for method in &service.method {
                    let lookup = |type_name: &str| {
                        let key = type_name.trim_start_matches('.');
                        registry.messages.get(key).cloned().ok_or_else(|| SchemaError::UnknownMessage(key.to_owned()))
                    };
                    let schema = MethodSchema {
                        path: format!("/{service_name}/{}", method.name()),
                        input: lookup(method.input_type())?,
                        output: lookup(method.output_type())?,
                        client_streaming: method.client_streaming(),
                        server_streaming: method.server_streaming(),
                    };
                    registry.methods.insert(schema.path.clone(), schema);
                }
            }
        }
        Ok(registry)
    }

    fn add_message(&mut self, prefix: &str, message: &DescriptorProto, proto3: bool) -> Result<(), SchemaError> {
        let full_name = qualify(prefix, message.name());
        let mut fields = Vec::with_capacity(message.field.len());
        for field in &message.field {
            let ty = FieldType::from_proto(field.r#type()).ok_or_else(|| SchemaError::Field {
                message: full_name.clone(),
                field: field.name().to_owned(),
                reason: "groups are not supported".into(),
            })?;
            let repeated = field.label() == Label::Repeated;
            let explicit_presence = !repeated
                && (!proto3 || field.proto3_optional() || field.oneof_index.is_some() || ty == FieldType::Message);
            fields.push(FieldSchema {
                name: field.name().to_owned(),
                number: u32::try_from(field.number()).unwrap_or(0),
                ty,
                repeated,
                explicit_presence,
            });
        }
        self.messages.insert(full_name.clone(), Arc::new(MessageSchema::new(full_name.clone(), fields)?));
        for nested in &message.nested_type {
            self.add_message(&full_name, nested, proto3)?;
        }
        Ok(())
    }

    pub fn insert_message(&mut self, schema: MessageSchema) -> Arc<MessageSchema> {
        let schema = Arc::new(schema);
        self.messages.insert(schema.name.clone(), schema.clone());
        schema
    }

    pub fn message(&self, name: &str) -> Option<&Arc<MessageSchema>> {
        self.messages.get(name.trim_start_matches('.'))
    }

    /// Looks up a method by its HTTP/2 path, `/package.Service/Method`.
    pub fn method(&self, path: &str) -> Option<&MethodSchema> {
        self.methods.get(path)
    }

    pub fn methods(&self) -> impl Iterator<Item = &MethodSchema> {
        self.methods.values()
    }
}

fn qualify(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}
