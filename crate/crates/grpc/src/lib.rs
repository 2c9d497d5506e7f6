//! gRPC integration for fieldguard.
//!
//! [`InterceptorLayer`] plugs a unary interceptor into a tonic server.
//! Responses are handled as [`WireMessage`]s, so the layer works with any
//! message type described in a [`SchemaRegistry`] and needs no generated
//! code. [`TokenInjector`] is the matching client side.

pub mod client;
pub mod layer;
pub mod schema;
pub mod wire;

pub use client::{InjectError, TokenInjector};
pub use layer::{encode_frame, metadata_from_headers, parse_frame, InterceptorLayer, InterceptorService};
pub use schema::{FieldSchema, FieldType, MessageSchema, MethodSchema, SchemaError, SchemaRegistry};
pub use wire::{DecodeError, WireMessage};
