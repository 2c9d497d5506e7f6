//! Server assembly, one module per [`Wiring`](crate::Wiring).
//!
//! The modules are kept line-for-line identical apart from the interceptor
//! hook, so that `diff baseline.rs enforcing.rs` shows what adopting the
//! interceptor costs.

pub mod baseline;
pub mod enforcing;
pub mod noop;
