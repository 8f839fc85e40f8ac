//! Typed messages for the robomesh stack: a small schema language, a
//! big-endian unpadded binary codec, 64-bit FNV-1a schema fingerprints and the
//! standard message set.

pub mod catalog;
pub mod codec;
mod error;
pub mod json;
mod message;
pub mod schema;
pub mod types;
mod value;

pub use catalog::SchemaCatalog;
pub use codec::{decode, encode};
pub use error::{DecodeError, DecodeErrorKind, EncodeError, InvariantError, SchemaError, ValueError};
pub use message::{FieldValue, Message, MessageError};
pub use schema::{fingerprint, fnv1a64, Field, FieldType, MessageSchema};
pub use value::Value;
