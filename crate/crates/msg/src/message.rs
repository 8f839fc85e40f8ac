use std::sync::Arc;

use thiserror::Error;

use crate::codec;
use crate::error::{DecodeError, EncodeError, ValueError};
use crate::schema::{FieldType, MessageSchema};
use crate::value::Value;

#[derive(Debug, Error)]
pub enum MessageError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

/// A Rust type with a fixed wire schema. Implemented by the [`message!`](crate::message)
/// macro for every standard type.
pub trait Message: Sized + Clone + Send + 'static {
    const NAME: &'static str;

    fn schema() -> Arc<MessageSchema>;

    fn fingerprint() -> u64;

    fn to_value(&self) -> Value;

    fn from_value(value: &Value) -> Result<Self, ValueError>;

    fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        codec::encode(&Self::schema(), &self.to_value())
    }

    fn decode(bytes: &[u8]) -> Result<Self, MessageError> {
        let value = codec::decode(&Self::schema(), bytes)?;
        Ok(Self::from_value(&value)?)
    }
}

/// Conversion between a Rust field type and its schema type / dynamic value.
pub trait FieldValue: Sized {
    fn field_type() -> FieldType;
    fn to_value(&self) -> Value;
    fn from_value(value: &Value) -> Result<Self, ValueError>;
}

macro_rules! primitive {
    ($t:ty, $variant:ident, $ft:ident) => {
        impl FieldValue for $t {
            fn field_type() -> FieldType {
                FieldType::$ft
            }
            fn to_value(&self) -> Value {
                Value::$variant(self.clone())
            }
            fn from_value(value: &Value) -> Result<Self, ValueError> {
                match value {
                    Value::$variant(v) => Ok(v.clone()),
                    _ => Err(ValueError::new("", stringify!($ft))),
                }
            }
        }
    };
}

primitive!(bool, Bool, Bool);
primitive!(i8, I8, I8);
primitive!(i16, I16, I16);
primitive!(i32, I32, I32);
primitive!(i64, I64, I64);
primitive!(f32, F32, F32);
primitive!(f64, F64, F64);
primitive!(String, String, String);

impl<T: FieldValue> FieldValue for Vec<T> {
    fn field_type() -> FieldType {
        FieldType::var(T::field_type())
    }

    fn to_value(&self) -> Value {
        Value::Array(self.iter().map(FieldValue::to_value).collect())
    }

    fn from_value(value: &Value) -> Result<Self, ValueError> {
        let Value::Array(items) = value else {
            return Err(ValueError::new("", "array"));
        };
        items
            .iter()
            .enumerate()
            .map(|(i, v)| T::from_value(v).map_err(|e| e.within(&format!("[{i}]"))))
            .collect()
    }
}

impl<T: FieldValue, const N: usize> FieldValue for [T; N] {
    fn field_type() -> FieldType {
        FieldType::fixed(T::field_type(), N)
    }

    fn to_value(&self) -> Value {
        Value::Array(self.iter().map(FieldValue::to_value).collect())
    }

    fn from_value(value: &Value) -> Result<Self, ValueError> {
        let items: Vec<T> = Vec::from_value(value)?;
        items
            .try_into()
            .map_err(|_| ValueError::new("", format!("array of {N}")))
    }
}

#[doc(hidden)]
#[macro_export]
macro_rules! __field_flag {
    (angle) => {
        true
    };
    () => {
        false
    };
}

/// Declares a message struct together with its schema and conversions.
///
/// ```
/// robomesh_msg::message! {
///     /// Heading sample.
///     pub struct Heading = "heading_t" {
///         pub stamp: i64,
///         pub theta: f64 => angle,
///     }
/// }
/// use robomesh_msg::Message;
/// assert_eq!(Heading::schema().canonical_text(), "heading_t|stamp:i64|theta:f64");
/// ```
#[macro_export]
macro_rules! message {
    (
        $(#[$meta:meta])*
        pub struct $ty:ident = $name:literal {
            $( $(#[$fmeta:meta])* pub $field:ident : $fty:ty $(=> $flag:ident)? ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $ty {
            $( $(#[$fmeta])* pub $field: $fty, )*
        }

        impl $crate::Message for $ty {
            const NAME: &'static str = $name;

            fn schema() -> ::std::sync::Arc<$crate::MessageSchema> {
                static SCHEMA: ::std::sync::OnceLock<::std::sync::Arc<$crate::MessageSchema>> =
                    ::std::sync::OnceLock::new();
                SCHEMA
                    .get_or_init(|| {
                        ::std::sync::Arc::new(
                            $crate::MessageSchema::new(
                                $name,
                                vec![$(
                                    $crate::Field {
                                        name: stringify!($field).to_string(),
                                        ty: <$fty as $crate::FieldValue>::field_type(),
                                        angle: $crate::__field_flag!($($flag)?),
                                    }
                                ),*],
                            )
                            .expect("message! schema is valid"),
                        )
                    })
                    .clone()
            }

            fn fingerprint() -> u64 {
                static FP: ::std::sync::OnceLock<u64> = ::std::sync::OnceLock::new();
                *FP.get_or_init(|| <Self as $crate::Message>::schema().fingerprint())
            }

            fn to_value(&self) -> $crate::Value {
                $crate::Value::Struct(vec![$( $crate::FieldValue::to_value(&self.$field) ),*])
            }

            #[allow(unused_variables, unused_mut)]
            fn from_value(value: &$crate::Value) -> Result<Self, $crate::ValueError> {
                let $crate::Value::Struct(fields) = value else {
                    return Err($crate::ValueError::new("", $name));
                };
                let expected = <$ty as $crate::Message>::schema().fields.len();
                if fields.len() != expected {
                    return Err($crate::ValueError::new("", format!("{} with {} fields", $name, expected)));
                }
                let mut it = fields.iter();
                Ok(Self {
                    $(
                        $field: <$fty as $crate::FieldValue>::from_value(it.next().expect("length checked"))
                            .map_err(|e| e.within(stringify!($field)))?,
                    )*
                })
            }
        }

        impl $crate::FieldValue for $ty {
            fn field_type() -> $crate::FieldType {
                $crate::FieldType::Struct(<$ty as $crate::Message>::schema())
            }
            fn to_value(&self) -> $crate::Value {
                <$ty as $crate::Message>::to_value(self)
            }
            fn from_value(value: &$crate::Value) -> Result<Self, $crate::ValueError> {
                <$ty as $crate::Message>::from_value(value)
            }
        }
    };
}
