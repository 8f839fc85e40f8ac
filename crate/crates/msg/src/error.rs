use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("schema name must be a non-empty identifier without '/': {0:?}")]
    BadName(String),
    #[error("{schema}: bad field identifier {field:?}")]
    BadField { schema: String, field: String },
    #[error("{schema}: duplicate field {field:?}")]
    DuplicateField { schema: String, field: String },
    #[error("{schema}: nesting deeper than {max} levels")]
    TooDeep { schema: String, max: usize },
    #[error("{schema}.{field}: variable-length array of zero-sized elements")]
    ZeroSizedElement { schema: String, field: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{path}: {reason}")]
pub struct EncodeError {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeErrorKind {
    #[error("truncated")]
    Truncated,
    #[error("negative array count {0}")]
    NegativeCount(i32),
    #[error("array count {count} exceeds remaining {remaining} bytes")]
    CountTooLarge { count: usize, remaining: usize },
    #[error("bool byte {0} is neither 0 nor 1")]
    InvalidBool(u8),
    #[error("invalid utf-8")]
    InvalidUtf8,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
}

/// Decode failure, naming the field path that could not be read.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{}{kind}", if path.is_empty() { String::new() } else { format!("{path}: ") })]
pub struct DecodeError {
    pub path: String,
    pub kind: DecodeErrorKind,
}

/// Conversion failure between a dynamic [`crate::Value`] and a typed message.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{path}: expected {expected}")]
pub struct ValueError {
    pub path: String,
    pub expected: String,
}

impl ValueError {
    pub fn new(path: impl Into<String>, expected: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            expected: expected.into(),
        }
    }

    #[doc(hidden)]
    pub fn within(mut self, parent: &str) -> Self {
        self.path = if self.path.is_empty() {
            parent.to_string()
        } else if self.path.starts_with('[') {
            format!("{parent}{}", self.path)
        } else {
            format!("{parent}.{}", self.path)
        };
        self
    }
}

/// A well-typed message that breaks one of its type's documented invariants.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{type_name}: {reason}")]
pub struct InvariantError {
    pub type_name: &'static str,
    pub reason: String,
}
