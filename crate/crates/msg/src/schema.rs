//! Schema language and the canonical text used for fingerprints.
//!
//! Canonical text is the schema name followed by one `name:type` entry per
//! field, joined with `|` and containing no whitespace:
//!
//! ```text
//! pose_2d_t|x:f64|y:f64|theta:f64
//! ```
//!
//! Primitive types spell as `bool i8 i16 i32 i64 f32 f64 string`. A fixed
//! array is `T[n]`, a variable array `T[]`. A nested schema is expanded
//! inline as `name{field|field}`, e.g.
//! `header_t|stamp:time_t{sec:i64|nsec:i32}|frame:string`.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use crate::error::SchemaError;

/// Deepest chain of nested schemas accepted (`laser_scan_t -> header_t -> time_t`).
pub const MAX_NESTING: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldType {
    Bool,
    I8,
    I16,
    I32,
    I64,
    F32,
    F64,
    String,
    FixedArray(Box<FieldType>, usize),
    VarArray(Box<FieldType>),
    Struct(Arc<MessageSchema>),
}

impl FieldType {
    pub fn fixed(elem: FieldType, len: usize) -> Self {
        FieldType::FixedArray(Box::new(elem), len)
    }

    pub fn var(elem: FieldType) -> Self {
        FieldType::VarArray(Box::new(elem))
    }

    /// Smallest number of bytes any value of this type encodes to.
    pub fn min_encoded_len(&self) -> usize {
        match self {
            FieldType::Bool | FieldType::I8 => 1,
            FieldType::I16 => 2,
            FieldType::I32 | FieldType::F32 => 4,
            FieldType::I64 | FieldType::F64 => 8,
            FieldType::String | FieldType::VarArray(_) => 4,
            FieldType::FixedArray(elem, n) => elem.min_encoded_len() * n,
            FieldType::Struct(s) => s.fields.iter().map(|f| f.ty.min_encoded_len()).sum(),
        }
    }

    pub fn is_float(&self) -> bool {
        matches!(self, FieldType::F32 | FieldType::F64)
    }

    pub fn is_integer(&self) -> bool {
        matches!(
            self,
            FieldType::I8 | FieldType::I16 | FieldType::I32 | FieldType::I64
        )
    }

    fn depth(&self) -> usize {
        match self {
            FieldType::FixedArray(e, _) | FieldType::VarArray(e) => e.depth(),
            FieldType::Struct(s) => 1 + s.depth(),
            _ => 0,
        }
    }

    fn write_canonical(&self, out: &mut String) {
        match self {
            FieldType::Bool => out.push_str("bool"),
            FieldType::I8 => out.push_str("i8"),
            FieldType::I16 => out.push_str("i16"),
            FieldType::I32 => out.push_str("i32"),
            FieldType::I64 => out.push_str("i64"),
            FieldType::F32 => out.push_str("f32"),
            FieldType::F64 => out.push_str("f64"),
            FieldType::String => out.push_str("string"),
            FieldType::FixedArray(e, n) => {
                e.write_canonical(out);
                let _ = write!(out, "[{n}]");
            }
            FieldType::VarArray(e) => {
                e.write_canonical(out);
                out.push_str("[]");
            }
            FieldType::Struct(s) => {
                out.push_str(&s.name);
                out.push('{');
                for (i, f) in s.fields.iter().enumerate() {
                    if i > 0 {
                        out.push('|');
                    }
                    f.write_canonical(out);
                }
                out.push('}');
            }
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_canonical(&mut s);
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub ty: FieldType,
    /// Angular quantity in radians; resamplers interpolate it on the shortest arc.
    /// Not part of the canonical text.
    pub angle: bool,
}

impl Field {
    pub fn new(name: impl Into<String>, ty: FieldType) -> Self {
        Self {
            name: name.into(),
            ty,
            angle: false,
        }
    }

    pub fn angle(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ty: FieldType::F64,
            angle: true,
        }
    }

    fn write_canonical(&self, out: &mut String) {
        out.push_str(&self.name);
        out.push(':');
        self.ty.write_canonical(out);
    }
}

/// A named, ordered list of typed fields. Construct through [`MessageSchema::new`],
/// which validates names, uniqueness and nesting.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSchema {
    pub name: String,
    pub fields: Vec<Field>,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl MessageSchema {
    pub fn new(name: impl Into<String>, fields: Vec<Field>) -> Result<Self, SchemaError> {
        let schema = Self {
            name: name.into(),
            fields,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if !is_identifier(&self.name) {
            return Err(SchemaError::BadName(self.name.clone()));
        }
        let mut seen = HashSet::new();
        for f in &self.fields {
            if !is_identifier(&f.name) {
                return Err(SchemaError::BadField {
                    schema: self.name.clone(),
                    field: f.name.clone(),
                });
            }
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::DuplicateField {
                    schema: self.name.clone(),
                    field: f.name.clone(),
                });
            }
            check_elements(&self.name, &f.name, &f.ty)?;
        }
        if self.depth() > MAX_NESTING {
            return Err(SchemaError::TooDeep {
                schema: self.name.clone(),
                max: MAX_NESTING,
            });
        }
        Ok(())
    }

    fn depth(&self) -> usize {
        self.fields.iter().map(|f| f.ty.depth()).max().unwrap_or(0)
    }

    pub fn canonical_text(&self) -> String {
        let mut out = self.name.clone();
        for f in &self.fields {
            out.push('|');
            f.write_canonical(&mut out);
        }
        out
    }

    /// 64-bit FNV-1a over [`Self::canonical_text`].
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.canonical_text().as_bytes())
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

fn check_elements(schema: &str, field: &str, ty: &FieldType) -> Result<(), SchemaError> {
    match ty {
        FieldType::VarArray(e) => {
            if e.min_encoded_len() == 0 {
                return Err(SchemaError::ZeroSizedElement {
                    schema: schema.to_string(),
                    field: field.to_string(),
                });
            }
            check_elements(schema, field, e)
        }
        FieldType::FixedArray(e, _) => check_elements(schema, field, e),
        FieldType::Struct(s) => s.validate(),
        _ => Ok(()),
    }
}

/// Validate then fingerprint.
pub fn fingerprint(schema: &MessageSchema) -> Result<u64, SchemaError> {
    schema.validate()?;
    Ok(schema.fingerprint())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose() -> MessageSchema {
        MessageSchema::new(
            "pose_2d_t",
            vec![
                Field::new("x", FieldType::F64),
                Field::new("y", FieldType::F64),
                Field::angle("theta"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn canonical_pose() {
        assert_eq!(pose().canonical_text(), "pose_2d_t|x:f64|y:f64|theta:f64");
    }

    #[test]
    fn reorder_changes_fingerprint() {
        let mut swapped = pose();
        swapped.fields.swap(0, 1);
        assert_ne!(pose().fingerprint(), swapped.fingerprint());
        assert_eq!(pose().fingerprint(), pose().fingerprint());
    }

    #[test]
    fn angle_marker_not_canonical() {
        let mut plain = pose();
        plain.fields[2].angle = false;
        assert_eq!(plain.fingerprint(), pose().fingerprint());
    }

    #[test]
    fn rejects_duplicates_and_bad_names() {
        let dup = MessageSchema::new(
            "a",
            vec![Field::new("x", FieldType::I8), Field::new("x", FieldType::I8)],
        );
        assert!(matches!(dup, Err(SchemaError::DuplicateField { .. })));
        assert!(matches!(
            MessageSchema::new("a/b", vec![]),
            Err(SchemaError::BadName(_))
        ));
        assert!(matches!(
            MessageSchema::new("", vec![]),
            Err(SchemaError::BadName(_))
        ));
        assert!(matches!(
            MessageSchema::new("a", vec![Field::new("9x", FieldType::I8)]),
            Err(SchemaError::BadField { .. })
        ));
    }

    #[test]
    fn nested_canonical_and_depth() {
        let time = Arc::new(
            MessageSchema::new(
                "time_t",
                vec![
                    Field::new("sec", FieldType::I64),
                    Field::new("nsec", FieldType::I32),
                ],
            )
            .unwrap(),
        );
        let header = MessageSchema::new(
            "header_t",
            vec![
                Field::new("stamp", FieldType::Struct(time.clone())),
                Field::new("frame", FieldType::String),
            ],
        )
        .unwrap();
        assert_eq!(
            header.canonical_text(),
            "header_t|stamp:time_t{sec:i64|nsec:i32}|frame:string"
        );
        let mut s = Arc::new(header);
        for i in 0..MAX_NESTING {
            let next = MessageSchema::new(
                format!("n{i}"),
                vec![Field::new("inner", FieldType::Struct(s.clone()))],
            );
            if i + 2 <= MAX_NESTING {
                s = Arc::new(next.unwrap());
            } else {
                assert!(matches!(next, Err(SchemaError::TooDeep { .. })));
            }
        }
    }

    #[test]
    fn zero_sized_var_elements_rejected() {
        let empty = Arc::new(MessageSchema::new("empty_t", vec![]).unwrap());
        let bad = MessageSchema::new(
            "bad",
            vec![Field::new("xs", FieldType::var(FieldType::Struct(empty)))],
        );
        assert!(matches!(bad, Err(SchemaError::ZeroSizedElement { .. })));
    }
}
