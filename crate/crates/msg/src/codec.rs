//! Big-endian, unpadded binary encoding.
//!
//! | type          | bytes                                   |
//! |---------------|-----------------------------------------|
//! | bool          | 1 (0 or 1)                              |
//! | iN            | N/8, two's complement                   |
//! | f32 / f64     | IEEE-754 bit pattern                    |
//! | string        | i32 byte length, then UTF-8, no NUL     |
//! | `T[n]`        | n elements                              |
//! | `T[]`         | i32 count, then elements                |
//! | nested schema | its fields in declaration order         |

use crate::error::{DecodeError, DecodeErrorKind, EncodeError};
use crate::schema::{FieldType, MessageSchema};
use crate::value::Value;

pub fn encode(schema: &MessageSchema, value: &Value) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(schema.fields.len() * 8);
    encode_struct(schema, value, "", &mut out)?;
    Ok(out)
}

fn join(path: &str, name: &str) -> String {
    if path.is_empty() {
        name.to_string()
    } else {
        format!("{path}.{name}")
    }
}

fn mismatch(path: &str, ty: &FieldType, got: &Value) -> EncodeError {
    EncodeError {
        path: path.to_string(),
        reason: format!("expected {ty}, got {got:?}"),
    }
}

fn encode_struct(
    schema: &MessageSchema,
    value: &Value,
    path: &str,
    out: &mut Vec<u8>,
) -> Result<(), EncodeError> {
    let Value::Struct(fields) = value else {
        return Err(EncodeError {
            path: path.to_string(),
            reason: format!("expected struct {}, got {value:?}", schema.name),
        });
    };
    if fields.len() != schema.fields.len() {
        return Err(EncodeError {
            path: path.to_string(),
            reason: format!(
                "{} expects {} fields, got {}",
                schema.name,
                schema.fields.len(),
                fields.len()
            ),
        });
    }
    for (f, v) in schema.fields.iter().zip(fields) {
        encode_field(&f.ty, v, &join(path, &f.name), out)?;
    }
    Ok(())
}

fn encode_len(len: usize, path: &str, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let n = i32::try_from(len).map_err(|_| EncodeError {
        path: path.to_string(),
        reason: format!("length {len} exceeds i32"),
    })?;
    out.extend_from_slice(&n.to_be_bytes());
    Ok(())
}

fn encode_field(
    ty: &FieldType,
    value: &Value,
    path: &str,
    out: &mut Vec<u8>,
) -> Result<(), EncodeError> {
    match (ty, value) {
        (FieldType::Bool, Value::Bool(b)) => out.push(u8::from(*b)),
        (FieldType::I8, Value::I8(v)) => out.extend_from_slice(&v.to_be_bytes()),
        (FieldType::I16, Value::I16(v)) => out.extend_from_slice(&v.to_be_bytes()),
        (FieldType::I32, Value::I32(v)) => out.extend_from_slice(&v.to_be_bytes()),
        (FieldType::I64, Value::I64(v)) => out.extend_from_slice(&v.to_be_bytes()),
        (FieldType::F32, Value::F32(v)) => out.extend_from_slice(&v.to_bits().to_be_bytes()),
        (FieldType::F64, Value::F64(v)) => out.extend_from_slice(&v.to_bits().to_be_bytes()),
        (FieldType::String, Value::String(s)) => {
            encode_len(s.len(), path, out)?;
            out.extend_from_slice(s.as_bytes());
        }
        (FieldType::FixedArray(elem, n), Value::Array(items)) => {
            if items.len() != *n {
                return Err(EncodeError {
                    path: path.to_string(),
                    reason: format!("fixed array expects {n} elements, got {}", items.len()),
                });
            }
            for (i, item) in items.iter().enumerate() {
                encode_field(elem, item, &format!("{path}[{i}]"), out)?;
            }
        }
        (FieldType::VarArray(elem), Value::Array(items)) => {
            encode_len(items.len(), path, out)?;
            for (i, item) in items.iter().enumerate() {
                encode_field(elem, item, &format!("{path}[{i}]"), out)?;
            }
        }
        (FieldType::Struct(s), v @ Value::Struct(_)) => encode_struct(s, v, path, out)?,
        (ty, v) => return Err(mismatch(path, ty, v)),
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, path: &str) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError {
                path: path.to_string(),
                kind: DecodeErrorKind::Truncated,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, path: &str) -> Result<[u8; N], DecodeError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N, path)?);
        Ok(a)
    }

    /// Reads an i32 count and checks `count * min_elem` fits in what is left.
    fn count(&mut self, min_elem: usize, path: &str) -> Result<usize, DecodeError> {
        let n = i32::from_be_bytes(self.array(path)?);
        if n < 0 {
            return Err(DecodeError {
                path: path.to_string(),
                kind: DecodeErrorKind::NegativeCount(n),
            });
        }
        let n = n as usize;
        if n.saturating_mul(min_elem.max(1)) > self.remaining() {
            return Err(DecodeError {
                path: path.to_string(),
                kind: DecodeErrorKind::CountTooLarge {
                    count: n,
                    remaining: self.remaining(),
                },
            });
        }
        Ok(n)
    }
}

/// Decodes a complete buffer. Total on arbitrary input: any byte string yields
/// either a value or an error naming the failing field.
pub fn decode(schema: &MessageSchema, bytes: &[u8]) -> Result<Value, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let v = decode_struct(schema, &mut r, "")?;
    if r.remaining() > 0 {
        return Err(DecodeError {
            path: String::new(),
            kind: DecodeErrorKind::TrailingBytes(r.remaining()),
        });
    }
    Ok(v)
}

fn decode_struct(
    schema: &MessageSchema,
    r: &mut Reader<'_>,
    path: &str,
) -> Result<Value, DecodeError> {
    let mut fields = Vec::with_capacity(schema.fields.len());
    for f in &schema.fields {
        fields.push(decode_field(&f.ty, r, &join(path, &f.name))?);
    }
    Ok(Value::Struct(fields))
}

fn decode_field(ty: &FieldType, r: &mut Reader<'_>, path: &str) -> Result<Value, DecodeError> {
    Ok(match ty {
        FieldType::Bool => match r.take(1, path)?[0] {
            0 => Value::Bool(false),
            1 => Value::Bool(true),
            b => {
                return Err(DecodeError {
                    path: path.to_string(),
                    kind: DecodeErrorKind::InvalidBool(b),
                })
            }
        },
        FieldType::I8 => Value::I8(i8::from_be_bytes(r.array(path)?)),
        FieldType::I16 => Value::I16(i16::from_be_bytes(r.array(path)?)),
        FieldType::I32 => Value::I32(i32::from_be_bytes(r.array(path)?)),
        FieldType::I64 => Value::I64(i64::from_be_bytes(r.array(path)?)),
        FieldType::F32 => Value::F32(f32::from_bits(u32::from_be_bytes(r.array(path)?))),
        FieldType::F64 => Value::F64(f64::from_bits(u64::from_be_bytes(r.array(path)?))),
        FieldType::String => {
            let n = r.count(1, path)?;
            let bytes = r.take(n, path)?;
            let s = std::str::from_utf8(bytes).map_err(|_| DecodeError {
                path: path.to_string(),
                kind: DecodeErrorKind::InvalidUtf8,
            })?;
            Value::String(s.to_string())
        }
        FieldType::FixedArray(elem, n) => {
            if n.saturating_mul(elem.min_encoded_len()) > r.remaining() {
                return Err(DecodeError {
                    path: path.to_string(),
                    kind: DecodeErrorKind::Truncated,
                });
            }
            let mut items = Vec::with_capacity(*n);
            for i in 0..*n {
                items.push(decode_field(elem, r, &format!("{path}[{i}]"))?);
            }
            Value::Array(items)
        }
        FieldType::VarArray(elem) => {
            let n = r.count(elem.min_encoded_len(), path)?;
            let mut items = Vec::with_capacity(n);
            for i in 0..n {
                items.push(decode_field(elem, r, &format!("{path}[{i}]"))?);
            }
            Value::Array(items)
        }
        FieldType::Struct(s) => decode_struct(s, r, path)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Field;
    use crate::types::{Pose2D, Twist2D};
    use crate::Message;

    #[test]
    fn zero_pose_is_24_zero_bytes() {
        let bytes = Pose2D::default().encode().unwrap();
        assert_eq!(bytes, vec![0u8; 24]);
    }

    #[test]
    fn empty_buffer_names_first_field() {
        let err = decode(&Pose2D::schema(), &[]).unwrap_err();
        assert_eq!(err.to_string(), "x: truncated");
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = Twist2D { v: 1.0, w: 2.0 }.encode().unwrap();
        bytes.push(0);
        let err = decode(&Twist2D::schema(), &bytes).unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::TrailingBytes(1));
    }

    #[test]
    fn negative_and_oversized_counts() {
        let s = MessageSchema::new("a", vec![Field::new("xs", FieldType::var(FieldType::F64))])
            .unwrap();
        let err = decode(&s, &(-1i32).to_be_bytes()).unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::NegativeCount(-1));
        let mut huge = i32::MAX.to_be_bytes().to_vec();
        huge.extend_from_slice(&[0; 16]);
        let err = decode(&s, &huge).unwrap_err();
        assert!(matches!(err.kind, DecodeErrorKind::CountTooLarge { .. }));
        assert_eq!(err.path, "xs");
    }

    #[test]
    fn invalid_utf8() {
        let s = MessageSchema::new("a", vec![Field::new("s", FieldType::String)]).unwrap();
        let mut b = 2i32.to_be_bytes().to_vec();
        b.extend_from_slice(&[0xff, 0xfe]);
        assert_eq!(decode(&s, &b).unwrap_err().kind, DecodeErrorKind::InvalidUtf8);
    }

    #[test]
    fn encode_mismatch_names_field() {
        let err = encode(
            &Pose2D::schema(),
            &Value::Struct(vec![Value::F64(0.0), Value::I32(1), Value::F64(0.0)]),
        )
        .unwrap_err();
        assert_eq!(err.path, "y");
        let err = encode(&Pose2D::schema(), &Value::Struct(vec![])).unwrap_err();
        assert!(err.reason.contains("expects 3 fields"));
    }

    #[test]
    fn fixed_array_length_checked() {
        let s = MessageSchema::new("a", vec![Field::new("v", FieldType::fixed(FieldType::I8, 3))])
            .unwrap();
        assert!(encode(&s, &Value::Struct(vec![Value::Array(vec![Value::I8(1)])])).is_err());
        let ok = Value::Struct(vec![Value::Array(vec![
            Value::I8(1),
            Value::I8(-2),
            Value::I8(3),
        ])]);
        let bytes = encode(&s, &ok).unwrap();
        assert_eq!(bytes, vec![1, 0xfe, 3]);
        assert_eq!(decode(&s, &bytes).unwrap(), ok);
    }
}
