use crate::schema::{FieldType, MessageSchema};

/// A dynamically typed message value. Struct fields are positional, in
/// schema declaration order.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    I8(i8),
    I16(i16),
    I32(i32),
    I64(i64),
    F32(f32),
    F64(f64),
    String(String),
    Array(Vec<Value>),
    Struct(Vec<Value>),
}

impl Value {
    /// Equality that compares floats by bit pattern, so NaN payloads count.
    pub fn bit_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::F32(a), Value::F32(b)) => a.to_bits() == b.to_bits(),
            (Value::F64(a), Value::F64(b)) => a.to_bits() == b.to_bits(),
            (Value::Array(a), Value::Array(b)) | (Value::Struct(a), Value::Struct(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
            }
            _ => self == other,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::I8(v) => Some(f64::from(v)),
            Value::I16(v) => Some(f64::from(v)),
            Value::I32(v) => Some(f64::from(v)),
            Value::I64(v) => Some(v as f64),
            Value::F32(v) => Some(f64::from(v)),
            Value::F64(v) => Some(v),
            Value::Bool(v) => Some(if v { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    /// The all-zero value of a type: what decoding zero bytes would give.
    pub fn default_for(ty: &FieldType) -> Value {
        match ty {
            FieldType::Bool => Value::Bool(false),
            FieldType::I8 => Value::I8(0),
            FieldType::I16 => Value::I16(0),
            FieldType::I32 => Value::I32(0),
            FieldType::I64 => Value::I64(0),
            FieldType::F32 => Value::F32(0.0),
            FieldType::F64 => Value::F64(0.0),
            FieldType::String => Value::String(String::new()),
            FieldType::FixedArray(e, n) => Value::Array(vec![Value::default_for(e); *n]),
            FieldType::VarArray(_) => Value::Array(Vec::new()),
            FieldType::Struct(s) => Value::default_struct(s),
        }
    }

    pub fn default_struct(schema: &MessageSchema) -> Value {
        Value::Struct(
            schema
                .fields
                .iter()
                .map(|f| Value::default_for(&f.ty))
                .collect(),
        )
    }

    /// Follows a dotted field path such as `header.stamp.sec` or `ranges[3]`.
    pub fn lookup<'a>(&'a self, schema: &MessageSchema, path: &str) -> Option<&'a Value> {
        let mut value = self;
        let mut current: Option<&MessageSchema> = Some(schema);
        for part in path.split('.') {
            let (name, indices) = match part.find('[') {
                Some(i) => (&part[..i], &part[i..]),
                None => (part, ""),
            };
            let s = current?;
            let idx = s.field_index(name)?;
            let Value::Struct(fields) = value else {
                return None;
            };
            value = fields.get(idx)?;
            let mut ty = &s.fields[idx].ty;
            for ix in indices.split('[').filter(|x| !x.is_empty()) {
                let n: usize = ix.strip_suffix(']')?.parse().ok()?;
                let Value::Array(items) = value else {
                    return None;
                };
                value = items.get(n)?;
                ty = match ty {
                    FieldType::FixedArray(e, _) | FieldType::VarArray(e) => e,
                    _ => return None,
                };
            }
            current = match ty {
                FieldType::Struct(inner) => Some(inner),
                _ => None,
            };
        }
        Some(value)
    }
}
