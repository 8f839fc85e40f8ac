//! JSON views of dynamic values, used by the tap tool and the browser bridge.

use serde_json::{json, Map, Number};

use crate::error::ValueError;
use crate::schema::{FieldType, MessageSchema};
use crate::value::Value;

fn float(v: f64) -> serde_json::Value {
    Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

pub fn to_json(schema: &MessageSchema, value: &Value) -> serde_json::Value {
    let Value::Struct(fields) = value else {
        return field_to_json(value);
    };
    let mut map = Map::new();
    for (f, v) in schema.fields.iter().zip(fields) {
        let j = match (&f.ty, v) {
            (FieldType::Struct(s), v) => to_json(s, v),
            (FieldType::FixedArray(e, _) | FieldType::VarArray(e), Value::Array(items)) => {
                match e.as_ref() {
                    FieldType::Struct(s) => {
                        serde_json::Value::Array(items.iter().map(|i| to_json(s, i)).collect())
                    }
                    _ => field_to_json(v),
                }
            }
            _ => field_to_json(v),
        };
        map.insert(f.name.clone(), j);
    }
    serde_json::Value::Object(map)
}

fn field_to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Bool(b) => json!(b),
        Value::I8(x) => json!(x),
        Value::I16(x) => json!(x),
        Value::I32(x) => json!(x),
        Value::I64(x) => json!(x),
        Value::F32(x) => float(f64::from(*x)),
        Value::F64(x) => float(*x),
        Value::String(s) => json!(s),
        Value::Array(items) | Value::Struct(items) => {
            serde_json::Value::Array(items.iter().map(field_to_json).collect())
        }
    }
}

/// Builds a value from JSON; missing fields take their zero value.
pub fn from_json(schema: &MessageSchema, j: &serde_json::Value) -> Result<Value, ValueError> {
    let obj = j
        .as_object()
        .ok_or_else(|| ValueError::new("", format!("object for {}", schema.name)))?;
    let mut out = Vec::with_capacity(schema.fields.len());
    for f in &schema.fields {
        let v = match obj.get(&f.name) {
            None => Value::default_for(&f.ty),
            Some(x) => field_from_json(&f.ty, x).map_err(|e| e.within(&f.name))?,
        };
        out.push(v);
    }
    Ok(Value::Struct(out))
}

fn field_from_json(ty: &FieldType, j: &serde_json::Value) -> Result<Value, ValueError> {
    let int = |lo: i64, hi: i64| {
        j.as_i64()
            .filter(|v| (lo..=hi).contains(v))
            .ok_or_else(|| ValueError::new("", ty.to_string()))
    };
    let num = || j.as_f64().ok_or_else(|| ValueError::new("", ty.to_string()));
    Ok(match ty {
        FieldType::Bool => Value::Bool(j.as_bool().ok_or_else(|| ValueError::new("", "bool"))?),
        FieldType::I8 => Value::I8(int(i8::MIN.into(), i8::MAX.into())? as i8),
        FieldType::I16 => Value::I16(int(i16::MIN.into(), i16::MAX.into())? as i16),
        FieldType::I32 => Value::I32(int(i32::MIN.into(), i32::MAX.into())? as i32),
        FieldType::I64 => Value::I64(int(i64::MIN, i64::MAX)?),
        FieldType::F32 => Value::F32(num()? as f32),
        FieldType::F64 => Value::F64(num()?),
        FieldType::String => Value::String(
            j.as_str()
                .ok_or_else(|| ValueError::new("", "string"))?
                .to_string(),
        ),
        FieldType::FixedArray(e, _) | FieldType::VarArray(e) => {
            let items = j.as_array().ok_or_else(|| ValueError::new("", "array"))?;
            if let FieldType::FixedArray(_, n) = ty {
                if items.len() != *n {
                    return Err(ValueError::new("", format!("array of {n}")));
                }
            }
            Value::Array(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, x)| field_from_json(e, x).map_err(|err| err.within(&format!("[{i}]"))))
                    .collect::<Result<_, _>>()?,
            )
        }
        FieldType::Struct(s) => from_json(s, j)?,
    })
}
