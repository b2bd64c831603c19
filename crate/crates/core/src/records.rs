//! Helpers for the line-delimited record files.
//!
//! Every float is written with 17 significant digits so that parsing the
//! file back yields the same bits.

use std::fmt::Write as _;

use serde_json::{Map, Value};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn push_f64_array(out: &mut String, xs: &[f64]) {
    out.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(*x));
    }
    out.push(']');
}

pub fn push_str(out: &mut String, s: &str) {
    // serde_json string escaping never fails for &str
    out.push_str(&serde_json::to_string(s).expect("string serialization"));
}

/// Starts a JSON object field: `,"name":` (no comma for the first field).
pub fn push_key(out: &mut String, name: &str, first: bool) {
    if !first {
        out.push(',');
    }
    let _ = write!(out, "\"{name}\":");
}

/// Field extraction with the error message naming the field.
pub struct Fields<'a> {
    obj: &'a Map<String, Value>,
}

impl<'a> Fields<'a> {
    pub fn new(value: &'a Value) -> Result<Self, (String, String)> {
        match value.as_object() {
            Some(obj) => Ok(Self { obj }),
            None => Err(("<record>".into(), "record is not an object".into())),
        }
    }

    pub fn get(&self, name: &str) -> Option<&'a Value> {
        self.obj.get(name).filter(|v| !v.is_null())
    }

    pub fn has(&self, name: &str) -> bool {
        self.obj.contains_key(name)
    }

    pub fn keys(&self) -> impl Iterator<Item = &'a String> {
        self.obj.keys()
    }

    pub fn string(&self, name: &str) -> Result<String, (String, String)> {
        match self.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err((name.into(), "expected a string".into())),
            None => Err((name.into(), "missing".into())),
        }
    }

    pub fn opt_string(&self, name: &str) -> Result<Option<String>, (String, String)> {
        match self.get(name) {
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err((name.into(), "expected a string or null".into())),
            None => Ok(None),
        }
    }

    pub fn numbers(&self, name: &str) -> Result<Vec<f64>, (String, String)> {
        match self.get(name) {
            Some(v) => numbers(v).map_err(|m| (name.to_string(), m)),
            None => Err((name.into(), "missing".into())),
        }
    }
}

pub fn numbers(v: &Value) -> Result<Vec<f64>, String> {
    let arr = v.as_array().ok_or_else(|| "expected an array of numbers".to_string())?;
    arr.iter()
        .map(|x| x.as_f64().ok_or_else(|| "expected an array of numbers".to_string()))
        .collect()
}
