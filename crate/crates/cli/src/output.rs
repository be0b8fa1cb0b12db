//! Record emission in key=value, CSV or JSON-lines form.

use std::io::{self, Write};

use clap::ValueEnum;
use serde_json::{Map, Value as Json};

/// Bumped whenever a record's columns change.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Kv,
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v)
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::Int(v.into())
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as u64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl<V: Into<Value>> From<Option<V>> for Value {
    fn from(v: Option<V>) -> Self {
        v.map_or(Value::Missing, Into::into)
    }
}

/// Shortest representation that round-trips, so never fewer significant
/// digits than the value carries.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Value {
    fn text(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format_float(*v),
            Value::Bool(v) => v.to_string(),
            Value::Text(s) => s.clone(),
            Value::Missing => String::new(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Value::Int(v) => Json::from(*v),
            Value::Float(v) => serde_json::Number::from_f64(*v)
                .map_or_else(|| Json::String(format_float(*v)), Json::Number),
            Value::Bool(v) => Json::Bool(*v),
            Value::Text(s) => Json::String(s.clone()),
            Value::Missing => Json::Null,
        }
    }
}

/// One output row; `kind` names the schema (`plan`, `oc`, ...).
#[derive(Debug, Clone)]
pub struct Record {
    kind: &'static str,
    fields: Vec<(String, Value)>,
}

impl Record {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            fields: Vec::new(),
        }
    }

    pub fn field(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.fields.push((key.into(), value.into()));
        self
    }

    fn schema(&self) -> String {
        format!("{}.v{SCHEMA_VERSION}", self.kind)
    }
}

pub struct Emitter {
    format: Format,
    out: Box<dyn Write>,
    header: Option<Vec<String>>,
}

impl Emitter {
    pub fn new(format: Format, out: Box<dyn Write>) -> Self {
        Self {
            format,
            out,
            header: None,
        }
    }

    pub fn emit(&mut self, record: &Record) -> io::Result<()> {
        match self.format {
            Format::Kv => {
                let line = record
                    .fields
                    .iter()
                    .filter(|(_, v)| *v != Value::Missing)
                    .map(|(k, v)| {
                        let t = v.text();
                        if t.is_empty() || t.contains(char::is_whitespace) || t.contains('"') {
                            format!("{k}={t:?}")
                        } else {
                            format!("{k}={t}")
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                writeln!(self.out, "{line}")
            }
            Format::Csv => {
                let mut header = vec!["schema".to_owned()];
                header.extend(record.fields.iter().map(|(k, _)| k.clone()));
                let mut w = csv::WriterBuilder::new()
                    .has_headers(false)
                    .from_writer(&mut self.out);
                if self.header.as_ref() != Some(&header) {
                    w.write_record(&header)?;
                    self.header = Some(header);
                }
                let mut row = vec![record.schema()];
                row.extend(record.fields.iter().map(|(_, v)| v.text()));
                w.write_record(&row)?;
                w.flush()
            }
            Format::Jsonl => {
                let mut map = Map::new();
                map.insert("schema".into(), Json::String(record.schema()));
                for (k, v) in &record.fields {
                    map.insert(k.clone(), v.json());
                }
                writeln!(self.out, "{}", Json::Object(map))
            }
        }
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}
