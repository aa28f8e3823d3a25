//! Reports and their text, JSON-lines and CSV renderings.

use std::io;
use std::time::Duration;

use avgeom_core::Tensor3;
use nalgebra::DMatrix;
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::config::{Format, JobKind, Settings};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Text(String),
    List(Vec<Value>),
    Map(Vec<(String, Value)>),
}

impl Value {
    pub fn map() -> Self {
        Value::Map(Vec::new())
    }

    /// Appends to a map value; no-op on anything else.
    pub fn with(mut self, key: &str, v: impl Into<Value>) -> Self {
        if let Value::Map(m) = &mut self {
            m.push((key.to_string(), v.into()));
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        match self {
            Value::Map(m) => m.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }

    /// Path of the first NaN or infinity.
    pub fn first_non_finite(&self, path: &str) -> Option<String> {
        match self {
            Value::Num(v) if !v.is_finite() => Some(format!("{path} = {v}")),
            Value::List(items) => {
                items.iter().enumerate().find_map(|(i, v)| v.first_non_finite(&format!("{path}[{i}]")))
            }
            Value::Map(m) => m.iter().find_map(|(k, v)| v.first_non_finite(&join(path, k))),
            _ => None,
        }
    }

    fn flatten_into(&self, path: &str, out: &mut Vec<(String, String)>) {
        match self {
            Value::List(items) => {
                for (i, v) in items.iter().enumerate() {
                    v.flatten_into(&format!("{path}[{i}]"), out);
                }
            }
            Value::Map(m) => {
                for (k, v) in m {
                    v.flatten_into(&join(path, k), out);
                }
            }
            scalar => out.push((path.to_string(), scalar_string(scalar))),
        }
    }

    fn is_scalar(&self) -> bool {
        !matches!(self, Value::List(_) | Value::Map(_))
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn scalar_string(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Num(x) => format!("{x:.16e}"),
        Value::Text(s) => s.clone(),
        _ => String::new(),
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_unit(),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Int(i) => s.serialize_i64(*i),
            Value::Num(x) => s.serialize_f64(*x),
            Value::Text(t) => s.serialize_str(t),
            Value::List(items) => {
                let mut seq = s.serialize_seq(Some(items.len()))?;
                for v in items {
                    seq.serialize_element(v)?;
                }
                seq.end()
            }
            Value::Map(m) => {
                let mut map = s.serialize_map(Some(m.len()))?;
                for (k, v) in m {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Int(i as i64)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl<T: Into<Value> + Clone> From<&[T]> for Value {
    fn from(v: &[T]) -> Self {
        Value::List(v.iter().cloned().map(Into::into).collect())
    }
}

impl<T: Into<Value>> From<Vec<T>> for Value {
    fn from(v: Vec<T>) -> Self {
        Value::List(v.into_iter().map(Into::into).collect())
    }
}

impl From<&DMatrix<f64>> for Value {
    fn from(m: &DMatrix<f64>) -> Self {
        avgeom_core::tensor::matrix_to_nested(m).into()
    }
}

impl From<&Tensor3> for Value {
    fn from(t: &Tensor3) -> Self {
        t.to_nested().into()
    }
}

/// Rows for CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub job: JobKind,
    pub config: Settings,
    pub results: Value,
    pub diagnostics: Value,
    pub elapsed: Duration,
    pub table: Option<Table>,
    /// Number of failed checks (only `check` sets this).
    pub failures: usize,
}

impl Report {
    pub fn new(job: JobKind, config: Settings) -> Self {
        Report {
            job,
            config,
            results: Value::map(),
            diagnostics: Value::map(),
            elapsed: Duration::ZERO,
            table: None,
            failures: 0,
        }
    }

    pub fn ensure_finite(&self) -> Result<(), CliError> {
        if let Some(p) = self.results.first_non_finite("results").or_else(|| self.diagnostics.first_non_finite("diagnostics")) {
            return Err(CliError::NonFinite(p));
        }
        if let Some(t) = &self.table {
            for row in &t.rows {
                if let Some(p) = Value::List(row.clone()).first_non_finite("table") {
                    return Err(CliError::NonFinite(p));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Jsonl => Ok(self.to_json_line()),
            Format::Text => Ok(self.to_text()),
            Format::Csv => self.to_csv(),
        }
    }

    /// One JSON object on a single line; floats use 17 significant digits.
    /// Timing is left out so the line depends only on the config.
    pub fn to_json_line(&self) -> String {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, ScientificFormatter);
        self.serialize(&mut ser).expect("in-memory serialization");
        let mut s = String::from_utf8(buf).expect("serde_json writes utf-8");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("avgeom {}\n", self.job);
        out.push_str("config:\n");
        if let Ok(serde_json::Value::Object(m)) = serde_json::to_value(&self.config) {
            for (k, v) in m {
                out.push_str(&format!("  {k} = {v}\n"));
            }
        }
        out.push_str("results:\n");
        write_text(&mut out, &self.results, 1);
        out.push_str("diagnostics:\n");
        write_text(&mut out, &self.diagnostics, 1);
        out.push_str(&format!("  elapsed = {:.3} s\n", self.elapsed.as_secs_f64()));
        out
    }

    /// The job's table when it has one, otherwise every result as a
    /// `quantity,value` row.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Output { path: "csv".into(), source: io::Error::other(e) };
        match &self.table {
            Some(t) => {
                w.write_record(&t.columns).map_err(csv_err)?;
                for row in &t.rows {
                    w.write_record(row.iter().map(scalar_string)).map_err(csv_err)?;
                }
            }
            None => {
                let mut flat = Vec::new();
                self.results.flatten_into("", &mut flat);
                w.write_record(["quantity", "value"]).map_err(csv_err)?;
                for (k, v) in flat {
                    w.write_record([k, v]).map_err(csv_err)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output { path: "csv".into(), source: e.into_error() })?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 strings"))
    }
}

impl Serialize for Report {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(4))?;
        map.serialize_entry("job", &self.job)?;
        map.serialize_entry("config", &self.config)?;
        map.serialize_entry("results", &self.results)?;
        map.serialize_entry("diagnostics", &self.diagnostics)?;
        map.end()
    }
}

fn write_text(out: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth);
    let Value::Map(m) = v else {
        out.push_str(&format!("{pad}{}\n", inline(v)));
        return;
    };
    for (k, v) in m {
        match v {
            Value::Map(_) => {
                out.push_str(&format!("{pad}{k}:\n"));
                write_text(out, v, depth + 1);
            }
            Value::List(items) if items.iter().any(|i| !i.is_scalar()) => {
                out.push_str(&format!("{pad}{k}:\n"));
                for item in items {
                    match item {
                        Value::Map(_) => {
                            out.push_str(&format!("{pad}  -\n"));
                            write_text(out, item, depth + 2);
                        }
                        _ => out.push_str(&format!("{pad}  {}\n", inline(item))),
                    }
                }
            }
            _ => out.push_str(&format!("{pad}{k} = {}\n", inline(v))),
        }
    }
}

fn inline(v: &Value) -> String {
    match v {
        Value::Num(x) => format!("{x:.10e}"),
        Value::List(items) => format!("[{}]", items.iter().map(inline).collect::<Vec<_>>().join(", ")),
        Value::Map(m) => format!(
            "{{{}}}",
            m.iter().map(|(k, v)| format!("{k}: {}", inline(v))).collect::<Vec<_>>().join(", ")
        ),
        other => scalar_string(other),
    }
}

/// Writes every `f64` as `{:.16e}`.
struct ScientificFormatter;

impl serde_json::ser::Formatter for ScientificFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}
