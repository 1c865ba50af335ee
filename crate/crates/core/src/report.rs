//! Flat output documents: ordered key/value JSON objects and CSV tables.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) so a value
//! survives a text round trip bit for bit. Non-finite floats become `null` in
//! JSON and an empty cell in CSV.

use std::fmt::Write as _;

use num_complex::Complex64;

/// `x` with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Floats(Vec<f64>),
    /// Complex numbers as `[re, im]` pairs.
    Complexes(Vec<Complex64>),
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<Option<f64>> for Value {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Value::Null, Value::Float)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Bool(x)
    }
}

impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Str(x.to_string())
    }
}

impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Str(x)
    }
}

fn json_float(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        "null".into()
    }
}

fn csv_float(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        String::new()
    }
}

impl Value {
    fn to_json(&self) -> String {
        match self {
            Value::Null => "null".into(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(x) => json_float(*x),
            Value::Str(s) => serde_json::to_string(s).expect("string serializes"),
            Value::Floats(xs) => {
                let items: Vec<String> = xs.iter().map(|x| json_float(*x)).collect();
                format!("[{}]", items.join(", "))
            }
            Value::Complexes(zs) => {
                let items: Vec<String> = zs
                    .iter()
                    .map(|z| format!("[{}, {}]", json_float(z.re), json_float(z.im)))
                    .collect();
                format!("[{}]", items.join(", "))
            }
        }
    }

    fn to_csv(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(x) => csv_float(*x),
            Value::Str(s) => s.clone(),
            Value::Floats(xs) => xs
                .iter()
                .map(|x| csv_float(*x))
                .collect::<Vec<_>>()
                .join(";"),
            Value::Complexes(zs) => zs
                .iter()
                .map(|z| format!("{}{:+.16e}i", csv_float(z.re), z.im))
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

fn write_csv<'a, H, R>(header: H, rows: R) -> String
where
    H: IntoIterator<Item = &'a str>,
    R: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

/// An ordered, flat key/value document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    entries: Vec<(String, Value)>,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.entries.push((key.to_string(), value.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        for (i, (k, v)) in self.entries.iter().enumerate() {
            let sep = if i + 1 == self.entries.len() { "" } else { "," };
            let key = serde_json::to_string(k).expect("string serializes");
            writeln!(out, "  {key}: {}{sep}", v.to_json()).unwrap();
        }
        out.push_str("}\n");
        out
    }

    /// Header row of keys and a single row of values.
    pub fn to_csv(&self) -> String {
        let row: Vec<String> = self.entries.iter().map(|(_, v)| v.to_csv()).collect();
        write_csv(self.keys(), std::iter::once(row))
    }
}

/// A CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().map(Value::to_csv).collect::<Vec<_>>());
        write_csv(self.header.iter().map(String::as_str), rows)
    }

    /// Array of objects keyed by the header.
    pub fn to_json(&self) -> String {
        let mut out = String::from("[\n");
        for (i, row) in self.rows.iter().enumerate() {
            let fields: Vec<String> = self
                .header
                .iter()
                .zip(row)
                .map(|(k, v)| format!("{}: {}", serde_json::to_string(k).unwrap(), v.to_json()))
                .collect();
            let sep = if i + 1 == self.rows.len() { "" } else { "," };
            writeln!(out, "  {{{}}}{sep}", fields.join(", ")).unwrap();
        }
        out.push_str("]\n");
        out
    }
}
