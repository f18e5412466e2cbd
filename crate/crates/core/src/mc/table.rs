//! Named tables with CSV and JSON renderings.

use std::fmt::Write as _;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

/// One cell. Floats render with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    F(f64),
    U(u64),
    B(bool),
    S(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::F(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::U(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::U(v as u64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::B(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::S(v.to_string())
    }
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::F(x) => format!("{x:.16e}"),
            Value::U(x) => x.to_string(),
            Value::B(x) => x.to_string(),
            Value::S(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::F(x) => Some(*x),
            Value::U(x) => Some(*x as f64),
            _ => None,
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            // JSON has no NaN or infinity.
            Value::F(x) if !x.is_finite() => s.serialize_str(&format!("{x}")),
            Value::F(x) => s.serialize_f64(*x),
            Value::U(x) => s.serialize_u64(*x),
            Value::B(x) => s.serialize_bool(*x),
            Value::S(x) => s.serialize_str(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Value::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

struct Rows<'a>(&'a Table);

struct Row<'a>(&'a [&'static str], &'a [Value]);

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl Serialize for Rows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.rows.len()))?;
        for r in &self.0.rows {
            seq.serialize_element(&Row(&self.0.columns, r))?;
        }
        seq.end()
    }
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("name", &self.name)?;
        m.serialize_entry("columns", &self.columns)?;
        m.serialize_entry("rows", &Rows(self))?;
        m.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_round_trip() {
        let mut t = Table::new("t", &["x", "n", "ok"]);
        let x = 0.1 + 0.2;
        t.push(vec![x.into(), 3u64.into(), true.into()]);
        let csv = t.to_csv();
        assert!(csv.starts_with("x,n,ok\n"));
        let cell = csv.lines().nth(1).unwrap().split(',').next().unwrap();
        assert_eq!(cell.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn json_rows_are_objects() {
        let mut t = Table::new("t", &["a"]);
        t.push(vec![f64::NAN.into()]);
        t.push(vec![1.5.into()]);
        let j = serde_json::to_value(&t).unwrap();
        assert_eq!(j["rows"][0]["a"], "NaN");
        assert_eq!(j["rows"][1]["a"], 1.5);
    }
}
