//! Report tables and their CSV / JSON serialisation.
//!
//! Numbers are written with 12 significant digits in both formats, so a CSV
//! and a JSON file produced from the same report carry the same values.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{Map, Number, Value as Json};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Num(f64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Int(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<u32> for Value {
    fn from(x: u32) -> Self {
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
        Value::Text(x.to_string())
    }
}

impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Text(x)
    }
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Num(x) => format_number(*x),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Json {
        match self {
            Value::Int(i) => Json::from(*i),
            Value::Bool(b) => Json::Bool(*b),
            Value::Text(s) => Json::String(s.clone()),
            Value::Num(x) => {
                let s = format_number(*x);
                match s.parse::<f64>().ok().and_then(Number::from_f64) {
                    Some(n) if x.is_finite() => Json::Number(n),
                    _ => Json::String(s),
                }
            }
        }
    }
}

/// `x` with 12 significant digits, trailing zeros dropped; scientific notation
/// outside `[1e-5, 1e12)`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|v| csv_field(&v.render())).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    fn to_json(&self) -> Json {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let obj: Map<String, Json> = self.columns.iter().cloned().zip(r.iter().map(Value::to_json)).collect();
                Json::Object(obj)
            })
            .collect();
        let mut obj = Map::new();
        obj.insert("columns".into(), Json::Array(self.columns.iter().cloned().map(Json::String).collect()));
        obj.insert("rows".into(), Json::Array(rows));
        Json::Object(obj)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything one experiment run produces.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Report {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub summary: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    pub assertions: Vec<Assertion>,
}

impl Report {
    pub fn new(experiment: &str) -> Self {
        Report { experiment: experiment.into(), ..Default::default() }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.passed).collect()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Key/value table of `summary`, emitted alongside the data tables in CSV mode.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new("summary", &["key", "value"]);
        for (k, v) in &self.summary {
            t.push(vec![Value::Text(k.clone()), v.clone()]);
        }
        t
    }

    pub fn to_json(&self) -> String {
        let mut obj = Map::new();
        obj.insert("experiment".into(), Json::String(self.experiment.clone()));
        obj.insert("params".into(), Json::Object(self.params.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()));
        obj.insert(
            "summary".into(),
            Json::Object(self.summary.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
        );
        obj.insert("tables".into(), Json::Object(self.tables.iter().map(|t| (t.name.clone(), t.to_json())).collect()));
        let asserts = self
            .assertions
            .iter()
            .map(|a| {
                let mut o = Map::new();
                o.insert("name".into(), Json::String(a.name.clone()));
                o.insert("passed".into(), Json::Bool(a.passed));
                o.insert("detail".into(), Json::String(a.detail.clone()));
                Json::Object(o)
            })
            .collect();
        obj.insert("assertions".into(), Json::Array(asserts));
        let mut s = serde_json::to_string_pretty(&Json::Object(obj)).expect("json");
        s.push('\n');
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("format must be csv or json (got {s})")),
        }
    }
}

/// Writes the report under `dir`: `<experiment>.json`, or one
/// `<experiment>-<table>.csv` per table plus the summary table.
pub fn emit(report: &Report, format: Format, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        Format::Json => {
            let path = dir.join(format!("{}.json", report.experiment));
            fs::write(&path, report.to_json())?;
            written.push(path);
        }
        Format::Csv => {
            for t in report.tables.iter().cloned().chain(std::iter::once(report.summary_table())) {
                let path = dir.join(format!("{}-{}.csv", report.experiment, t.name));
                fs::write(&path, t.to_csv())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
