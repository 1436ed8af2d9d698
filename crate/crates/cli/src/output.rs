use std::collections::BTreeMap;

use laguerre_kernels::tabulated::fmt17;
use serde_json::{json, Map, Value};

/// A CSV table. The resolved config is written first as `# key=value` lines.
pub struct Csv {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

pub enum Cell {
    Num(f64),
    Text(String),
    Flag(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt17(*v),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }
}

impl Csv {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, config: &BTreeMap<String, String>) -> String {
        let mut out = String::new();
        for (k, v) in config {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(Cell::render).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// The JSON report: a single object with `config`, `rows`, `fitted`, `pass` and
/// any extra sections.
pub fn json_report(
    config: &BTreeMap<String, String>,
    rows: Vec<Value>,
    fitted: BTreeMap<String, f64>,
    extra: Map<String, Value>,
    pass: bool,
) -> String {
    let mut obj = Map::new();
    obj.insert("config".into(), json!(config));
    obj.insert("rows".into(), Value::Array(rows));
    obj.insert("fitted".into(), json!(fitted));
    obj.insert("pass".into(), Value::Bool(pass));
    for (k, v) in extra {
        obj.insert(k, v);
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(obj)).expect("serializable");
    s.push('\n');
    s
}
