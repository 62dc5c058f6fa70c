//! Artifact files: a commented header, then a CSV table or one JSON object.

use std::io::Write;
use std::path::PathBuf;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use mbgf::resummation::ScPoleState;

use crate::Format;

pub const SCHEMA: u32 = 1;

/// Decimal with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        "nan".into()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

pub struct Artifact {
    config: Value,
    checksum: String,
    summary: Vec<(String, Value)>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    data: Map<String, Value>,
}

impl Artifact {
    pub fn new(config: Value, checksum: String) -> Self {
        Artifact {
            config,
            checksum,
            summary: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
            data: Map::new(),
        }
    }

    pub fn summary(&mut self, key: &str, value: Value) {
        self.summary.push((key.into(), value));
    }

    pub fn data(&mut self, key: &str, value: Value) {
        self.data.insert(key.into(), value);
    }

    pub fn table(&mut self, columns: Vec<String>, rows: Vec<Vec<Cell>>) {
        self.columns = columns;
        self.rows = rows;
    }

    fn summary_block(&self) -> String {
        let mut s = String::from("summary:\n");
        for (k, v) in &self.summary {
            let v = match v {
                Value::String(x) => x.clone(),
                other => other.to_string(),
            };
            s.push_str(&format!("  {k}: {v}\n"));
        }
        s
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut s = format!("# mbgf {}\n", env!("CARGO_PKG_VERSION"));
                s.push_str(&format!("# config: {}\n", self.config));
                s.push_str(&format!("# input-sha256: {}\n", self.checksum));
                s.push_str(&self.columns.join(","));
                s.push('\n');
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(Cell::csv).collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let mut o = Map::new();
                o.insert("schema".into(), json!(SCHEMA));
                o.insert("tool".into(), json!("mbgf"));
                o.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
                o.insert("config".into(), self.config.clone());
                o.insert("input_sha256".into(), json!(self.checksum));
                let summary: Map<String, Value> = self.summary.iter().cloned().collect();
                o.insert("summary".into(), Value::Object(summary));
                if !self.columns.is_empty() {
                    o.insert("columns".into(), json!(self.columns));
                    let rows: Vec<Value> = self
                        .rows
                        .iter()
                        .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
                        .collect();
                    o.insert("rows".into(), Value::Array(rows));
                }
                for (k, v) in &self.data {
                    o.insert(k.clone(), v.clone());
                }
                let mut s = serde_json::to_string_pretty(&Value::Object(o)).expect("json renders");
                s.push('\n');
                s
            }
        }
    }

    /// Writes the artifact to `out` (or standard output) and the summary
    /// block to standard error.
    pub fn write(&self, out: &Option<PathBuf>, format: Format) -> mbgf::error::Result<()> {
        let body = self.render(format);
        match out {
            Some(p) => std::fs::write(p, body)?,
            None => std::io::stdout().write_all(body.as_bytes())?,
        }
        eprint!("{}", self.summary_block());
        Ok(())
    }
}

/// Pole counts and residue sums in `bins` equal ω bins spanning the state.
pub fn histogram(state: &ScPoleState, bins: usize) -> Value {
    let all: Vec<(f64, f64)> = state.poles.iter().flatten().map(|p| (p.omega, p.residue)).collect();
    if all.is_empty() || bins == 0 {
        return json!([]);
    }
    let lo = all.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let hi = all.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut count = vec![0usize; bins];
    let mut weight = vec![0.0; bins];
    for (w, f) in all {
        let k = (((w - lo) / width) as usize).min(bins - 1);
        count[k] += 1;
        weight[k] += f;
    }
    Value::Array(
        (0..bins)
            .map(|k| {
                json!({
                    "lo": lo + width * k as f64,
                    "hi": lo + width * (k + 1) as f64,
                    "poles": count[k],
                    "residue": weight[k],
                })
            })
            .collect(),
    )
}
