//! Tabular results rendered as CSV or JSON.

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(x) => x.to_string(),
            // `Display` of f64 is the shortest string that parses back to the same value
            Cell::Float(x) => x.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => u8::from(*b).to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(x) => Value::from(*x),
            Cell::Float(x) if x.is_finite() => Value::from(*x),
            Cell::Float(x) => Value::from(x.to_string()),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::from(*b),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let object: Map<String, Value> = self
                        .columns
                        .iter()
                        .cloned()
                        .zip(row.iter().map(Cell::json))
                        .collect();
                    Value::Object(object)
                })
                .collect(),
        )
    }
}

/// What a subcommand produced: a table, a free-form summary, or both.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub table: Option<Table>,
    pub summary: Option<Value>,
}

impl Output {
    pub fn table(table: Table) -> Self {
        Self {
            table: Some(table),
            summary: None,
        }
    }

    pub fn summary(summary: Value) -> Self {
        Self {
            table: None,
            summary: Some(summary),
        }
    }

    pub fn with_summary(table: Table, summary: Value) -> Self {
        Self {
            table: Some(table),
            summary: Some(summary),
        }
    }

    /// CSV holds the table only; summary-only outputs are always JSON.
    pub fn render(&self, csv: bool) -> String {
        match (&self.table, &self.summary) {
            (Some(t), _) if csv => t.to_csv(),
            (Some(t), None) => pretty(&Value::Object(Map::from_iter([("rows".to_string(), t.to_json())]))),
            (Some(t), Some(s)) => pretty(&Value::Object(Map::from_iter([
                ("rows".to_string(), t.to_json()),
                ("summary".to_string(), s.clone()),
            ]))),
            (None, Some(s)) => pretty(s),
            (None, None) => String::new(),
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}
