//! CSV (9 significant digits, `#` comment header) and JSON (shortest
//! round-trip decimals) tables. Files are written to a sibling temporary and
//! renamed, so a failed run never leaves a partial file behind.

use serde_json::{json, Map, Value};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
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

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

/// `%.9g`.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}").to_lowercase();
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-5..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp).max(0) as usize, x);
        // Rounding may carry into a new leading digit; re-check the width.
        let digits = fixed.trim_start_matches('-').replace('.', "").trim_start_matches('0').len();
        let fixed = if digits > 9 && exp < 8 { format!("{:.*}", (7 - exp).max(0) as usize, x) } else { fixed };
        trim_zeros(&fixed)
    } else {
        let sci = format!("{x:.8e}");
        let (mant, e) = sci.split_once('e').unwrap();
        format!("{}e{}", trim_zeros(mant), e)
    };
    s
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn csv_cell(c: &Cell) -> String {
    match c {
        Cell::Num(x) => sig9(*x),
        Cell::Int(i) => i.to_string(),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
        Cell::Bool(b) => b.to_string(),
    }
}

fn json_cell(c: &Cell) -> Value {
    match c {
        // serde_json prints the shortest decimal that round-trips.
        Cell::Num(x) if x.is_finite() => json!(x),
        Cell::Num(x) => json!(x.to_string()),
        Cell::Int(i) => json!(i),
        Cell::Text(s) => json!(s),
        Cell::Bool(b) => json!(b),
    }
}

pub fn render_csv(comment: &str, table: &Table) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(csv_cell).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn render_json(meta: Value, table: &Table) -> String {
    let data: Vec<Value> = table
        .rows
        .iter()
        .map(|row| {
            let mut m = Map::new();
            for (c, v) in table.columns.iter().zip(row) {
                m.insert((*c).to_string(), json_cell(v));
            }
            Value::Object(m)
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&json!({ "meta": meta, "data": data })).expect("JSON of plain values");
    s.push('\n');
    s
}

/// Writes `content` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    let Some(path) = path else {
        io::stdout().write_all(content.as_bytes())?;
        return Ok(());
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let written = fs::write(&tmp, content).and_then(|_| fs::rename(&tmp, path));
    if written.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(written?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.8646647167633873), "0.864664717");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-2.5), "-2.5");
        assert_eq!(sig9(123456789.4), "123456789");
        assert_eq!(sig9(1.5e-12), "1.5e-12");
        assert_eq!(sig9(9.9999999999), "10");
        assert_eq!(sig9(0.0), "0");
    }

    #[test]
    fn csv_and_json_layout() {
        let mut t = Table::new(&["m", "cdf"]);
        t.push(vec![1.0.into(), 0.1.into()]);
        let csv = render_csv("nibm max-cdf\n--n 1", &t);
        assert_eq!(csv, "# nibm max-cdf\n# --n 1\nm,cdf\n1,0.1\n");
        let js: Value = serde_json::from_str(&render_json(json!({"command": "max-cdf"}), &t)).unwrap();
        assert_eq!(js["data"][0]["cdf"], json!(0.1));
        assert_eq!(js["meta"]["command"], "max-cdf");
    }
}
