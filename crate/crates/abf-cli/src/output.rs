//! Tables and their JSON / CSV renderings.
//!
//! JSON is `{"meta": {...}, "data": [{column: value}, ...]}` with complex
//! values as `[re, im]`. CSV starts with `# key = value` metadata lines, then a
//! header row; a complex column `z` becomes `z_re,z_im`.

use std::io::Write;

use clap::ValueEnum;
use num_complex::Complex64 as C64;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Complex(C64),
    Bool(bool),
    Text(String),
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<C64> for Cell {
    fn from(v: C64) -> Self {
        Cell::Complex(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Real(v) => json!(v),
            Cell::Complex(z) => json!([z.re, z.im]),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }

    fn csv_fields(&self) -> Vec<String> {
        match self {
            Cell::Int(v) => vec![v.to_string()],
            Cell::Real(v) => vec![v.to_string()],
            Cell::Complex(z) => vec![z.re.to_string(), z.im.to_string()],
            Cell::Bool(b) => vec![b.to_string()],
            Cell::Text(s) => vec![s.clone()],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn render(meta: &Map<String, Value>, table: &Table, format: Format) -> Result<Vec<u8>, String> {
    match format {
        Format::Json => {
            let data: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = table
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), v.to_json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect();
            let doc = json!({ "meta": meta, "data": data });
            let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| e.to_string())?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut out = Vec::new();
            for (k, v) in meta {
                writeln!(out, "# {k} = {v}").map_err(|e| e.to_string())?;
            }
            // a column is complex if any row holds a complex value there
            let complex: Vec<bool> = (0..table.columns.len())
                .map(|i| table.rows.iter().any(|r| matches!(r[i], Cell::Complex(_))))
                .collect();
            let mut w = csv::Writer::from_writer(out);
            let header: Vec<String> = table
                .columns
                .iter()
                .zip(&complex)
                .flat_map(|(c, &z)| {
                    if z {
                        vec![format!("{c}_re"), format!("{c}_im")]
                    } else {
                        vec![c.to_string()]
                    }
                })
                .collect();
            w.write_record(&header).map_err(|e| e.to_string())?;
            for row in &table.rows {
                let fields: Vec<String> = row.iter().flat_map(Cell::csv_fields).collect();
                w.write_record(&fields).map_err(|e| e.to_string())?;
            }
            w.into_inner().map_err(|e| e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Map<String, Value>, Table) {
        let mut meta = Map::new();
        meta.insert("k".into(), json!(3));
        let mut t = Table::new(&["m", "z", "ok"]);
        t.push(vec![Cell::from(1i64), Cell::from(C64::new(0.5, -2.0)), Cell::from(true)]);
        (meta, t)
    }

    #[test]
    fn csv_has_metadata_then_split_header() {
        let (meta, t) = sample();
        let text = String::from_utf8(render(&meta, &t, Format::Csv).unwrap()).unwrap();
        assert_eq!(text, "# k = 3\nm,z_re,z_im,ok\n1,0.5,-2,true\n");
    }

    #[test]
    fn json_writes_complex_as_pairs() {
        let (meta, t) = sample();
        let doc: Value = serde_json::from_slice(&render(&meta, &t, Format::Json).unwrap()).unwrap();
        assert_eq!(doc["meta"]["k"], 3);
        assert_eq!(doc["data"][0]["z"], json!([0.5, -2.0]));
    }
}
