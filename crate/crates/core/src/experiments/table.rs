//! Result tables: typed columns, CSV and JSON output, pass/fail gates.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    /// An estimate column; the next column holds its CI half-width.
    pub estimate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub experiment: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
    pub meta: Map<String, Value>,
    pub gates: Vec<Gate>,
    /// Warnings such as too many uncertified outlets or starved samplers.
    pub flags: Vec<String>,
}

/// Suffix of the half-width column paired with each estimate column.
pub const CI_SUFFIX: &str = "_ci";

impl ResultTable {
    pub fn new(experiment: &str) -> Self {
        ResultTable {
            experiment: experiment.to_string(),
            columns: Vec::new(),
            rows: Vec::new(),
            meta: Map::new(),
            gates: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn col(&mut self, name: &str, unit: &str) -> &mut Self {
        self.columns.push(Column { name: name.into(), unit: unit.into(), estimate: false });
        self
    }

    /// An estimate column followed by its `_ci` half-width column.
    pub fn est(&mut self, name: &str, unit: &str) -> &mut Self {
        self.columns.push(Column { name: name.into(), unit: unit.into(), estimate: true });
        self.columns.push(Column { name: format!("{name}{CI_SUFFIX}"), unit: unit.into(), estimate: false });
        self
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the schema");
        self.rows.push(row);
    }

    pub fn gate(&mut self, name: &str, passed: bool, detail: String) {
        self.gates.push(Gate { name: name.into(), passed, detail });
    }

    pub fn flag(&mut self, msg: String) {
        self.flags.push(msg);
    }

    pub fn gates_passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn find_gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Cell by row and column name.
    pub fn cell(&self, row: usize, name: &str) -> Option<&Value> {
        self.column_index(name).and_then(|j| self.rows.get(row).map(|r| &r[j]))
    }

    pub fn f64_at(&self, row: usize, name: &str) -> Option<f64> {
        self.cell(row, name).and_then(Value::as_f64)
    }

    /// An estimate column read back as `value ± half-width`.
    pub fn estimate_at(&self, row: usize, name: &str) -> Option<Estimate> {
        let v = self.f64_at(row, name)?;
        let h = self.f64_at(row, &format!("{name}{CI_SUFFIX}"))?;
        Some(Estimate { value: v, lo: v - h, hi: v + h })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell_text))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Value {
        let mut meta = self.meta.clone();
        meta.insert("experiment".into(), json!(self.experiment));
        meta.insert("units".into(), Value::Object(self.columns.iter().map(|c| (c.name.clone(), json!(c.unit))).collect()));
        meta.insert("gates".into(), serde_json::to_value(&self.gates).expect("gates serialize"));
        meta.insert("flags".into(), json!(self.flags));
        json!({
            "meta": meta,
            "columns": self.columns.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
            "rows": self.rows,
        })
    }

    /// Write `<stem>.csv` and `<stem>.json`, creating parent directories.
    pub fn write_files(&self, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let stem = stem.strip_suffix(".csv").or_else(|| stem.strip_suffix(".json")).unwrap_or(stem);
        let csv_path = PathBuf::from(format!("{stem}.csv"));
        let json_path = PathBuf::from(format!("{stem}.json"));
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        self.write_csv(fs::File::create(&csv_path)?)?;
        let text = serde_json::to_string_pretty(&self.to_json())?;
        fs::write(&json_path, text + "\n")?;
        Ok((csv_path, json_path))
    }

    /// Parse the `columns` and `rows` of a JSON table.
    pub fn rows_from_json(path: &Path) -> Result<(Vec<String>, Vec<Vec<Value>>)> {
        let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        let cols = v["columns"]
            .as_array()
            .ok_or_else(|| Error::Domain("json table without columns".into()))?
            .iter()
            .map(|c| c.as_str().unwrap_or_default().to_string())
            .collect();
        let rows = serde_json::from_value(v["rows"].clone())?;
        Ok((cols, rows))
    }
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// The two cells of an estimate column.
pub fn est_cells(e: Estimate) -> [Value; 2] {
    [num(e.value), num(e.halfwidth())]
}

/// A float cell; non-finite values become empty cells.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}
