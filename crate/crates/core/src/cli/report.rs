use serde::Serialize;
use serde_json::Value;

use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// Passes when `value <= tolerance`.
    Le,
    /// Passes when `value > tolerance`.
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Residual {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Residual {
        Residual { name: name.into(), value, tolerance, comparison: Comparison::Le, pass: value <= tolerance }
    }

    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Residual {
        Residual { name: name.into(), value, tolerance: threshold, comparison: Comparison::Gt, pass: value > threshold }
    }
}

/// Command output. Field order is fixed; nothing time- or host-dependent is recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub config_sha256: String,
    pub results: Value,
    pub diagnostics: Value,
    pub residuals: Vec<Residual>,
    /// CSV body for `--format csv`.
    #[serde(skip)]
    pub table: Table,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        self.table.to_csv()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Table {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
    }
}

/// Shortest round-trip decimal form, exponent notation for extreme magnitudes.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).expect("finite float")
    } else {
        format!("{x}")
    }
}

pub fn complex(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// Row-major `[[re, im], …]` rows.
pub fn cmat(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| complex(m[(i, j)])).collect()).collect()
}
