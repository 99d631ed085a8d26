//! CSV tables, assertion bookkeeping and atomic file output.

use std::path::{Path, PathBuf};

use wasser_dual::io::{fmt_f64, write_atomic};
use wasser_dual::Exponent;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Input(e.to_string()))
    }
}

pub fn num(v: f64) -> String {
    fmt_f64(v)
}

pub fn exponent(p: Exponent) -> String {
    match p {
        Exponent::Infinite => "inf".into(),
        Exponent::Finite(v) => fmt_f64(v),
    }
}

/// One asserted invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    /// Table holding the checked value.
    pub table: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Checks {
    items: Vec<Check>,
}

impl Checks {
    /// Records `value <= tolerance`.
    pub fn at_most(&mut self, name: impl Into<String>, table: &str, value: f64, tolerance: f64) {
        self.items.push(Check {
            name: name.into(),
            table: table.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        });
    }

    /// Records `value >= −tolerance`.
    pub fn at_least_neg(&mut self, name: impl Into<String>, table: &str, value: f64, tolerance: f64) {
        self.items.push(Check {
            name: name.into(),
            table: table.into(),
            value,
            tolerance,
            passed: value >= -tolerance,
        });
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.items.iter().filter(|c| !c.passed).collect()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["check", "table", "value", "tolerance", "status"]);
        for c in &self.items {
            t.push(vec![
                c.name.clone(),
                c.table.clone(),
                num(c.value),
                num(c.tolerance),
                if c.passed { "pass" } else { "fail" }.into(),
            ]);
        }
        t
    }
}

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("out: cannot create `{}`: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<(), CliError> {
        self.write_bytes(name, &table.to_bytes()?)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), bytes)?;
        Ok(())
    }
}

/// One point of the `p ↦ (K_C, K_G)` series.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotRow {
    pub p: Exponent,
    pub k_c: f64,
    pub k_g: Option<f64>,
    pub ci_halfwidth: f64,
    pub mesh: f64,
}

/// `p,K_C,K_G,ci_halfwidth,mesh`, sorted by `p` with `inf` last.
pub fn emit_plot_data(rows: &[PlotRow]) -> Table {
    let mut sorted: Vec<&PlotRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.p.value().total_cmp(&b.p.value()));
    let mut t = Table::new(&["p", "K_C", "K_G", "ci_halfwidth", "mesh"]);
    for r in sorted {
        t.push(vec![
            exponent(r.p),
            num(r.k_c),
            r.k_g.map(num).unwrap_or_default(),
            num(r.ci_halfwidth),
            num(r.mesh),
        ]);
    }
    t
}
