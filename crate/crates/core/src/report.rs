//! Plain CSV tables with round-trip float formatting.

use std::fmt::Write as _;
use std::path::Path;

use crate::evolution::EvolutionTrace;
use crate::field::Field;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.into())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem; the table is written to `<name>.csv`.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match c {
                    // Display of f64 is the shortest string that round-trips
                    Cell::Num(v) => write!(out, "{v}").unwrap(),
                    Cell::Int(v) => write!(out, "{v}").unwrap(),
                    Cell::Text(t) if t.contains([',', '"', '\n']) => {
                        write!(out, "\"{}\"", t.replace('"', "\"\"")).unwrap()
                    }
                    Cell::Text(t) => out.push_str(t),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::write(dir.join(format!("{}.csv", self.name)), self.to_csv())
    }
}

/// `x, delta, <name>` columns for one or more fields on a common grid.
pub fn field_table(name: &str, fields: &[(&str, &Field)]) -> Table {
    let mut cols = vec!["x", "delta"];
    cols.extend(fields.iter().map(|(n, _)| *n));
    let mut t = Table::new(name, &cols);
    let grid = fields[0].1.grid();
    for i in 0..grid.len() {
        let mut row = vec![Cell::Num(grid.nodes()[i]), Cell::Num(grid.delta()[i])];
        row.extend(fields.iter().map(|(_, f)| Cell::Num(f.values()[i])));
        t.push(row);
    }
    t
}

/// Long-format snapshots `t, x, u`.
pub fn snapshot_table(name: &str, trace: &EvolutionTrace, stride: usize) -> Table {
    let mut t = Table::new(name, &["t", "x", "u"]);
    let stride = stride.max(1);
    for (k, u) in trace.snapshots.iter().enumerate() {
        if k % stride != 0 && k != trace.n_steps {
            continue;
        }
        for (&x, &v) in u.grid().nodes().iter().zip(u.values()) {
            t.push(vec![Cell::Num(trace.time(k)), Cell::Num(x), Cell::Num(v)]);
        }
    }
    t
}

pub fn ledger_table(name: &str, trace: &EvolutionTrace) -> Table {
    let mut t = Table::new(
        name,
        &["t", "kinetic", "energy", "potential", "source_work", "f_term", "residual"],
    );
    for r in &trace.ledger {
        t.push(vec![
            r.t.into(),
            r.kinetic.into(),
            r.energy.into(),
            r.potential.into(),
            r.source_work.into(),
            r.f_term.into(),
            r.residual.into(),
        ]);
    }
    t
}
