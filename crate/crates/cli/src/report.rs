//! Report files: CSV tables with provenance columns and a JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Build-time `git describe`, or `unknown` outside a checkout.
pub const GIT_DESCRIBE: &str = env!("ANL_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub grid: String,
    pub mode: String,
    pub eos: String,
    pub seed: u64,
    pub git: String,
}

impl Provenance {
    const HEADER: [&'static str; 5] = ["grid", "mode", "eos", "seed", "git"];

    fn cells(&self) -> [String; 5] {
        [self.grid.clone(), self.mode.clone(), self.eos.clone(), self.seed.to_string(), self.git.clone()]
    }
}

/// One threshold check; the run passes iff every gate passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `le`: `value ≤ threshold`; `ge`: `value ≥ threshold`; `floor`: both
    /// sides sit at round-off and the gate passes.
    pub relation: &'static str,
    pub pass: bool,
}

impl Gate {
    pub fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Gate { name: name.into(), value, threshold, relation: "le", pass: value <= threshold }
    }

    pub fn ge(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Gate { name: name.into(), value, threshold, relation: "ge", pass: value >= threshold }
    }

    pub fn truth(name: impl Into<String>, ok: bool) -> Self {
        Gate { name: name.into(), value: ok as u8 as f64, threshold: 1.0, relation: "ge", pass: ok }
    }

    /// Decay ratio gate; passes as `floor` when both values are below `floor`.
    pub fn decay(name: impl Into<String>, coarse: f64, fine: f64, threshold: f64, floor: f64) -> Self {
        if coarse <= floor && fine <= floor {
            return Gate { name: name.into(), value: fine, threshold: floor, relation: "floor", pass: true };
        }
        Self::ge(name, coarse / fine, threshold)
    }
}

/// A CSV table; provenance columns come first on every row.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(cols: &[&str]) -> Self {
        Table { header: cols.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Shortest round-trip representation; reports stay byte-stable.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub struct ReportWriter {
    dir: PathBuf,
    prov: Provenance,
    written: Vec<PathBuf>,
}

impl ReportWriter {
    pub fn new(dir: &Path, prov: Provenance) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
        Ok(ReportWriter { dir: dir.to_path_buf(), prov, written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn provenance(&self) -> &Provenance {
        &self.prov
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let io = |e: csv::Error| CliError::Csv { path: path.clone(), source: e };
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        let mut head: Vec<String> = Provenance::HEADER.iter().map(|s| s.to_string()).collect();
        head.extend(table.header.iter().cloned());
        w.write_record(&head).map_err(io)?;
        let prov = self.prov.cells();
        for r in &table.rows {
            w.write_record(prov.iter().chain(r.iter())).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io { path: path.clone(), source: e })?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io { path: path.clone(), source: e })?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Writes the gates table and the summary JSON.
pub fn finish(w: &mut ReportWriter, command: &str, gates: &[Gate], details: serde_json::Value) -> Result<bool, CliError> {
    let mut t = Table::new(&["gate", "value", "relation", "threshold", "pass"]);
    for g in gates {
        t.push(vec![g.name.clone(), num(g.value), g.relation.to_string(), num(g.threshold), g.pass.to_string()]);
    }
    w.csv("gates.csv", &t)?;
    let pass = gates.iter().all(|g| g.pass);
    let summary = serde_json::json!({
        "command": command,
        "provenance": w.provenance(),
        "pass": pass,
        "failed": gates.iter().filter(|g| !g.pass).map(|g| g.name.clone()).collect::<Vec<_>>(),
        "gates": gates,
        "details": details,
    });
    w.json("summary.json", &summary)?;
    Ok(pass)
}
