//! Run reports: one JSON document plus CSV tables per run.

use std::fs;
use std::path::{Path, PathBuf};

use degell::analysis::Table;
use degell::{NormReport, SolveReport, StudyResult, Verdict};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub nx: usize,
    pub ny: usize,
    pub scheme: String,
    pub norms: NormReport,
    pub source_l2: f64,
    pub solve: SolveReport,
}

/// Weak-form residuals of the computed solution against one test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub k: u32,
    pub l: u32,
    pub weak: f64,
    pub derivative: f64,
    pub theta_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub nx: usize,
    pub ny: usize,
    pub theta: f64,
    pub solve: SolveReport,
    pub rows: Vec<VerifyRow>,
    pub max_abs_residual: f64,
}

/// Scalar summary of an equilibrium run; the fields themselves go to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub j1: f64,
    pub j2: f64,
    pub converged: bool,
    pub certified: bool,
    pub certification_margin: f64,
    pub certification_margins: [f64; 2],
    pub certification_tolerances: [f64; 2],
    pub deviations: usize,
    pub br_iterations: usize,
    pub br_residuals: Vec<f64>,
    pub fixed_point_residuals: [f64; 2],
    pub control_norms: [f64; 2],
    pub radii: [f64; 2],
    pub order: String,
    pub gradient_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunResult {
    Solve(SolveOutcome),
    Verify(VerifyOutcome),
    Study(StudyResult),
    Game(GameOutcome),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub wall_time: f64,
    pub config: RunConfig,
    pub verdict: Option<Verdict>,
    pub result: RunResult,
    /// Names of the CSV tables written next to the report.
    pub tables: Vec<String>,
}

impl RunReport {
    /// 0 on success or no verdict, 2 on a failed verdict.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Some(Verdict::Fail) => 2,
            _ => 0,
        }
    }
}

/// Write `table` as CSV; values read back bit-exactly.
pub fn write_table(path: &Path, table: &Table) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&v| format_value(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Integers print bare; everything else in shortest round-trip form.
fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}

/// Read a table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<Table, RunError> {
    let mut r = csv::Reader::from_path(path)?;
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| RunError::Parse(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

/// Write `report.json` and every table into `dir`; returns the report path.
pub fn write_outputs(
    dir: &Path,
    report: &RunReport,
    tables: &[(String, Table)],
) -> Result<PathBuf, RunError> {
    fs::create_dir_all(dir)?;
    for (name, table) in tables {
        write_table(&dir.join(format!("{name}.csv")), table)?;
    }
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(report)?)?;
    Ok(path)
}

pub fn read_report(path: &Path) -> Result<RunReport, RunError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
