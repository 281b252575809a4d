//! Line-delimited JSON reports.
//!
//! A solve report is a `header` line, one `iteration` line per IPM iteration
//! and a closing `summary` line. A bench report is one `bench` line per size.
//! Fields named `wall_time_s` carry timings and are the only nondeterministic
//! content.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::BenchRow;
use crate::error::Result;
use crate::ipm::{IpmConfig, SolveReport};

pub const SCHEMA_VERSION: u32 = 1;
pub const TIMING_FIELD: &str = "wall_time_s";

/// Run parameters echoed in the header line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub dims: Vec<usize>,
    pub n: usize,
    pub num_missing: usize,
    pub lambda: f64,
    /// True when lambda came from the `0.1 |M_perp^T b|_inf` default.
    pub lambda_defaulted: bool,
    pub tol: f64,
    pub cg_tol: f64,
    pub max_iters: usize,
}

impl RunMetadata {
    pub fn new(
        dims: &[usize],
        num_missing: usize,
        config: &IpmConfig,
        report: &SolveReport,
    ) -> Self {
        Self {
            dims: dims.to_vec(),
            n: dims.iter().product(),
            num_missing,
            lambda: report.lambda,
            lambda_defaulted: config.lambda.is_none(),
            tol: config.tol,
            cg_tol: config.pcg.abs_tol,
            max_iters: config.max_iters,
        }
    }
}

fn tagged(kind: &str, body: impl Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(body)?;
    if let Value::Object(map) = &mut v {
        map.insert("type".into(), Value::String(kind.into()));
    }
    Ok(v)
}

/// All lines of a solve report, in order.
pub fn solve_report_lines(meta: &RunMetadata, report: &SolveReport) -> Result<Vec<Value>> {
    let mut header = tagged("header", meta)?;
    header["schema_version"] = json!(SCHEMA_VERSION);
    let mut lines = vec![header];
    for rec in &report.records {
        lines.push(tagged("iteration", rec)?);
    }
    lines.push(json!({
        "type": "summary",
        "status": report.status,
        "iterations": report.iterations,
        "lambda": report.lambda,
        "final_objective": report.final_objective,
        "primal_residual": report.final_measures.primal,
        "dual_residual": report.final_measures.dual,
        "complementarity": report.final_measures.complementarity,
        "duality_measure": report.final_measures.duality_measure,
        "total_krylov_iterations": report.total_krylov_iterations,
        "max_krylov_iterations": report.records.iter().map(|r| r.krylov_iterations).max().unwrap_or(0),
        TIMING_FIELD: report.wall_time_s,
    }));
    Ok(lines)
}

/// One `bench` line per row.
pub fn bench_report_lines(rows: &[BenchRow]) -> Result<Vec<Value>> {
    rows.iter().map(|row| tagged("bench", row)).collect()
}

pub fn write_lines(mut out: impl Write, lines: &[Value]) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_solve_report(out: impl Write, meta: &RunMetadata, report: &SolveReport) -> Result<()> {
    write_lines(out, &solve_report_lines(meta, report)?)
}

/// Report text with every timing field removed, for reproducibility checks.
pub fn strip_timing(text: &str) -> Result<String> {
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: Value = serde_json::from_str(line)?;
        if let Value::Object(map) = &mut v {
            map.remove(TIMING_FIELD);
        }
        out.push_str(&serde_json::to_string(&v)?);
        out.push('\n');
    }
    Ok(out)
}
