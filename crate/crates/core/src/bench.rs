//! Scaling runs over synthetic cubes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ipm::{solve, IpmConfig, LassoProblem, SolveStatus};
use crate::synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub edge: usize,
    pub dims: Vec<usize>,
    /// Grid points, `n`.
    pub unknowns: usize,
    /// `beta` and `z`, `2n`.
    pub ipm_variables: usize,
    pub num_missing: usize,
    pub status: SolveStatus,
    pub ipm_iterations: usize,
    pub total_krylov_iterations: usize,
    pub max_krylov_iterations: usize,
    pub final_objective: f64,
    pub wall_time_s: f64,
}

/// Generates and solves one cube per edge length. Timing covers the solve
/// only and is the fastest of `repeats` identical solves.
pub fn run_bench(
    edges: &[usize],
    seed: u64,
    repeats: usize,
    config: &IpmConfig,
) -> Result<Vec<BenchRow>> {
    edges
        .iter()
        .map(|&edge| {
            let data = generate_synthetic(&SyntheticSpec::cube(edge, seed))?;
            let num_missing = data.mask.missing().len();
            let problem = LassoProblem::from_full_signal(&data.noisy.values, data.mask)?;
            let mut wall_time_s = f64::INFINITY;
            let mut out = None;
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                let run = solve(&problem, config)?;
                wall_time_s = wall_time_s.min(start.elapsed().as_secs_f64());
                out = Some(run);
            }
            let out = out.expect("at least one repeat");
            let n = problem.n();
            Ok(BenchRow {
                edge,
                dims: vec![edge; 3],
                unknowns: n,
                ipm_variables: 2 * n,
                num_missing,
                status: out.report.status,
                ipm_iterations: out.report.iterations,
                total_krylov_iterations: out.report.total_krylov_iterations,
                max_krylov_iterations: out
                    .report
                    .records
                    .iter()
                    .map(|r| r.krylov_iterations)
                    .max()
                    .unwrap_or(0),
                final_objective: out.report.final_objective,
                wall_time_s,
            })
        })
        .collect()
}

/// Wall-time ratios between consecutive rows.
pub fn time_ratios(rows: &[BenchRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| w[1].wall_time_s / w[0].wall_time_s)
        .collect()
}
