//! Fixtures shared by the benchmark targets.

use fourier_lasso::condensed_kkt::{compute_rhs, BarrierDiagonals};
use fourier_lasso::ipm::{solve, IpmConfig, IpmState, LassoProblem};
use fourier_lasso::synthetic::generate_synthetic;
use fourier_lasso::SyntheticSpec;

/// Synthetic cube with the default missing fraction.
pub fn cube_problem(edge: usize, seed: u64) -> LassoProblem {
    let data = generate_synthetic(&SyntheticSpec::cube(edge, seed)).expect("valid cube");
    LassoProblem::from_full_signal(&data.noisy.values, data.mask).expect("consistent mask")
}

/// An interior iterate after `iterations` IPM steps, with its barrier
/// diagonals and condensed right-hand side.
pub struct Snapshot {
    pub lambda: f64,
    pub state: IpmState,
    pub diag: BarrierDiagonals,
    pub rhs: Vec<f64>,
}

pub fn snapshot(problem: &LassoProblem, iterations: usize) -> Snapshot {
    let config = IpmConfig {
        max_iters: iterations,
        ..IpmConfig::default()
    };
    let out = solve(problem, &config).expect("solver runs");
    let lambda = out.report.lambda;
    let state = out.state;
    let diag = state.diagonals().expect("interior iterate");
    let rhs = compute_rhs(&state, problem.op(), lambda, problem.xi(), &diag)
        .barrier_shifted(&state, state.mu, &diag)
        .condensed();
    Snapshot {
        lambda,
        state,
        diag,
        rhs,
    }
}

/// Deterministic dense test vector.
pub fn ramp(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0)
        .collect()
}
