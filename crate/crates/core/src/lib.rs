//! Matrix-free recovery of sparse Fourier spectra from noisy, incomplete real
//! signals.
//!
//! The LASSO problem `min 1/2 |b - M_perp beta|^2 + lambda |beta|_1` is solved
//! by a primal-dual interior-point method. Each Newton system is condensed to
//! a `2n x 2n` SPD system and solved with preconditioned conjugate gradients.
//! All operators act through FFTs; no matrix of size `n x n` is ever formed
//! outside the dense diagnostics.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Fused kernels read several arrays at one index.
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod condensed_kkt;
pub mod diagnostics;
pub mod error;
pub mod fourier_map;
pub mod io;
pub mod ipm;
pub mod masked_operator;
pub mod pcg;
pub mod report;
pub mod synthetic;
pub mod vecops;

pub use condensed_kkt::{BarrierDiagonals, CondensedSolution, KktRhs};
pub use error::{Error, Result};
pub use fourier_map::{FourierMap, GridShape, HermitianSpectrum, RealSignal, RealSpectrum};
pub use ipm::{IpmConfig, IpmState, LassoProblem, SolveOutcome, SolveReport, SolveStatus};
pub use masked_operator::{MaskSet, MaskedOperator, ObservedSignal};
pub use pcg::{pcg_solve, PcgConfig, PcgResult};
pub use synthetic::SyntheticSpec;

/// Environment variable capping the worker threads used by the FFT kernels.
pub const THREADS_ENV: &str = "FOURIER_LASSO_THREADS";

/// Configures the global rayon pool from [`THREADS_ENV`] if it is set.
///
/// Returns the thread count in effect. Calling this after the pool has been
/// initialized leaves the existing pool untouched.
pub fn init_threads_from_env() -> Result<usize> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
            Error::InvalidConfig(format!("{THREADS_ENV}={raw:?} is not a positive integer"))
        })?;
        // A second initialization attempt is not an error for callers.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(rayon::current_num_threads())
}

#[cfg(test)]
pub(crate) mod test_util {
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Uniform entries in `[-1, 1)`.
    pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Uniform entries in `[0.05, 2.05)`.
    pub fn random_positive(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0.05..2.05)).collect()
    }

    /// Dense matrix of a linear operator, one unit vector at a time.
    pub fn dense_from_op(n: usize, mut op: impl FnMut(&[f64], &mut [f64])) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            op(&e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}
