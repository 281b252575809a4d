//! Matrix-free preconditioned conjugate gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::dot;

/// Upper bound applied to the default iteration cap.
pub const DEFAULT_MAX_ITERS_CAP: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcgConfig {
    /// Absolute tolerance on the preconditioned residual norm `sqrt(r^T P^{-1} r)`.
    pub abs_tol: f64,
    /// Tolerance relative to the initial preconditioned residual norm.
    pub rel_tol: f64,
    /// `None` means `min(10 * dim, 5000)`.
    pub max_iters: Option<usize>,
    pub record_history: bool,
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 0.0,
            max_iters: None,
            record_history: false,
        }
    }
}

impl PcgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) {
            return Err(Error::InvalidConfig(
                "PCG tolerances must be nonnegative".into(),
            ));
        }
        if self.abs_tol == 0.0 && self.rel_tol == 0.0 {
            return Err(Error::InvalidConfig(
                "PCG needs a nonzero absolute or relative tolerance".into(),
            ));
        }
        if self.max_iters == Some(0) {
            return Err(Error::InvalidConfig(
                "PCG iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn iteration_cap(&self, dim: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| (10 * dim).clamp(1, DEFAULT_MAX_ITERS_CAP))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Preconditioned residual norms, starting with the initial one.
    pub residual_history: Option<Vec<f64>>,
    pub residual: f64,
    pub converged: bool,
}

/// Solves `K x = rhs` for symmetric positive definite `K`, preconditioned by
/// the SPD operator whose inverse is `apply_prec`. Starts from `x = 0`.
///
/// Stops once `sqrt(r^T P^{-1} r) <= abs_tol + rel_tol * initial`. Hitting the
/// iteration cap returns `converged = false`; a nonpositive curvature
/// `p^T K p` or a non-finite recurrence value is reported as
/// [`Error::NumericalBreakdown`].
pub fn pcg_solve<Op, Prec>(
    mut apply_op: Op,
    mut apply_prec: Prec,
    rhs: &[f64],
    config: &PcgConfig,
) -> Result<PcgResult>
where
    Op: FnMut(&[f64], &mut [f64]),
    Prec: FnMut(&[f64], &mut [f64]),
{
    config.validate()?;
    let dim = rhs.len();
    let cap = config.iteration_cap(dim);

    let mut x = vec![0.0; dim];
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; dim];
    apply_prec(&r, &mut z);
    let mut rz = dot(&r, &z);
    check_finite(rz, 0, "initial preconditioned residual")?;
    if rz < 0.0 {
        return Err(breakdown(
            0,
            format!("preconditioner is not positive (r^T z = {rz:e})"),
        ));
    }
    let initial = rz.sqrt();
    let target = config.abs_tol + config.rel_tol * initial;
    let mut history = config.record_history.then(|| vec![initial]);
    let mut p = z.clone();
    let mut kp = vec![0.0; dim];
    let mut residual = initial;
    let mut iterations = 0;

    while residual > target && iterations < cap {
        apply_op(&p, &mut kp);
        let curvature = dot(&p, &kp);
        check_finite(curvature, iterations, "curvature")?;
        if curvature <= 0.0 {
            return Err(breakdown(
                iterations,
                format!("nonpositive curvature p^T K p = {curvature:e}"),
            ));
        }
        let alpha = rz / curvature;
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        apply_prec(&r, &mut z);
        let rz_next = dot(&r, &z);
        check_finite(rz_next, iterations, "preconditioned residual")?;
        iterations += 1;
        residual = rz_next.max(0.0).sqrt();
        if let Some(h) = history.as_mut() {
            h.push(residual);
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }

    Ok(PcgResult {
        solution: x,
        iterations,
        residual_history: history,
        residual,
        converged: residual <= target,
    })
}

fn breakdown(iteration: usize, reason: String) -> Error {
    Error::NumericalBreakdown { iteration, reason }
}

fn check_finite(v: f64, iteration: usize, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(breakdown(iteration, format!("{what} is not finite")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_vec;
    use nalgebra::{DMatrix, DVector};

    fn identity(x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }

    fn random_spd(n: usize, seed: u64, shift: f64) -> DMatrix<f64> {
        let g = DMatrix::from_vec(n, n, random_vec(n * n, seed));
        g.transpose() * &g + DMatrix::identity(n, n) * shift
    }

    fn dense_op(m: &DMatrix<f64>) -> impl FnMut(&[f64], &mut [f64]) + '_ {
        move |x, y| {
            let v = m * DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        }
    }

    #[test]
    fn identity_system_converges_in_one_iteration() {
        let rhs = random_vec(12, 1);
        let res = pcg_solve(identity, identity, &rhs, &PcgConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.solution, rhs);
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let res = pcg_solve(identity, identity, &[0.0; 5], &PcgConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn matches_dense_cholesky_solve() {
        let n = 16;
        let k = random_spd(n, 7, 0.5);
        let rhs = random_vec(n, 8);
        let cfg = PcgConfig {
            abs_tol: 1e-13,
            ..PcgConfig::default()
        };
        let res = pcg_solve(dense_op(&k), identity, &rhs, &cfg).unwrap();
        assert!(res.converged);
        let exact = k
            .clone()
            .cholesky()
            .unwrap()
            .solve(&DVector::from_column_slice(&rhs));
        let err = (DVector::from_column_slice(&res.solution) - exact).amax();
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn energy_error_decreases_monotonically() {
        let n = 24;
        let k = random_spd(n, 11, 0.1);
        let rhs = random_vec(n, 12);
        let exact = k
            .clone()
            .cholesky()
            .unwrap()
            .solve(&DVector::from_column_slice(&rhs));
        let energy = |x: &DVector<f64>| {
            let e = x - &exact;
            (e.transpose() * &k * &e)[(0, 0)].sqrt()
        };
        let mut prev = f64::INFINITY;
        for cap in 1..=n {
            let cfg = PcgConfig {
                abs_tol: 1e-14,
                max_iters: Some(cap),
                ..PcgConfig::default()
            };
            let res = pcg_solve(dense_op(&k), identity, &rhs, &cfg).unwrap();
            let e = energy(&DVector::from_column_slice(&res.solution));
            assert!(e <= prev * (1.0 + 1e-10) + 1e-13, "cap {cap}: {e} > {prev}");
            prev = e;
            if res.converged {
                break;
            }
        }
    }

    #[test]
    fn well_conditioned_iteration_bound_and_rate() {
        // Spectrum in [1, kappa]: CG error contracts at least like
        // 2((sqrt(k)-1)/(sqrt(k)+1))^j in the energy norm.
        let n = 32;
        let kappa: f64 = 9.0;
        let diag: Vec<f64> = (0..n)
            .map(|i| 1.0 + (kappa - 1.0) * i as f64 / (n - 1) as f64)
            .collect();
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = diag[i] * x[i];
            }
        };
        let rhs = vec![1.0; n];
        let cfg = PcgConfig {
            abs_tol: 1e-10,
            record_history: true,
            ..PcgConfig::default()
        };
        let res = pcg_solve(op, identity, &rhs, &cfg).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= n + 2);
        let rho = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
        // Residual and energy norms differ by at most sqrt(kappa).
        let bound_iters =
            ((1e-10 / (2.0 * (n as f64).sqrt() * kappa)).ln() / rho.ln()).ceil() as usize;
        assert!(
            res.iterations <= bound_iters,
            "{} > {bound_iters}",
            res.iterations
        );
        assert_eq!(res.residual_history.unwrap().len(), res.iterations + 1);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let k = random_spd(20, 3, 1e-3);
        let cfg = PcgConfig {
            abs_tol: 1e-14,
            max_iters: Some(2),
            ..PcgConfig::default()
        };
        let res = pcg_solve(dense_op(&k), identity, &random_vec(20, 4), &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
    }

    #[test]
    fn indefinite_operator_is_a_breakdown() {
        let neg = |x: &[f64], y: &mut [f64]| {
            for (a, b) in y.iter_mut().zip(x) {
                *a = -b;
            }
        };
        let err = pcg_solve(neg, identity, &[1.0, 2.0], &PcgConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NumericalBreakdown { .. }));
        let nan = |_: &[f64], y: &mut [f64]| y.fill(f64::NAN);
        assert!(pcg_solve(nan, identity, &[1.0], &PcgConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = PcgConfig {
            abs_tol: 0.0,
            rel_tol: 0.0,
            ..PcgConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(PcgConfig::default().iteration_cap(100), 1000);
        assert_eq!(PcgConfig::default().iteration_cap(10_000), 5000);
    }
}
