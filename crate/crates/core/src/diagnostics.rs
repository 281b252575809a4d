//! Dense oracles and spectrum probes for small instances.
//!
//! Everything here materializes matrices and is meant for verification, not
//! for production solves.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::condensed_kkt::BarrierDiagonals;
use crate::error::{Error, Result};
use crate::fourier_map::FourierMap;
use crate::ipm::{IpmState, LassoProblem};
use crate::masked_operator::MaskedOperator;
use crate::vecops::{norm_inf, soft_threshold};

/// Largest dimension any dense helper will assemble.
pub const DENSE_LIMIT: usize = 4096;

/// Default half-width of the unit eigenvalue cluster.
pub const CLUSTER_TOL: f64 = 0.05;

/// Floor on `s_i + nu_i` below which strict complementarity is considered lost.
pub const STRICT_COMPLEMENTARITY_FLOOR: f64 = 1e-4;

/// Iteration cap of [`lasso_oracle`].
pub const ORACLE_MAX_ITERS: usize = 1_000_000;

fn guard(dim: usize) -> Result<()> {
    if dim > DENSE_LIMIT {
        Err(Error::DimensionGuard {
            dim,
            limit: DENSE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Column `j` is `op(e_j)`.
pub fn assemble_dense(dim: usize, mut op: impl FnMut(&[f64], &mut [f64])) -> Result<DMatrix<f64>> {
    assemble_rect(dim, dim, &mut op)
}

fn assemble_rect(
    rows: usize,
    cols: usize,
    op: &mut impl FnMut(&[f64], &mut [f64]),
) -> Result<DMatrix<f64>> {
    guard(rows.max(cols))?;
    let mut m = DMatrix::zeros(rows, cols);
    let mut e = vec![0.0; cols];
    let mut col = vec![0.0; rows];
    for j in 0..cols {
        e[j] = 1.0;
        op(&e, &mut col);
        m.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    Ok(m)
}

pub fn dense_a(map: &FourierMap) -> Result<DMatrix<f64>> {
    assemble_dense(map.len(), |x, y| map.apply(x, y))
}

pub fn dense_a_transpose(map: &FourierMap) -> Result<DMatrix<f64>> {
    assemble_dense(map.len(), |x, y| map.apply_transpose(x, y))
}

/// `(n - |M|) x n` matrix of observed rows.
pub fn dense_mperp(op: &MaskedOperator) -> Result<DMatrix<f64>> {
    assemble_rect(op.num_observed(), op.n(), &mut |x, y| op.apply(x, y))
}

pub fn dense_mperp_transpose(op: &MaskedOperator) -> Result<DMatrix<f64>> {
    assemble_rect(op.n(), op.num_observed(), &mut |x, y| {
        op.apply_transpose(x, y)
    })
}

/// `M_perp^T M_perp`.
pub fn dense_normal(op: &MaskedOperator) -> Result<DMatrix<f64>> {
    assemble_dense(op.n(), |x, y| op.apply_normal(x, y))
}

fn block_diagonal_pair(
    diag: &BarrierDiagonals,
    top_left: impl Fn(usize) -> f64,
    off: impl Fn(usize) -> f64,
    bottom_right: impl Fn(usize) -> f64,
) -> Result<DMatrix<f64>> {
    let n = diag.len();
    guard(2 * n)?;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = top_left(i);
        m[(i, n + i)] = off(i);
        m[(n + i, i)] = off(i);
        m[(n + i, n + i)] = bottom_right(i);
    }
    Ok(m)
}

/// `K = [[G + L1, L2], [L2, L1]]`.
pub fn dense_k(op: &MaskedOperator, diag: &BarrierDiagonals) -> Result<DMatrix<f64>> {
    let n = op.n();
    let mut k = block_diagonal_pair(
        diag,
        |i| diag.lambda1[i],
        |i| diag.lambda2[i],
        |i| diag.lambda1[i],
    )?;
    let g = dense_normal(op)?;
    let mut tl = k.view_mut((0, 0), (n, n));
    tl += g;
    Ok(k)
}

/// `P = [[I + L1, L2], [L2, L1]]`.
pub fn dense_p(diag: &BarrierDiagonals) -> DMatrix<f64> {
    block_diagonal_pair(
        diag,
        |i| 1.0 + diag.lambda1[i],
        |i| diag.lambda2[i],
        |i| diag.lambda1[i],
    )
    .expect("diagonal preconditioner within the dense limit")
}

/// Closed-form `P^{-1}`.
pub fn dense_p_inverse(diag: &BarrierDiagonals) -> DMatrix<f64> {
    block_diagonal_pair(
        diag,
        |i| diag.lambda1[i] / diag.dvec[i],
        |i| -diag.lambda2[i] / diag.dvec[i],
        |i| 1.0 / diag.bvec[i],
    )
    .expect("diagonal preconditioner within the dense limit")
}

/// The `6n x 6n` augmented Newton matrix in the unknowns
/// `(dbeta, dz, -ds1, -ds2, dy1, dy2)`.
pub fn dense_augmented(op: &MaskedOperator, diag: &BarrierDiagonals) -> DMatrix<f64> {
    let n = op.n();
    let g = dense_normal(op).expect("augmented system within the dense limit");
    let mut m = DMatrix::zeros(6 * n, 6 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&g);
    let (b, z, s1, s2, y1, y2) = (0, n, 2 * n, 3 * n, 4 * n, 5 * n);
    for i in 0..n {
        m[(b + i, y1 + i)] = -1.0;
        m[(b + i, y2 + i)] = 1.0;
        m[(z + i, y1 + i)] = -1.0;
        m[(z + i, y2 + i)] = -1.0;
        m[(s1 + i, s1 + i)] = diag.sigma1[i];
        m[(s1 + i, y1 + i)] = -1.0;
        m[(s2 + i, s2 + i)] = diag.sigma2[i];
        m[(s2 + i, y2 + i)] = -1.0;
        m[(y1 + i, b + i)] = -1.0;
        m[(y1 + i, z + i)] = -1.0;
        m[(y1 + i, s1 + i)] = -1.0;
        m[(y2 + i, b + i)] = 1.0;
        m[(y2 + i, z + i)] = -1.0;
        m[(y2 + i, s2 + i)] = -1.0;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetClassification {
    pub i_plus: Vec<usize>,
    pub i_minus: Vec<usize>,
    pub i_zero: Vec<usize>,
    pub threshold: f64,
}

impl ActiveSetClassification {
    /// `I+ ∪ I-` in increasing order.
    pub fn active(&self) -> Vec<usize> {
        let mut a: Vec<usize> = self.i_plus.iter().chain(&self.i_minus).copied().collect();
        a.sort_unstable();
        a
    }

    pub fn num_active(&self) -> usize {
        self.i_plus.len() + self.i_minus.len()
    }
}

/// Splits indices by the sign of `beta`. `None` uses `1e-6 |beta|_inf`.
pub fn classify_active(beta: &[f64], threshold: Option<f64>) -> ActiveSetClassification {
    let threshold = threshold.unwrap_or(1e-6 * norm_inf(beta));
    let mut c = ActiveSetClassification {
        i_plus: Vec::new(),
        i_minus: Vec::new(),
        i_zero: Vec::new(),
        threshold,
    };
    for (i, &b) in beta.iter().enumerate() {
        if b > threshold {
            c.i_plus.push(i);
        } else if b < -threshold {
            c.i_minus.push(i);
        } else {
            c.i_zero.push(i);
        }
    }
    c
}

/// Principal submatrix of `M_perp^T M_perp` on `active`.
pub fn q_star(op: &MaskedOperator, active: &[usize]) -> Result<DMatrix<f64>> {
    let g = dense_normal(op)?;
    Ok(DMatrix::from_fn(active.len(), active.len(), |r, c| {
        g[(active[r], active[c])]
    }))
}

/// Symmetric matrix with the spectrum of `P^{-1} K`.
///
/// With `P = L L^T` (per-index 2x2 Cholesky factors) the congruent form is
/// `L^{-1} K L^{-T} = I + U (G - I) U^T`, where `U` holds the first column of
/// each inverse factor. This stays accurate when the barrier diagonals span
/// many orders of magnitude.
pub fn preconditioned_congruence(
    op: &MaskedOperator,
    diag: &BarrierDiagonals,
) -> Result<DMatrix<f64>> {
    let n = op.n();
    guard(2 * n)?;
    let mut g = dense_normal(op)?;
    for i in 0..n {
        g[(i, i)] -= 1.0;
    }
    let mut u = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        let l11 = (1.0 + diag.lambda1[i]).sqrt();
        let l21 = diag.lambda2[i] / l11;
        let l22 = diag.bvec[i].sqrt();
        u[(i, i)] = 1.0 / l11;
        u[(n + i, i)] = -l21 / (l11 * l22);
    }
    let mut w = &u * g * u.transpose();
    for i in 0..2 * n {
        w[(i, i)] += 1.0;
    }
    // Symmetrize away rounding.
    let wt = w.transpose();
    Ok((w + wt) * 0.5)
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn ratio(ev: &[f64]) -> f64 {
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// `kappa(P^{-1} K)` from the congruent symmetric form.
pub fn kappa_preconditioned(op: &MaskedOperator, diag: &BarrierDiagonals) -> Result<f64> {
    Ok(ratio(&sorted_eigenvalues(preconditioned_congruence(
        op, diag,
    )?)))
}

/// `kappa(K)` from a dense symmetric eigensolve. Once the diagonals span
/// more than `1 / eps` the smallest eigenvalue is lost to rounding and the
/// result saturates near `1e16` or becomes infinite.
pub fn kappa_unpreconditioned(op: &MaskedOperator, diag: &BarrierDiagonals) -> Result<f64> {
    Ok(ratio(&sorted_eigenvalues(dense_k(op, diag)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Eigenvalues of `P^{-1} K`, ascending.
    pub eigenvalues: Vec<f64>,
    pub cluster_tol: f64,
    pub unit_cluster: usize,
    /// `2n - l`.
    pub predicted_cluster: usize,
    pub num_active: usize,
    pub kappa_observed: f64,
    /// `max(1, lambda_max(Q*)) / min(1, lambda_min(Q*))`.
    pub kappa_predicted: f64,
    pub q_star_eigenvalues: Vec<f64>,
    /// Smallest `s_i + nu_i` over both bounds.
    pub min_complementarity_sum: f64,
    pub strictly_complementary: bool,
}

impl SpectrumReport {
    pub fn kappa_relative_error(&self) -> f64 {
        (self.kappa_observed - self.kappa_predicted).abs() / self.kappa_predicted
    }
}

/// Observed spectrum of `P^{-1} K` at `state` next to the limits predicted
/// from the active set of `state.beta`.
pub fn spectrum_probe(
    state: &IpmState,
    op: &MaskedOperator,
    cluster_tol: f64,
    threshold: Option<f64>,
) -> Result<SpectrumReport> {
    let n = op.n();
    guard(2 * n)?;
    let diag = state.diagonals()?;
    let eigenvalues = sorted_eigenvalues(preconditioned_congruence(op, &diag)?);
    let unit_cluster = eigenvalues
        .iter()
        .filter(|&&l| (l - 1.0).abs() <= cluster_tol)
        .count();
    let classes = classify_active(&state.beta, threshold);
    let active = classes.active();
    let q_star_eigenvalues = if active.is_empty() {
        Vec::new()
    } else {
        sorted_eigenvalues(q_star(op, &active)?)
    };
    let kappa_predicted = match (q_star_eigenvalues.first(), q_star_eigenvalues.last()) {
        (Some(&lo), Some(&hi)) => hi.max(1.0) / lo.min(1.0),
        _ => 1.0,
    };
    let min_complementarity_sum = state
        .s1
        .iter()
        .zip(&state.nu1)
        .chain(state.s2.iter().zip(&state.nu2))
        .map(|(s, v)| s + v)
        .fold(f64::INFINITY, f64::min);
    Ok(SpectrumReport {
        kappa_observed: ratio(&eigenvalues),
        eigenvalues,
        cluster_tol,
        unit_cluster,
        predicted_cluster: 2 * n - active.len(),
        num_active: active.len(),
        kappa_predicted,
        q_star_eigenvalues,
        min_complementarity_sum,
        strictly_complementary: min_complementarity_sum >= STRICT_COMPLEMENTARITY_FLOOR,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaPoint {
    pub duality_measure: f64,
    pub kappa_preconditioned: f64,
    pub kappa_unpreconditioned: f64,
}

/// Condition numbers of `P^{-1} K` and `K` along a recorded trajectory.
pub fn kappa_trajectory(states: &[IpmState], op: &MaskedOperator) -> Result<Vec<KappaPoint>> {
    states
        .iter()
        .map(|s| {
            let diag = s.diagonals()?;
            Ok(KappaPoint {
                duality_measure: s.duality_measure(),
                kappa_preconditioned: kappa_preconditioned(op, &diag)?,
                kappa_unpreconditioned: kappa_unpreconditioned(op, &diag)?,
            })
        })
        .collect()
}

/// Scaling of the barrier diagonals over the tail of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaAsymptotics {
    /// Number of trailing iterates inspected.
    pub window: usize,
    pub band: (f64, f64),
    /// Extremes over indices and iterates of `mu_k L1_ii(k) / (mu_K L1_ii(K))`.
    pub lambda1_ratio_range: (f64, f64),
    pub lambda1_within_band: bool,
    /// Whether every index follows the scaling of its class:
    /// `Sigma1 ~ mu, Sigma2 ~ 1/mu` on `I+`, mirrored on `I-`, and both
    /// `~ 1/mu` on `I0`.
    pub class_scaling_consistent: bool,
    /// Extremes of `Sigma1_ii Sigma2_ii` on active indices at the last iterate.
    pub active_product_range: Option<(f64, f64)>,
}

/// Checks `L1 = Theta(1 / mu)` and the per-class scaling of `Sigma1`, `Sigma2`
/// over the last `window` states. The duality measure of each state stands
/// in for `mu`.
pub fn sigma_asymptotics_check(
    states: &[IpmState],
    classes: &ActiveSetClassification,
    window: usize,
    band: (f64, f64),
) -> Result<SigmaAsymptotics> {
    let tail = &states[states.len().saturating_sub(window)..];
    let last = tail
        .last()
        .ok_or_else(|| Error::InvalidConfig("empty trajectory".into()))?;
    let diags = tail
        .iter()
        .map(|s| s.diagonals())
        .collect::<Result<Vec<_>>>()?;
    let mus: Vec<f64> = tail.iter().map(|s| s.duality_measure()).collect();
    let (dl, ml) = (
        diags.last().expect("nonempty"),
        *mus.last().expect("nonempty"),
    );
    let n = last.len();

    // Ratio of `mu^p x` at iterate k to its value at the last iterate.
    let scaled_ratio = |k: usize, x: &dyn Fn(&BarrierDiagonals) -> f64, p: i32| {
        (mus[k].powi(p) * x(&diags[k])) / (ml.powi(p) * x(dl))
    };
    let in_band = |r: f64| r >= band.0 && r <= band.1;

    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut class_ok = true;
    for i in 0..n {
        let l1 = |d: &BarrierDiagonals| d.lambda1[i];
        let s1 = |d: &BarrierDiagonals| d.sigma1[i];
        let s2 = |d: &BarrierDiagonals| d.sigma2[i];
        // Powers of mu that make Sigma1, Sigma2 Theta(1) for this class.
        let (p1, p2) = if classes.i_plus.binary_search(&i).is_ok() {
            (-1, 1)
        } else if classes.i_minus.binary_search(&i).is_ok() {
            (1, -1)
        } else {
            (1, 1)
        };
        for k in 0..tail.len() {
            let r = scaled_ratio(k, &l1, 1);
            lo = lo.min(r);
            hi = hi.max(r);
            class_ok &= in_band(scaled_ratio(k, &s1, p1)) && in_band(scaled_ratio(k, &s2, p2));
        }
    }
    let active = classes.active();
    let active_product_range = (!active.is_empty()).then(|| {
        active.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &i| {
            let p = dl.sigma1[i] * dl.sigma2[i];
            (a.min(p), b.max(p))
        })
    });
    Ok(SigmaAsymptotics {
        window: tail.len(),
        band,
        lambda1_ratio_range: (lo, hi),
        lambda1_within_band: in_band(lo) && in_band(hi),
        class_scaling_consistent: class_ok,
        active_product_range,
    })
}

/// Reference LASSO solution by iterative soft-thresholding with unit step.
///
/// Stops when the proximal-gradient step `|beta+ - beta|_inf <= tol`.
pub fn lasso_oracle(problem: &LassoProblem, lambda: f64, tol: f64) -> Result<Vec<f64>> {
    let n = problem.n();
    guard(n)?;
    let xi = problem.xi();
    let mut beta = vec![0.0; n];
    let mut g = vec![0.0; n];
    for _ in 0..ORACLE_MAX_ITERS {
        problem.op().apply_normal(&beta, &mut g);
        let grad_step: Vec<f64> = (0..n).map(|i| beta[i] + xi[i] - g[i]).collect();
        let next = soft_threshold(&grad_step, lambda);
        let step = next
            .iter()
            .zip(&beta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next;
        if step <= tol {
            return Ok(beta);
        }
    }
    Err(Error::IterationCap(ORACLE_MAX_ITERS))
}
