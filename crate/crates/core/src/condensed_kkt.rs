//! Condensed Newton system of the elastic LASSO reformulation.
//!
//! The augmented system in `(dbeta, dz, ds1, ds2, dy1, dy2)` reads
//!
//! ```text
//! [ G   0   0   0  -I   I ] [ dbeta ]   [ r1 ]
//! [ 0   0   0   0  -I  -I ] [ dz    ]   [ r2 ]
//! [ 0   0  S1   0  -I   0 ] [ -ds1  ] = [ r3 ]
//! [ 0   0   0  S2   0  -I ] [ -ds2  ]   [ r4 ]
//! [-I  -I  -I   0   0   0 ] [ dy1   ]   [ r5 ]
//! [ I  -I   0  -I   0   0 ] [ dy2   ]   [ r6 ]
//! ```
//!
//! with `G = M_perp^T M_perp`, `S1 = Sigma1`, `S2 = Sigma2`. The slack slots
//! carry the negated slack steps. Eliminating slacks and equality multipliers
//! leaves the SPD system
//!
//! ```text
//! K = [ G + L1   L2 ]     P = [ I + L1   L2 ]
//!     [ L2       L1 ]         [ L2       L1 ]
//! ```
//!
//! where `L1 = Sigma1 + Sigma2`, `L2 = Sigma1 - Sigma2`. `P` replaces `G` by
//! the identity and is inverted in closed form through the diagonals
//! `D = L1 (I + L1) - L2^2` and `B = D / (I + L1)`.
//!
//! Vectors of the condensed system are stored as `[dbeta; dz]`.

use crate::error::{check_len, Error, Result};
use crate::ipm::IpmState;
use crate::masked_operator::MaskedOperator;

/// Barrier scaling diagonals and the derived `L1`, `L2`, `D`, `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierDiagonals {
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub dvec: Vec<f64>,
    pub bvec: Vec<f64>,
}

impl BarrierDiagonals {
    /// `Sigma1 = S1^{-1} V1`, `Sigma2 = S2^{-1} V2`.
    pub fn new(s1: &[f64], s2: &[f64], nu1: &[f64], nu2: &[f64]) -> Result<Self> {
        let n = s1.len();
        check_len("s2", n, s2.len())?;
        check_len("nu1", n, nu1.len())?;
        check_len("nu2", n, nu2.len())?;
        let mut out = Self::with_len(n);
        let mut interior = true;
        for i in 0..n {
            interior &= s1[i] > 0.0 && s2[i] > 0.0 && nu1[i] > 0.0 && nu2[i] > 0.0;
            out.set(i, nu1[i] / s1[i], nu2[i] / s2[i]);
        }
        if !interior {
            for (name, v) in [("s1", s1), ("s2", s2), ("nu1", nu1), ("nu2", nu2)] {
                if let Some((i, x)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
                    return Err(Error::InteriorViolation(format!("{name}[{i}] = {x:e}")));
                }
            }
        }
        Ok(out)
    }

    fn with_len(n: usize) -> Self {
        Self {
            sigma1: vec![0.0; n],
            sigma2: vec![0.0; n],
            lambda1: vec![0.0; n],
            lambda2: vec![0.0; n],
            dvec: vec![0.0; n],
            bvec: vec![0.0; n],
        }
    }

    #[inline]
    fn set(&mut self, i: usize, a: f64, b: f64) {
        let l1 = a + b;
        let d = l1 + 4.0 * a * b;
        self.sigma1[i] = a;
        self.sigma2[i] = b;
        self.lambda1[i] = l1;
        self.lambda2[i] = a - b;
        self.dvec[i] = d;
        self.bvec[i] = d / (1.0 + l1);
    }

    pub fn from_sigmas(sigma1: Vec<f64>, sigma2: Vec<f64>) -> Self {
        let mut out = Self::with_len(sigma1.len());
        for (i, (&a, &b)) in sigma1.iter().zip(&sigma2).enumerate() {
            out.set(i, a, b);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.sigma1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma1.is_empty()
    }
}

/// Residual blocks of the augmented system and the condensed right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct KktRhs {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub r4: Vec<f64>,
    pub r5: Vec<f64>,
    pub r6: Vec<f64>,
    pub r_beta: Vec<f64>,
    pub r_c: Vec<f64>,
}

impl KktRhs {
    /// Builds the condensed right-hand side from `r1..r6`:
    /// `r_beta = r1 - r3 + r4 - S1 r5 + S2 r6`, `r_c = r2 - r3 - r4 - S1 r5 - S2 r6`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_blocks(
        r1: Vec<f64>,
        r2: Vec<f64>,
        r3: Vec<f64>,
        r4: Vec<f64>,
        r5: Vec<f64>,
        r6: Vec<f64>,
        diag: &BarrierDiagonals,
    ) -> Self {
        let n = r1.len();
        let mut r_beta = vec![0.0; n];
        let mut r_c = vec![0.0; n];
        for i in 0..n {
            let (s1r5, s2r6) = (diag.sigma1[i] * r5[i], diag.sigma2[i] * r6[i]);
            r_beta[i] = r1[i] - r3[i] + r4[i] - s1r5 + s2r6;
            r_c[i] = r2[i] - r3[i] - r4[i] - s1r5 - s2r6;
        }
        Self {
            r1,
            r2,
            r3,
            r4,
            r5,
            r6,
            r_beta,
            r_c,
        }
    }

    /// Replaces the multiplier residuals by their barrier-shifted versions
    /// `r3 = y1 - mu / s1`, `r4 = y2 - mu / s2` (the complementarity rows
    /// `S V e = mu e` eliminated through `dnu`) and recomputes the condensed
    /// right-hand side.
    pub fn barrier_shifted(mut self, state: &IpmState, mu: f64, diag: &BarrierDiagonals) -> Self {
        for i in 0..self.r1.len() {
            let r3 = state.y1[i] - mu / state.s1[i];
            let r4 = state.y2[i] - mu / state.s2[i];
            let (s1r5, s2r6) = (diag.sigma1[i] * self.r5[i], diag.sigma2[i] * self.r6[i]);
            self.r_beta[i] = self.r1[i] - r3 + r4 - s1r5 + s2r6;
            self.r_c[i] = self.r2[i] - r3 - r4 - s1r5 - s2r6;
            self.r3[i] = r3;
            self.r4[i] = r4;
        }
        self
    }

    /// `[r_beta; r_c]`.
    pub fn condensed(&self) -> Vec<f64> {
        let mut v = self.r_beta.clone();
        v.extend_from_slice(&self.r_c);
        v
    }

    /// `[r1; ...; r6]`.
    pub fn augmented(&self) -> Vec<f64> {
        [&self.r1, &self.r2, &self.r3, &self.r4, &self.r5, &self.r6]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    /// Largest absolute entry over `r1..r6`.
    pub fn max_residual(&self) -> f64 {
        [&self.r1, &self.r2, &self.r3, &self.r4, &self.r5, &self.r6]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Residuals of the KKT conditions at `state`, negated where needed so that
/// the augmented system above yields the Newton direction:
///
/// ```text
/// r1 = M_perp^T (b - M_perp beta) + y1 - y2
/// r2 = y1 + y2 - lambda e
/// r3 = y1 - nu1            r4 = y2 - nu2
/// r5 = z + beta - s1       r6 = z - beta - s2
/// ```
///
/// `xi` is `M_perp^T b`. All blocks vanish exactly at a KKT point.
pub fn compute_rhs(
    state: &IpmState,
    op: &MaskedOperator,
    lambda: f64,
    xi: &[f64],
    diag: &BarrierDiagonals,
) -> KktRhs {
    let n = state.beta.len();
    let mut rhs = KktRhs {
        r1: vec![0.0; n],
        r2: vec![0.0; n],
        r3: vec![0.0; n],
        r4: vec![0.0; n],
        r5: vec![0.0; n],
        r6: vec![0.0; n],
        r_beta: vec![0.0; n],
        r_c: vec![0.0; n],
    };
    op.apply_normal(&state.beta, &mut rhs.r1);
    // One fused pass; the result matches `KktRhs::from_blocks` exactly.
    for i in 0..n {
        let (y1, y2) = (state.y1[i], state.y2[i]);
        let r1 = xi[i] - rhs.r1[i] + (y1 - y2);
        let r2 = y1 + y2 - lambda;
        let r3 = y1 - state.nu1[i];
        let r4 = y2 - state.nu2[i];
        let r5 = state.z[i] + state.beta[i] - state.s1[i];
        let r6 = state.z[i] - state.beta[i] - state.s2[i];
        let (s1r5, s2r6) = (diag.sigma1[i] * r5, diag.sigma2[i] * r6);
        rhs.r_beta[i] = r1 - r3 + r4 - s1r5 + s2r6;
        rhs.r_c[i] = r2 - r3 - r4 - s1r5 - s2r6;
        rhs.r1[i] = r1;
        rhs.r2[i] = r2;
        rhs.r3[i] = r3;
        rhs.r4[i] = r4;
        rhs.r5[i] = r5;
        rhs.r6[i] = r6;
    }
    rhs
}

// The diagonal blocks are evaluated in the rotated coordinates
// `u = dbeta + dz`, `v = dz - dbeta`, where they decouple into `Sigma1 u` and
// `Sigma2 v`. Near convergence the Sigmas span many orders of magnitude and
// the direct form `L1 dbeta + L2 dz` loses everything to cancellation.

/// `out = K d` with `d = [dbeta; dz]`.
pub fn apply_k(d: &[f64], out: &mut [f64], diag: &BarrierDiagonals, op: &MaskedOperator) {
    let n = diag.len();
    let (db, dz) = d.split_at(n);
    let (ob, oz) = out.split_at_mut(n);
    op.apply_normal(db, ob);
    for i in 0..n {
        let su = diag.sigma1[i] * (db[i] + dz[i]);
        let sv = diag.sigma2[i] * (dz[i] - db[i]);
        ob[i] += su - sv;
        oz[i] = su + sv;
    }
}

/// `out = P d`.
pub fn apply_p(d: &[f64], out: &mut [f64], diag: &BarrierDiagonals) {
    let n = diag.len();
    let (db, dz) = d.split_at(n);
    let (ob, oz) = out.split_at_mut(n);
    for i in 0..n {
        let su = diag.sigma1[i] * (db[i] + dz[i]);
        let sv = diag.sigma2[i] * (dz[i] - db[i]);
        ob[i] = db[i] + su - sv;
        oz[i] = su + sv;
    }
}

/// `out = P^{-1} r` with the blocks `[[L1 D^-1, -L2 D^-1], [-D^-1 L2, B^-1]]`,
/// expanded as `D^-1 (S1 (rb - rc) + S2 (rb + rc))` and
/// `D^-1 (rc - S1 (rb - rc) + S2 (rb + rc))`.
pub fn apply_p_inverse(r: &[f64], out: &mut [f64], diag: &BarrierDiagonals) {
    let n = diag.len();
    let (rb, rc) = r.split_at(n);
    let (ob, oz) = out.split_at_mut(n);
    for i in 0..n {
        let a = diag.sigma1[i] * (rb[i] - rc[i]);
        let b = diag.sigma2[i] * (rb[i] + rc[i]);
        ob[i] = (a + b) / diag.dvec[i];
        oz[i] = (rc[i] - a + b) / diag.dvec[i];
    }
}

/// `out = P^{-1} K d`.
pub fn apply_preconditioned_k(
    d: &[f64],
    out: &mut [f64],
    diag: &BarrierDiagonals,
    op: &MaskedOperator,
) {
    let mut kd = vec![0.0; d.len()];
    apply_k(d, &mut kd, diag, op);
    apply_p_inverse(&kd, out, diag);
}

/// Full Newton direction recovered from the condensed solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedSolution {
    pub d_beta: Vec<f64>,
    pub d_z: Vec<f64>,
    pub d_s1: Vec<f64>,
    pub d_s2: Vec<f64>,
    pub d_y1: Vec<f64>,
    pub d_y2: Vec<f64>,
}

impl CondensedSolution {
    /// Unknown vector of the augmented system, slack slots negated.
    pub fn augmented_slots(&self) -> Vec<f64> {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        [
            self.d_beta.clone(),
            self.d_z.clone(),
            neg(&self.d_s1),
            neg(&self.d_s2),
            self.d_y1.clone(),
            self.d_y2.clone(),
        ]
        .concat()
    }
}

/// Back-substitutes the eliminated blocks:
/// `dy1 = S1 (-dbeta - dz - r5) - r3`, `dy2 = S2 (dbeta - dz - r6) - r4`,
/// and the slack steps `ds1 = dbeta + dz + r5`, `ds2 = -dbeta + dz + r6`
/// (equivalently `-S1^{-1} (r3 + dy1)` and `-S2^{-1} (r4 + dy2)`).
pub fn recover_eliminated(
    d_beta: &[f64],
    d_z: &[f64],
    rhs: &KktRhs,
    diag: &BarrierDiagonals,
) -> CondensedSolution {
    let n = d_beta.len();
    let mut sol = CondensedSolution {
        d_beta: d_beta.to_vec(),
        d_z: d_z.to_vec(),
        d_s1: vec![0.0; n],
        d_s2: vec![0.0; n],
        d_y1: vec![0.0; n],
        d_y2: vec![0.0; n],
    };
    for i in 0..n {
        let (db, dz) = (d_beta[i], d_z[i]);
        sol.d_y1[i] = diag.sigma1[i] * (-db - dz - rhs.r5[i]) - rhs.r3[i];
        sol.d_y2[i] = diag.sigma2[i] * (db - dz - rhs.r6[i]) - rhs.r4[i];
        sol.d_s1[i] = db + dz + rhs.r5[i];
        sol.d_s2[i] = -db + dz + rhs.r6[i];
    }
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{dense_augmented, dense_k, dense_p, dense_p_inverse};
    use crate::fourier_map::GridShape;
    use crate::masked_operator::MaskSet;
    use crate::test_util::{dense_from_op, random_positive, random_vec};
    use crate::vecops::{dot, norm_inf};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn op(n: usize, missing: Vec<usize>) -> MaskedOperator {
        MaskedOperator::new(MaskSet::new(missing, GridShape::new(&[n]).unwrap()).unwrap())
    }

    fn random_diag(n: usize, seed: u64) -> BarrierDiagonals {
        BarrierDiagonals::new(
            &random_positive(n, seed),
            &random_positive(n, seed + 1),
            &random_positive(n, seed + 2),
            &random_positive(n, seed + 3),
        )
        .unwrap()
    }

    fn random_state(n: usize, seed: u64) -> IpmState {
        IpmState {
            beta: random_vec(n, seed),
            z: random_positive(n, seed + 10),
            s1: random_positive(n, seed + 11),
            s2: random_positive(n, seed + 12),
            y1: random_vec(n, seed + 13),
            y2: random_vec(n, seed + 14),
            nu1: random_positive(n, seed + 15),
            nu2: random_positive(n, seed + 16),
            mu: 0.1,
        }
    }

    #[test]
    fn diagonal_examples() {
        let d = BarrierDiagonals::new(&[1.0], &[1.0], &[1.0], &[1.0]).unwrap();
        assert_eq!(
            (
                d.sigma1[0],
                d.sigma2[0],
                d.lambda1[0],
                d.lambda2[0],
                d.dvec[0],
                d.bvec[0]
            ),
            (1.0, 1.0, 2.0, 0.0, 6.0, 2.0)
        );
        let d = BarrierDiagonals::new(&[2.0], &[1.0], &[1.0], &[3.0]).unwrap();
        assert_eq!((d.sigma1[0], d.sigma2[0]), (0.5, 3.0));
        assert_eq!((d.lambda1[0], d.lambda2[0]), (3.5, -2.5));
        assert!((d.dvec[0] - 9.5).abs() < 1e-15);
        assert!((d.lambda1[0] * (1.0 + d.lambda1[0]) - d.lambda2[0].powi(2) - 9.5).abs() < 1e-14);

        assert!(matches!(
            BarrierDiagonals::new(&[1.0, 0.0], &[1.0; 2], &[1.0; 2], &[1.0; 2]),
            Err(Error::InteriorViolation(_))
        ));
        assert!(BarrierDiagonals::new(&[1.0], &[1.0], &[-1.0], &[1.0]).is_err());
        assert!(BarrierDiagonals::new(&[1.0], &[1.0], &[f64::NAN], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn diagonal_identities(seed in any::<u64>(), scale in -8.0f64..8.0) {
            let n = 16;
            let f = 10f64.powf(scale);
            let s1: Vec<f64> = random_positive(n, seed).iter().map(|x| x * f).collect();
            let d = BarrierDiagonals::new(&s1, &random_positive(n, seed + 1),
                &random_positive(n, seed + 2), &random_positive(n, seed + 3)).unwrap();
            for i in 0..n {
                let alt = d.lambda1[i] * (1.0 + d.lambda1[i]) - d.lambda2[i].powi(2);
                prop_assert!((alt - d.dvec[i]).abs() <= 1e-12 * d.dvec[i].max(alt.abs()) * (1.0 + d.lambda1[i]));
                let ratio = d.lambda1[i] / d.dvec[i];
                prop_assert!(ratio > 0.0 && ratio < 1.0);
                prop_assert!(d.bvec[i] > 0.0);
            }
        }
    }

    #[test]
    fn rhs_at_initial_point() {
        let n = 8;
        let lambda = 0.6;
        let op = op(n, vec![]);
        let b = random_vec(n, 5);
        let mut xi = vec![0.0; n];
        op.apply_transpose(&b, &mut xi);
        let state = IpmState::initial(n, lambda, lambda / 2.0);
        let diag = BarrierDiagonals::new(&state.s1, &state.s2, &state.nu1, &state.nu2).unwrap();
        let rhs = compute_rhs(&state, &op, lambda, &xi, &diag);
        assert_eq!(rhs.r1, xi);
        for v in [&rhs.r2, &rhs.r3, &rhs.r4, &rhs.r5, &rhs.r6] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
        let shifted = rhs.clone().barrier_shifted(&state, state.mu, &diag);
        assert!(shifted.r3.iter().chain(&shifted.r4).all(|&x| x == 0.0));
    }

    #[test]
    fn rhs_vanishes_at_kkt_point() {
        // beta = (2, -1, 0, 0) with y chosen to satisfy stationarity for the
        // empty-mask problem whose data xi = beta + lambda sign(beta).
        let n = 4;
        let lambda = 0.5;
        let op = op(n, vec![]);
        let beta = vec![2.0, -1.0, 0.0, 0.0];
        let xi = vec![2.5, -1.5, 0.2, -0.1];
        let g: Vec<f64> = (0..n).map(|i| beta[i] - xi[i]).collect(); // = y1 - y2
        let y1: Vec<f64> = g.iter().map(|gi| (lambda + gi) / 2.0).collect();
        let y2: Vec<f64> = g.iter().map(|gi| (lambda - gi) / 2.0).collect();
        let z: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
        let state = IpmState {
            s1: (0..n).map(|i| z[i] + beta[i]).collect(),
            s2: (0..n).map(|i| z[i] - beta[i]).collect(),
            nu1: y1.clone(),
            nu2: y2.clone(),
            beta,
            z,
            y1,
            y2,
            mu: 0.0,
        };
        let diag = BarrierDiagonals::from_sigmas(vec![1.0; n], vec![1.0; n]);
        let rhs = compute_rhs(&state, &op, lambda, &xi, &diag);
        assert!(rhs.max_residual() < 1e-14, "{}", rhs.max_residual());
    }

    #[test]
    fn condensed_rhs_matches_dense_elimination() {
        let n = 8;
        let op = op(n, vec![2, 7]);
        let diag = random_diag(n, 21);
        let state = random_state(n, 40);
        let xi = random_vec(n, 41);
        let rhs = compute_rhs(&state, &op, 0.3, &xi, &diag).barrier_shifted(&state, 0.05, &diag);

        let aug = dense_augmented(&op, &diag);
        let sol = aug.lu().solve(&DVector::from_vec(rhs.augmented())).unwrap();
        let k = dense_k(&op, &diag).unwrap();
        let reduced = &k * sol.rows(0, 2 * n);
        let want = DVector::from_vec(rhs.condensed());
        assert!((reduced - want).amax() < 1e-10);

        // Substitution into the intermediate 4-block rows.
        let dense_sol = sol.as_slice();
        let rec = recover_eliminated(&dense_sol[..n], &dense_sol[n..2 * n], &rhs, &diag);
        for i in 0..n {
            let row3 = -dense_sol[i] - dense_sol[n + i] - rec.d_y1[i] / diag.sigma1[i];
            let row4 = dense_sol[i] - dense_sol[n + i] - rec.d_y2[i] / diag.sigma2[i];
            assert!((row3 - (rhs.r5[i] + rhs.r3[i] / diag.sigma1[i])).abs() < 1e-9);
            assert!((row4 - (rhs.r6[i] + rhs.r4[i] / diag.sigma2[i])).abs() < 1e-9);
        }
        let slots = DVector::from_vec(rec.augmented_slots());
        assert!((slots - sol).amax() < 1e-8);
    }

    #[test]
    fn recovered_direction_solves_augmented_system() {
        let n = 4;
        let op = op(n, vec![1]);
        let diag = random_diag(n, 3);
        let state = random_state(n, 4);
        let xi = random_vec(n, 5);
        let rhs = compute_rhs(&state, &op, 0.4, &xi, &diag);
        let k = dense_k(&op, &diag).unwrap();
        let x = k
            .cholesky()
            .unwrap()
            .solve(&DVector::from_vec(rhs.condensed()));
        let rec = recover_eliminated(&x.as_slice()[..n], &x.as_slice()[n..], &rhs, &diag);
        let aug = dense_augmented(&op, &diag);
        let res =
            &aug * DVector::from_vec(rec.augmented_slots()) - DVector::from_vec(rhs.augmented());
        assert!(res.amax() < 1e-10);
        let direct = aug.lu().solve(&DVector::from_vec(rhs.augmented())).unwrap();
        assert!((DVector::from_vec(rec.augmented_slots()) - direct).amax() < 1e-8);

        let zero = KktRhs::from_blocks(
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            &diag,
        );
        let rec = recover_eliminated(&[0.0; 4], &[0.0; 4], &zero, &diag);
        assert!(rec.augmented_slots().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k_examples() {
        let n = 8;
        let op = op(n, vec![]);
        let diag = BarrierDiagonals::from_sigmas(vec![1.0; n], vec![1.0; n]);
        let d = random_vec(2 * n, 9);
        let mut out = vec![0.0; 2 * n];
        apply_k(&d, &mut out, &diag, &op);
        for i in 0..n {
            assert!((out[i] - 3.0 * d[i]).abs() < 1e-14);
            assert!((out[n + i] - 2.0 * d[n + i]).abs() < 1e-14);
        }
    }

    #[test]
    fn operators_match_dense_assembly() {
        for (n, missing) in [
            (8usize, vec![0, 5]),
            (16, vec![3, 4, 11]),
            (32, vec![1, 2, 9, 20, 31]),
        ] {
            let op = op(n, missing);
            let diag = random_diag(n, n as u64);
            let k = dense_from_op(2 * n, |x, y| apply_k(x, y, &diag, &op));
            let p = dense_from_op(2 * n, |x, y| apply_p(x, y, &diag));
            let pinv = dense_from_op(2 * n, |x, y| apply_p_inverse(x, y, &diag));

            // Independent assembly straight from the block definitions.
            let g = dense_from_op(n, |x, y| op.apply_normal(x, y));
            let mut kk = DMatrix::zeros(2 * n, 2 * n);
            kk.view_mut((0, 0), (n, n)).copy_from(&g);
            for i in 0..n {
                kk[(i, i)] += diag.lambda1[i];
                kk[(i, n + i)] = diag.lambda2[i];
                kk[(n + i, i)] = diag.lambda2[i];
                kk[(n + i, n + i)] = diag.lambda1[i];
            }
            assert!((&k - &kk).amax() < 1e-10 * kk.amax());
            assert!((&k - dense_k(&op, &diag).unwrap()).amax() < 1e-10 * kk.amax());
            assert!((&p - dense_p(&diag)).amax() < 1e-12);
            let inv = p.clone().try_inverse().unwrap();
            assert!((&pinv - &inv).amax() < 1e-10);
            assert!((&pinv - dense_p_inverse(&diag)).amax() < 1e-14);
            let eye = &p * &pinv;
            assert!((eye - DMatrix::<f64>::identity(2 * n, 2 * n)).amax() < 1e-12);
            assert!((&k - k.transpose()).amax() < 1e-12 * kk.amax());
        }
    }

    #[test]
    fn scalar_preconditioner_inverse() {
        let diag = BarrierDiagonals::from_sigmas(vec![0.5], vec![3.0]);
        assert!((diag.bvec[0] - 9.5 / 4.5).abs() < 1e-15);
        let mut col0 = [0.0; 2];
        let mut col1 = [0.0; 2];
        apply_p_inverse(&[1.0, 0.0], &mut col0, &diag);
        apply_p_inverse(&[0.0, 1.0], &mut col1, &diag);
        let want = [[3.5 / 9.5, 2.5 / 9.5], [2.5 / 9.5, 4.5 / 9.5]];
        assert!((col0[0] - want[0][0]).abs() < 1e-15 && (col0[1] - want[1][0]).abs() < 1e-15);
        assert!((col1[0] - want[0][1]).abs() < 1e-15 && (col1[1] - want[1][1]).abs() < 1e-15);

        let unit = BarrierDiagonals::from_sigmas(vec![1.0], vec![1.0]);
        apply_p_inverse(&[1.0, 1.0], &mut col0, &unit);
        assert!((col0[0] - 1.0 / 3.0).abs() < 1e-15 && (col0[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn preconditioned_operator_block_structure() {
        let n = 8;
        let op = op(n, vec![1, 4]);
        let diag = random_diag(n, 77);
        let pk = dense_from_op(2 * n, |x, y| apply_preconditioned_k(x, y, &diag, &op));
        let g = dense_from_op(n, |x, y| op.apply_normal(x, y));
        let gm = &g - DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            let t = diag.lambda1[i] / diag.dvec[i];
            let u = -diag.lambda2[i] / diag.dvec[i];
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((pk[(i, j)] - (id + t * gm[(i, j)])).abs() < 1e-12);
                assert!((pk[(n + i, j)] - u * gm[(i, j)]).abs() < 1e-12);
                assert!(pk[(i, n + j)].abs() < 1e-12);
                assert!((pk[(n + i, n + j)] - id).abs() < 1e-12);
            }
        }
        let eig = pk.complex_eigenvalues();
        for z in eig.iter() {
            assert!(z.im.abs() < 1e-8 && z.re > 0.0);
        }

        let empty = self::op(n, vec![]);
        let id = dense_from_op(2 * n, |x, y| apply_preconditioned_k(x, y, &diag, &empty));
        assert!((id - DMatrix::<f64>::identity(2 * n, 2 * n)).amax() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn k_and_p_are_spd_and_symmetric(seed in any::<u64>()) {
            let n = 16;
            let op = op(n, vec![0, 7, 8]);
            let diag = random_diag(n, seed);
            let u = random_vec(2 * n, seed ^ 1);
            let w = random_vec(2 * n, seed ^ 2);
            let (mut ku, mut kw, mut pu) = (vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]);
            apply_k(&u, &mut ku, &diag, &op);
            apply_k(&w, &mut kw, &diag, &op);
            apply_p(&u, &mut pu, &diag);
            prop_assert!(dot(&u, &ku) > 0.0);
            prop_assert!(dot(&u, &pu) > 0.0);
            let (a, b) = (dot(&ku, &w), dot(&u, &kw));
            prop_assert!((a - b).abs() <= 1e-12 * (norm_inf(&ku).max(norm_inf(&kw)) * 2.0 * n as f64));
            let mut back = vec![0.0; 2 * n];
            apply_p_inverse(&pu, &mut back, &diag);
            for i in 0..2 * n {
                prop_assert!((back[i] - u[i]).abs() <= 1e-12 * norm_inf(&u).max(1.0) * 10.0);
            }
        }
    }
}
