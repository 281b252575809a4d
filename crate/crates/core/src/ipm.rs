//! Primal-dual interior-point driver.
//!
//! The LASSO problem is lifted to the smooth form
//!
//! ```text
//! min 1/2 |b - M_perp beta|^2 + lambda e^T z
//! s.t. z + beta - s1 = 0,  z - beta - s2 = 0,  s1, s2 >= 0
//! ```
//!
//! with equality multipliers `y1, y2` and bound multipliers `nu1, nu2`. Each
//! iteration takes one Newton step on the barrier system `S V e = mu e`,
//! solved through the condensed KKT operator and PCG.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::condensed_kkt::{
    apply_k, apply_p_inverse, compute_rhs, recover_eliminated, BarrierDiagonals, CondensedSolution,
    KktRhs,
};
use crate::error::{check_len, Error, Result};
use crate::masked_operator::{MaskSet, MaskedOperator, ObservedSignal};
use crate::pcg::{pcg_solve, PcgConfig};
use crate::vecops::{dot, norm_inf};

/// Shortest step accepted before the method is declared stalled.
pub const MIN_STEP: f64 = 1e-12;

/// Observed data together with its masked operator and `xi = M_perp^T b`.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    op: MaskedOperator,
    b: Vec<f64>,
    xi: Vec<f64>,
}

impl LassoProblem {
    pub fn new(observed: ObservedSignal) -> Self {
        let op = MaskedOperator::new(observed.mask.clone());
        let mut xi = vec![0.0; op.n()];
        op.apply_transpose(&observed.values, &mut xi);
        Self {
            op,
            b: observed.values,
            xi,
        }
    }

    pub fn from_parts(mask: MaskSet, b: Vec<f64>) -> Result<Self> {
        Ok(Self::new(ObservedSignal::new(b, mask)?))
    }

    /// Problem whose observations are the non-missing entries of `full`.
    pub fn from_full_signal(full: &[f64], mask: MaskSet) -> Result<Self> {
        Ok(Self::new(ObservedSignal::from_full(full, mask)?))
    }

    pub fn op(&self) -> &MaskedOperator {
        &self.op
    }

    pub fn mask(&self) -> &MaskSet {
        self.op.mask()
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// `0.1 |M_perp^T b|_inf`.
    pub fn default_lambda(&self) -> f64 {
        0.1 * norm_inf(&self.xi)
    }

    /// `1/2 |b - M_perp beta|^2 + lambda |beta|_1`.
    pub fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let mut fit = vec![0.0; self.op.num_observed()];
        self.op.apply(beta, &mut fit);
        let misfit: f64 = fit.iter().zip(&self.b).map(|(f, b)| (b - f).powi(2)).sum();
        0.5 * misfit + lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Full signal `A beta`, including the missing samples.
    pub fn reconstruct(&self, beta: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        self.op.map().apply(beta, &mut x);
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpmState {
    pub beta: Vec<f64>,
    pub z: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
    pub mu: f64,
}

impl IpmState {
    /// `beta = 0`, `z = s1 = s2 = e`, `y = nu = (lambda / 2) e`.
    pub fn initial(n: usize, lambda: f64, mu: f64) -> Self {
        let half = vec![0.5 * lambda; n];
        Self {
            beta: vec![0.0; n],
            z: vec![1.0; n],
            s1: vec![1.0; n],
            s2: vec![1.0; n],
            y1: half.clone(),
            y2: half.clone(),
            nu1: half.clone(),
            nu2: half,
            mu,
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// `(nu1^T s1 + nu2^T s2) / 2n`.
    pub fn duality_measure(&self) -> f64 {
        (dot(&self.nu1, &self.s1) + dot(&self.nu2, &self.s2)) / (2 * self.len()) as f64
    }

    /// Largest complementarity product `s_i nu_i`.
    pub fn max_complementarity(&self) -> f64 {
        self.products().fold(0.0f64, |m, p| m.max(p.abs()))
    }

    /// Whether every product satisfies `s_i nu_i >= gamma * mu_dm`.
    pub fn is_centered(&self, gamma: f64) -> bool {
        let floor = gamma * self.duality_measure();
        self.products().all(|p| p >= floor)
    }

    pub fn is_interior(&self) -> bool {
        [&self.s1, &self.s2, &self.nu1, &self.nu2]
            .iter()
            .all(|v| v.iter().all(|&x| x > 0.0))
    }

    pub fn diagonals(&self) -> Result<BarrierDiagonals> {
        BarrierDiagonals::new(&self.s1, &self.s2, &self.nu1, &self.nu2)
    }

    fn products(&self) -> impl Iterator<Item = f64> + '_ {
        let p1 = self.s1.iter().zip(&self.nu1).map(|(s, v)| s * v);
        let p2 = self.s2.iter().zip(&self.nu2).map(|(s, v)| s * v);
        p1.chain(p2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpmConfig {
    /// `None` selects [`LassoProblem::default_lambda`].
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    /// `None` means `lambda / 2`, the duality measure of the initial point.
    pub mu_init: Option<f64>,
    pub sigma_mu: f64,
    pub mu_power: f64,
    pub ftb_tau: f64,
    pub gamma_centrality: f64,
    /// The barrier parameter is reduced once the barrier-problem error drops
    /// below `barrier_error_factor * mu`.
    pub barrier_error_factor: f64,
    pub pcg: PcgConfig,
    /// Keep a copy of every iterate in the report (small problems only).
    pub record_states: bool,
}

impl Default for IpmConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            tol: 1e-8,
            max_iters: 200,
            mu_init: None,
            sigma_mu: 0.2,
            mu_power: 1.5,
            ftb_tau: 0.995,
            gamma_centrality: 1e-4,
            barrier_error_factor: 10.0,
            pcg: PcgConfig::default(),
            record_states: false,
        }
    }
}

impl IpmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad("lambda must be positive and finite");
            }
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.sigma_mu > 0.0 && self.sigma_mu < 1.0) {
            return bad("sigma_mu must lie in (0, 1)");
        }
        if !(self.ftb_tau > 0.0 && self.ftb_tau < 1.0) {
            return bad("ftb_tau must lie in (0, 1)");
        }
        if !(self.mu_power > 1.0) {
            return bad("mu_power must exceed 1");
        }
        if self.mu_init.is_some_and(|m| !(m > 0.0)) {
            return bad("mu_init must be positive");
        }
        if !(self.barrier_error_factor > 0.0) {
            return bad("barrier_error_factor must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        self.pcg.validate()
    }

    pub fn resolve_lambda(&self, problem: &LassoProblem) -> Result<f64> {
        let lambda = self.lambda.unwrap_or_else(|| problem.default_lambda());
        if lambda > 0.0 && lambda.is_finite() {
            Ok(lambda)
        } else {
            Err(Error::InvalidConfig(format!(
                "lambda resolved to {lambda:e}; the data has no signal"
            )))
        }
    }
}

/// Starting point for the given penalty.
pub fn initialize(problem: &LassoProblem, lambda: f64, config: &IpmConfig) -> IpmState {
    IpmState::initial(problem.n(), lambda, config.mu_init.unwrap_or(0.5 * lambda))
}

/// `mu+ = max(tol / 10, min(sigma_mu mu, mu^mu_power))`.
pub fn update_barrier(mu: f64, config: &IpmConfig) -> f64 {
    (config.sigma_mu * mu)
        .min(mu.powf(config.mu_power))
        .max(config.tol / 10.0)
}

/// KKT error measures at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktMeasures {
    /// `max(|r5|_inf, |r6|_inf)`.
    pub primal: f64,
    /// `max(|r1|_inf, ..., |r4|_inf)`.
    pub dual: f64,
    /// `max(|S1 nu1|_inf, |S2 nu2|_inf)`.
    pub complementarity: f64,
    pub duality_measure: f64,
    /// `s_i nu_i >= gamma * mu_dm` for all i.
    pub centered: bool,
}

impl KktMeasures {
    pub fn error(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

/// Quantities derived from one iterate, shared by the convergence test, the
/// Newton step and the barrier update.
struct Evaluation {
    diag: BarrierDiagonals,
    rhs: KktRhs,
    measures: KktMeasures,
    /// `max |s_i nu_i - state.mu|`.
    barrier_deviation: f64,
}

fn evaluate(
    state: &IpmState,
    problem: &LassoProblem,
    lambda: f64,
    gamma: f64,
) -> Result<Evaluation> {
    let diag = state.diagonals()?;
    let rhs = compute_rhs(state, problem.op(), lambda, problem.xi(), &diag);
    let primal = norm_inf(&rhs.r5).max(norm_inf(&rhs.r6));
    let dual = [&rhs.r1, &rhs.r2, &rhs.r3, &rhs.r4]
        .iter()
        .fold(0.0f64, |m, v| m.max(norm_inf(v)));

    // All complementarity statistics in a single sweep over the products.
    let (mut sum1, mut sum2) = (0.0, 0.0);
    let (mut largest, mut smallest, mut deviation) = (0.0f64, f64::INFINITY, 0.0f64);
    for i in 0..state.len() {
        let (p1, p2) = (state.s1[i] * state.nu1[i], state.s2[i] * state.nu2[i]);
        sum1 += p1;
        sum2 += p2;
        largest = largest.max(p1.abs()).max(p2.abs());
        smallest = smallest.min(p1).min(p2);
        deviation = deviation
            .max((p1 - state.mu).abs())
            .max((p2 - state.mu).abs());
    }
    let duality_measure = (sum1 + sum2) / (2 * state.len()) as f64;
    let measures = KktMeasures {
        primal,
        dual,
        complementarity: largest,
        duality_measure,
        centered: smallest >= gamma * duality_measure,
    };
    Ok(Evaluation {
        diag,
        rhs,
        measures,
        barrier_deviation: deviation,
    })
}

/// Unperturbed KKT residuals of the LASSO problem at `state`.
pub fn check_convergence(
    state: &IpmState,
    problem: &LassoProblem,
    lambda: f64,
    config: &IpmConfig,
) -> Result<(bool, KktMeasures)> {
    let m = evaluate(state, problem, lambda, config.gamma_centrality)?.measures;
    Ok((m.error() <= config.tol, m))
}

/// Full Newton direction including the bound multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonDirection {
    pub kkt: CondensedSolution,
    pub d_nu1: Vec<f64>,
    pub d_nu2: Vec<f64>,
    pub krylov_iterations: usize,
    pub krylov_residual: f64,
}

/// Newton direction for the barrier system at target `mu`.
///
/// The condensed system is solved by PCG with the closed-form preconditioner;
/// the bound multipliers follow from the linearized complementarity rows
/// `dnu = mu / s - nu - Sigma ds`.
pub fn newton_direction(
    state: &IpmState,
    problem: &LassoProblem,
    lambda: f64,
    mu: f64,
    pcg: &PcgConfig,
) -> Result<NewtonDirection> {
    check_len("state", problem.n(), state.len())?;
    let diag = state.diagonals()?;
    let rhs = compute_rhs(state, problem.op(), lambda, problem.xi(), &diag);
    direction_from(state, problem, &diag, rhs, mu, pcg)
}

fn direction_from(
    state: &IpmState,
    problem: &LassoProblem,
    diag: &BarrierDiagonals,
    unshifted: KktRhs,
    mu: f64,
    pcg: &PcgConfig,
) -> Result<NewtonDirection> {
    let n = state.len();
    let rhs = unshifted.barrier_shifted(state, mu, diag);
    let op = problem.op();
    let res = pcg_solve(
        |x, y| apply_k(x, y, diag, op),
        |x, y| apply_p_inverse(x, y, diag),
        &rhs.condensed(),
        pcg,
    )?;
    if !res.converged {
        return Err(Error::KrylovNotConverged {
            iterations: res.iterations,
            residual: res.residual,
        });
    }
    let (d_beta, d_z) = res.solution.split_at(n);
    let kkt = recover_eliminated(d_beta, d_z, &rhs, diag);
    let d_nu = |s: &[f64], nu: &[f64], sigma: &[f64], ds: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| mu / s[i] - nu[i] - sigma[i] * ds[i])
            .collect()
    };
    let d_nu1 = d_nu(&state.s1, &state.nu1, &diag.sigma1, &kkt.d_s1);
    let d_nu2 = d_nu(&state.s2, &state.nu2, &diag.sigma2, &kkt.d_s2);
    Ok(NewtonDirection {
        kkt,
        d_nu1,
        d_nu2,
        krylov_iterations: res.iterations,
        krylov_residual: res.residual,
    })
}

/// Largest `alpha` in `(0, 1]` with `x + alpha dx >= (1 - tau) x` for every pair.
pub fn fraction_to_boundary(pairs: &[(&[f64], &[f64])], tau: f64) -> f64 {
    let mut alpha = 1.0f64;
    for (x, dx) in pairs {
        for (xi, di) in x.iter().zip(dx.iter()) {
            if *di < 0.0 {
                alpha = alpha.min(-tau * xi / di);
            }
        }
    }
    alpha
}

/// One entry of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Barrier target used for this step.
    pub mu: f64,
    pub duality_measure: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub centered: bool,
    pub krylov_iterations: usize,
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub wall_time_s: f64,
}

/// Takes one damped Newton step from `state` toward the barrier target
/// `state.mu`. The returned state keeps the same `mu`.
pub fn ipm_step(
    state: &IpmState,
    problem: &LassoProblem,
    lambda: f64,
    config: &IpmConfig,
    iteration: usize,
) -> Result<(IpmState, IterationRecord)> {
    let start = Instant::now();
    let eval = evaluate(state, problem, lambda, config.gamma_centrality)?;
    step_from(state, problem, eval, config, iteration, start)
}

fn step_from(
    state: &IpmState,
    problem: &LassoProblem,
    eval: Evaluation,
    config: &IpmConfig,
    iteration: usize,
    start: Instant,
) -> Result<(IpmState, IterationRecord)> {
    let m = eval.measures;
    let mu = state.mu;
    let dir = direction_from(state, problem, &eval.diag, eval.rhs, mu, &config.pcg)?;
    let tau = config.ftb_tau.max(1.0 - mu);
    let k = &dir.kkt;
    let alpha_p = fraction_to_boundary(&[(&state.s1, &k.d_s1), (&state.s2, &k.d_s2)], tau);
    let alpha_d = fraction_to_boundary(&[(&state.nu1, &dir.d_nu1), (&state.nu2, &dir.d_nu2)], tau);
    let step = alpha_p.min(alpha_d);
    if !(step >= MIN_STEP) {
        return Err(Error::Stalled { iteration, step });
    }
    let advance = |x: &[f64], dx: &[f64], a: f64| -> Vec<f64> {
        x.iter().zip(dx).map(|(x, d)| x + a * d).collect()
    };
    let next = IpmState {
        beta: advance(&state.beta, &k.d_beta, alpha_p),
        z: advance(&state.z, &k.d_z, alpha_p),
        s1: advance(&state.s1, &k.d_s1, alpha_p),
        s2: advance(&state.s2, &k.d_s2, alpha_p),
        y1: advance(&state.y1, &k.d_y1, alpha_d),
        y2: advance(&state.y2, &k.d_y2, alpha_d),
        nu1: advance(&state.nu1, &dir.d_nu1, alpha_d),
        nu2: advance(&state.nu2, &dir.d_nu2, alpha_d),
        mu,
    };
    if !next.is_interior() {
        return Err(Error::InteriorViolation(format!(
            "iterate left the interior at iteration {iteration}"
        )));
    }
    let record = IterationRecord {
        iteration,
        mu,
        duality_measure: m.duality_measure,
        primal_residual: m.primal,
        dual_residual: m.dual,
        complementarity: m.complementarity,
        centered: m.centered,
        krylov_iterations: dir.krylov_iterations,
        alpha_primal: alpha_p,
        alpha_dual: alpha_d,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((next, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub lambda: f64,
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    pub final_measures: KktMeasures,
    pub final_objective: f64,
    pub total_krylov_iterations: usize,
    pub wall_time_s: f64,
    /// Every iterate, starting with the initial point, when requested.
    #[serde(skip)]
    pub states: Option<Vec<IpmState>>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub beta: Vec<f64>,
    pub state: IpmState,
    pub report: SolveReport,
}

/// Runs the interior-point method to `config.tol`.
///
/// When the iteration cap is hit the iterate with the smallest KKT error is
/// returned with [`SolveStatus::MaxIterations`].
pub fn solve(problem: &LassoProblem, config: &IpmConfig) -> Result<SolveOutcome> {
    config.validate()?;
    let start = Instant::now();
    let lambda = config.resolve_lambda(problem)?;
    let mut state = initialize(problem, lambda, config);
    let mut records = Vec::new();
    let mut states = config.record_states.then(|| vec![state.clone()]);
    let mut best: Option<(f64, IpmState, KktMeasures)> = None;

    let gamma = config.gamma_centrality;
    let mut eval = evaluate(&state, problem, lambda, gamma)?;
    let status = loop {
        let m = eval.measures;
        let improved = best.as_ref().map_or(true, |(e, _, _)| m.error() < *e);
        if m.error() <= config.tol {
            best = Some((m.error(), state, m));
            break SolveStatus::Converged;
        }
        if records.len() >= config.max_iters {
            if improved {
                best = Some((m.error(), state, m));
            }
            break SolveStatus::MaxIterations;
        }
        let iteration = records.len() + 1;
        let (mut next, record) =
            step_from(&state, problem, eval, config, iteration, Instant::now())?;
        records.push(record);
        // Reduce mu once the barrier subproblem is solved to within a
        // multiple of mu. The unshifted residuals do not depend on mu.
        let next_eval = evaluate(&next, problem, lambda, gamma)?;
        let barrier_error = next_eval
            .rhs
            .max_residual()
            .max(next_eval.barrier_deviation);
        if barrier_error <= config.barrier_error_factor * next.mu {
            next.mu = update_barrier(next.mu, config);
        }
        if let Some(s) = states.as_mut() {
            s.push(next.clone());
        }
        let prev = std::mem::replace(&mut state, next);
        if improved {
            best = Some((m.error(), prev, m));
        }
        eval = next_eval;
    };

    let (_, state, final_measures) = best.expect("at least one iterate is measured");
    let beta = state.beta.clone();
    let report = SolveReport {
        status,
        lambda,
        iterations: records.len(),
        total_krylov_iterations: records.iter().map(|r| r.krylov_iterations).sum(),
        final_objective: problem.objective(&beta, lambda),
        final_measures,
        records,
        wall_time_s: start.elapsed().as_secs_f64(),
        states,
    };
    Ok(SolveOutcome {
        beta,
        state,
        report,
    })
}
