//! The shield objective and its solver.
//!
//! Over the receivers of the protected zone the sum mean-square error is
//!
//! ```text
//! SMSE(v, W) = sum_u sum_j |v^H H̄_u w_j|^2
//!            - 2 sum_u Re{v^H H̄_u w_u} + U (1 + sigma_n^2)
//! ```
//!
//! Maximizing SMSE denies reliable reception in that zone. Dropping the
//! constant gives the shield objective, maximized subject to the passivity
//! constraints `|v_i| <= 1`, the pinned entry `v_{N+1} = 1` and the transmit
//! power budget `||W||_F^2 <= P`.
//!
//! The feasible set is convex but the objective is a convex quadratic, so
//! maxima sit on the boundary and ascent can stall in local optima. The
//! solver therefore runs multi-start projected gradient ascent with
//! backtracking, alternating between v (per-element unit-disk projection)
//! and W (Frobenius-ball projection). Restart seeds are random unit-modulus
//! configurations plus, optionally, every 1-bit mask; each restart starts
//! from W = 0 and its first W phase is exactly the rule the binary
//! brute-force oracle uses, so with binary seeds enabled the returned
//! objective can never fall below the 1-bit optimum.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use thiserror::Error;

use crate::channel::{CMat, CVec, ChannelError, ChannelSet};
use crate::ris::{BitMask, RisConfig, RisError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("protected set is empty")]
    EmptyProtectedSet,
    #[error("receiver index {0} out of range (U = {1})")]
    BadReceiverIndex(usize, usize),
    #[error("duplicate receiver index {0} in protected set")]
    DuplicateReceiver(usize),
    #[error("invalid solver options: {0}")]
    BadOptions(String),
    #[error("power budget must be positive")]
    NonPositivePower,
    #[error("brute force supports at most 20 elements, got {0}")]
    TooManyElements(usize),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Ris(#[from] RisError),
}

/// Transmit precoder W (Sigma x U) under a Frobenius power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    w: CMat,
    budget: f64,
}

/// Numerical slack on the power constraint.
pub const POWER_SLACK: f64 = 1e-9;

impl Precoder {
    pub fn new(w: CMat, budget: f64) -> Result<Self, SolverError> {
        if !(budget > 0.0) {
            return Err(SolverError::NonPositivePower);
        }
        let used = w.norm_squared();
        if used > budget + POWER_SLACK {
            return Err(SolverError::BadOptions(format!(
                "precoder power {used} exceeds budget {budget}"
            )));
        }
        Ok(Self { w, budget })
    }

    pub fn zeros(n_tx: usize, n_users: usize, budget: f64) -> Result<Self, SolverError> {
        Self::new(CMat::zeros(n_tx, n_users), budget)
    }

    pub fn w(&self) -> &CMat {
        &self.w
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn column(&self, j: usize) -> CVec {
        CVec::from_iterator(self.w.nrows(), self.w.column(j).iter().copied())
    }
}

/// Maximum-ratio precoder toward each receiver's direct channel, columns
/// scaled to split the budget evenly. Used by the fixed-precoder solver
/// mode and as the "before" reference in reports.
pub fn mrt_precoder(channels: &ChannelSet, budget: f64) -> Result<Precoder, SolverError> {
    if !(budget > 0.0) {
        return Err(SolverError::NonPositivePower);
    }
    let u = channels.n_users();
    let sigma = channels.n_tx();
    let per_user = (budget / u as f64).sqrt();
    let mut w = CMat::zeros(sigma, u);
    for j in 0..u {
        let h = &channels.h_direct[j];
        let norm = h.norm();
        if norm > 0.0 {
            for i in 0..sigma {
                w[(i, j)] = h[i] * (per_user / norm);
            }
        }
    }
    // Guard against rounding just above the ball.
    let (_, w) = project_w(w, budget);
    Precoder::new(w, budget)
}

/// Options of the multi-start solver. All randomness flows from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Random restarts (in addition to binary-mask seeds when enabled).
    pub restarts: usize,
    /// Cap on outer alternations and on steps within each ascent phase.
    pub max_iters: usize,
    /// Initial ascent step; adapted by backtracking/doubling.
    pub step_init: f64,
    /// Absolute objective-improvement tolerance.
    pub tol: f64,
    pub seed: u64,
    /// Seed every restart pool with all 2^N 1-bit masks (N <= 12 only).
    pub include_binary_seeds: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            max_iters: 500,
            step_init: 0.1,
            tol: 1e-8,
            seed: 0,
            include_binary_seeds: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.restarts == 0 {
            return Err(SolverError::BadOptions("restarts must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(SolverError::BadOptions("max_iters must be >= 1".into()));
        }
        if !(self.step_init > 0.0) {
            return Err(SolverError::BadOptions("step_init must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(SolverError::BadOptions("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a shield solve.
#[derive(Debug, Clone)]
pub struct ShieldSolution {
    pub config: RisConfig,
    pub precoder: Precoder,
    pub objective: f64,
    /// Objective after the initial point and after each outer alternation
    /// of the winning restart; non-decreasing.
    pub trace: Vec<f64>,
    pub restarts_used: usize,
    /// Index of the winning restart in the seed pool.
    pub best_restart: usize,
    /// False when the winning restart hit `max_iters` before the
    /// improvement dropped below `tol`.
    pub converged: bool,
}

impl ShieldSolution {
    /// Constraint violations: (max amplitude excess, pin error, power excess).
    pub fn feasibility_residuals(&self) -> (f64, f64, f64) {
        let n = self.config.elements();
        let v = self.config.v();
        let amp = v
            .iter()
            .take(n)
            .map(|z| (z.norm() - 1.0).max(0.0))
            .fold(0.0f64, f64::max);
        let pin = (v[n] - Complex64::new(1.0, 0.0)).norm();
        let power = (self.precoder.w().norm_squared() - self.precoder.budget()).max(0.0);
        (amp, pin, power)
    }
}

// ---------------------------------------------------------------------------
// Objective, closed forms
// ---------------------------------------------------------------------------

fn check_protected(channels: &ChannelSet, protected: &[usize]) -> Result<(), SolverError> {
    if protected.is_empty() {
        return Err(SolverError::EmptyProtectedSet);
    }
    let u = channels.n_users();
    for (k, &id) in protected.iter().enumerate() {
        if id >= u {
            return Err(SolverError::BadReceiverIndex(id, u));
        }
        if protected[..k].contains(&id) {
            return Err(SolverError::DuplicateReceiver(id));
        }
    }
    Ok(())
}

/// Closed-form per-receiver MSE:
/// `sum_j |v^H H̄_u w_j|^2 - 2 Re{v^H H̄_u w_u} + 1 + sigma_n^2`.
pub fn mse_u(
    cfg: &RisConfig,
    precoder: &Precoder,
    channels: &ChannelSet,
    u: usize,
) -> Result<f64, SolverError> {
    if u >= channels.n_users() {
        return Err(SolverError::BadReceiverIndex(u, channels.n_users()));
    }
    let h_bar = &channels.h_bar[u];
    let v = cfg.v();
    let mut acc = 1.0 + channels.sigma2;
    for j in 0..precoder.w().ncols() {
        let g = crate::channel::cascade_gain(v, h_bar, &precoder.column(j))?;
        acc += g.norm_sqr();
        if j == u {
            acc -= 2.0 * g.re;
        }
    }
    Ok(acc)
}

/// Sum of [`mse_u`] over the protected receivers.
pub fn smse(
    cfg: &RisConfig,
    precoder: &Precoder,
    channels: &ChannelSet,
    protected: &[usize],
) -> Result<f64, SolverError> {
    check_protected(channels, protected)?;
    protected.iter().try_fold(0.0, |acc, &u| {
        Ok(acc + mse_u(cfg, precoder, channels, u)?)
    })
}

/// The SMSE with its constant dropped:
/// `sum_u sum_j |v^H H̄_u w_j|^2 - 2 sum_u Re{v^H H̄_u w_u}`,
/// summed over protected receivers; equals `smse - U (1 + sigma_n^2)`.
pub fn shield_objective(
    cfg: &RisConfig,
    precoder: &Precoder,
    channels: &ChannelSet,
    protected: &[usize],
) -> Result<f64, SolverError> {
    check_protected(channels, protected)?;
    shield_objective_raw(channels, protected, cfg.v(), precoder.w())
}

/// Objective on raw variables. `v` may be any (N+1)-vector here — the pin
/// and passivity constraints belong to the feasible set, not the function —
/// which is what finite-difference gradient checks need.
pub fn shield_objective_raw(
    channels: &ChannelSet,
    protected: &[usize],
    v: &CVec,
    w: &CMat,
) -> Result<f64, SolverError> {
    check_protected(channels, protected)?;
    let mut acc = 0.0;
    for &u in protected {
        let h_bar = &channels.h_bar[u];
        let bu = h_bar.adjoint() * v; // b_u = H̄_u^H v
        for j in 0..w.ncols() {
            let g = bu.dotc(&w.column(j).clone_owned()); // v^H H̄_u w_j
            acc += g.norm_sqr();
            if j == u {
                acc -= 2.0 * g.re;
            }
        }
    }
    Ok(acc)
}

/// Analytic gradients of [`shield_objective_raw`] with respect to the real
/// and imaginary parts of `v` and `W`, packed as complex numbers
/// (`re = d/dRe`, `im = d/dIm`).
pub fn shield_gradients(
    channels: &ChannelSet,
    protected: &[usize],
    v: &CVec,
    w: &CMat,
) -> Result<(CVec, CMat), SolverError> {
    check_protected(channels, protected)?;
    let mut grad_v = CVec::zeros(v.len());
    let mut grad_w = CMat::zeros(w.nrows(), w.ncols());
    for &u in protected {
        let h_bar = &channels.h_bar[u];
        let bu = h_bar.adjoint() * v;
        for j in 0..w.ncols() {
            let wj = w.column(j).clone_owned();
            let g = bu.dotc(&wj);
            let a_uj = h_bar * &wj; // H̄_u w_j
            // d/dconj(v) of |g|^2 is a_uj conj(g); of -2 Re{g} is -a_uj.
            grad_v += &a_uj * g.conj();
            if j == u {
                grad_v -= &a_uj;
            }
            // d/dconj(w_j) of |g|^2 is g b_u; of -2 Re{g} is -b_u.
            let mut coef = g;
            if j == u {
                coef -= Complex64::new(1.0, 0.0);
            }
            for i in 0..w.nrows() {
                grad_w[(i, j)] += bu[i] * coef;
            }
        }
    }
    // Wirtinger to real parts: d/dRe = 2 Re{d/dconj}, d/dIm = 2 Im{d/dconj}.
    grad_v *= Complex64::new(2.0, 0.0);
    grad_w *= Complex64::new(2.0, 0.0);
    Ok((grad_v, grad_w))
}

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

fn project_v(mut v: CVec) -> CVec {
    let n = v.len() - 1;
    for i in 0..n {
        let amp = v[i].norm();
        if amp > 1.0 {
            v[i] /= Complex64::new(amp, 0.0);
        }
    }
    v[n] = Complex64::new(1.0, 0.0);
    v
}

fn project_w(mut w: CMat, budget: f64) -> (f64, CMat) {
    let norm = w.norm();
    let radius = budget.sqrt();
    if norm > radius {
        w *= Complex64::new(radius / norm, 0.0);
    }
    (norm, w)
}

/// Project onto the feasible set: each `v_i` onto the unit disk, the pin to
/// 1 exactly, `W` onto the Frobenius ball of radius `sqrt(P)`. Idempotent.
pub fn project_feasible(
    cfg: &RisConfig,
    precoder: &Precoder,
    budget: f64,
) -> Result<(RisConfig, Precoder), SolverError> {
    let v = project_v(cfg.v().clone());
    let (_, w) = project_w(precoder.w().clone(), budget);
    Ok((
        RisConfig::from_v(v, cfg.rows(), cfg.cols())?,
        Precoder::new(w, budget)?,
    ))
}

// ---------------------------------------------------------------------------
// Projected gradient ascent
// ---------------------------------------------------------------------------

const STEP_MIN: f64 = 1e-30;
const MAX_BACKTRACKS: usize = 70;

struct Ctx<'a> {
    channels: &'a ChannelSet,
    protected: &'a [usize],
}

impl Ctx<'_> {
    fn objective(&self, v: &CVec, w: &CMat) -> f64 {
        shield_objective_raw(self.channels, self.protected, v, w).expect("validated inputs")
    }
}

/// One ascent phase in v with W fixed. Returns the new v, its objective and
/// the adapted step. Monotone: every accepted step strictly improves.
fn ascend_v(ctx: &Ctx, mut v: CVec, w: &CMat, mut f: f64, mut step: f64, opts: &SolverOptions) -> (CVec, f64, f64) {
    let n = v.len() - 1;
    for _ in 0..opts.max_iters {
        let (mut grad, _) = shield_gradients(ctx.channels, ctx.protected, &v, w).expect("validated");
        grad[n] = Complex64::new(0.0, 0.0); // pinned entry does not move
        if grad.norm() < 1e-300 {
            break;
        }
        let mut improved = false;
        let mut last_gain = 0.0;
        for _ in 0..MAX_BACKTRACKS {
            let cand = project_v(&v + &grad * Complex64::new(step, 0.0));
            let fc = ctx.objective(&cand, w);
            if fc > f {
                last_gain = fc - f;
                v = cand;
                f = fc;
                step *= 2.0;
                improved = true;
                break;
            }
            step *= 0.5;
            if step < STEP_MIN {
                break;
            }
        }
        if !improved || last_gain < opts.tol {
            break;
        }
    }
    (v, f, step)
}

/// One ascent phase in W with v fixed; the binary brute-force oracle uses
/// exactly this rule from W = 0.
fn ascend_w(
    ctx: &Ctx,
    v: &CVec,
    mut w: CMat,
    budget: f64,
    mut f: f64,
    mut step: f64,
    opts: &SolverOptions,
) -> (CMat, f64, f64) {
    for _ in 0..opts.max_iters {
        let (_, grad) = shield_gradients(ctx.channels, ctx.protected, v, &w).expect("validated");
        if grad.norm() < 1e-300 {
            break;
        }
        let mut improved = false;
        let mut last_gain = 0.0;
        for _ in 0..MAX_BACKTRACKS {
            let (_, cand) = project_w(&w + &grad * Complex64::new(step, 0.0), budget);
            let fc = ctx.objective(v, &cand);
            if fc > f {
                last_gain = fc - f;
                w = cand;
                f = fc;
                step *= 2.0;
                improved = true;
                break;
            }
            step *= 0.5;
            if step < STEP_MIN {
                break;
            }
        }
        if !improved || last_gain < opts.tol {
            break;
        }
    }
    (w, f, step)
}

struct RestartOutcome {
    v: CVec,
    w: CMat,
    objective: f64,
    trace: Vec<f64>,
    converged: bool,
}

/// Alternating block ascent from one seed: a v phase with W fixed, then a
/// W phase with v fixed, repeated until the outer improvement drops below
/// tolerance. Starting from W = 0 the first v phase is a no-op (the
/// gradient vanishes), so the first W phase reproduces the brute-force
/// precoder rule bit for bit.
fn run_restart(ctx: &Ctx, v0: CVec, budget: f64, opts: &SolverOptions) -> RestartOutcome {
    let mut v = project_v(v0);
    let mut w = CMat::zeros(ctx.channels.n_tx(), ctx.channels.n_users());
    let mut f = ctx.objective(&v, &w);
    let mut trace = vec![f];
    let mut step_v = opts.step_init;
    let mut step_w = opts.step_init;
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let before = f;
        let (nv, fv, sv) = ascend_v(ctx, v, &w, f, step_v, opts);
        v = nv;
        f = fv;
        step_v = sv;
        let (nw, fw, sw) = ascend_w(ctx, &v, w, budget, f, step_w, opts);
        w = nw;
        f = fw;
        step_w = sw;
        trace.push(f);
        if f - before < opts.tol {
            converged = true;
            break;
        }
    }
    RestartOutcome {
        v,
        w,
        objective: f,
        trace,
        converged,
    }
}

fn random_unit_modulus_v(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    let mut v = CVec::from_fn(n + 1, |_, _| {
        Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
    });
    v[n] = Complex64::new(1.0, 0.0);
    v
}

fn mask_seed_v(n: usize, mask_int: u64) -> CVec {
    let mut v = CVec::zeros(n + 1);
    for e in 0..n {
        // Row-major bits, MSB = element 0.
        if (mask_int >> (n - 1 - e)) & 1 == 1 {
            v[e] = Complex64::new(1.0, 0.0);
        }
    }
    v[n] = Complex64::new(1.0, 0.0);
    v
}

/// Largest N for which binary seeding enumerates every mask.
pub const BINARY_SEED_LIMIT: usize = 12;

/// Maximize the shield objective over (v, W). Deterministic per
/// `opts.seed`; restarts run independently (and in parallel), best
/// objective wins with ties to the lowest restart index.
pub fn solve_shield(
    channels: &ChannelSet,
    protected: &[usize],
    budget: f64,
    opts: &SolverOptions,
) -> Result<ShieldSolution, SolverError> {
    opts.validate()?;
    check_protected(channels, protected)?;
    if !(budget > 0.0) {
        return Err(SolverError::NonPositivePower);
    }
    let n = channels.n_elements();
    let ctx = Ctx { channels, protected };

    let mut seeds: Vec<CVec> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        seeds.push(random_unit_modulus_v(n, &mut rng));
    }
    if opts.include_binary_seeds && n <= BINARY_SEED_LIMIT {
        for mask_int in 0..(1u64 << n) {
            seeds.push(mask_seed_v(n, mask_int));
        }
    }

    let outcomes: Vec<RestartOutcome> = seeds
        .into_par_iter()
        .map(|v0| run_restart(&ctx, v0, budget, opts))
        .collect();

    let restarts_used = outcomes.len();
    let (best_restart, best) = outcomes
        .into_iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.objective
                .partial_cmp(&b.objective)
                .expect("objective is finite")
                .then(ib.cmp(ia)) // ties to the lowest index
        })
        .expect("at least one restart");

    Ok(ShieldSolution {
        config: RisConfig::from_v(best.v, grid_rows(channels), grid_cols(channels, n))?,
        precoder: Precoder::new(best.w, budget)?,
        objective: best.objective,
        trace: best.trace,
        restarts_used,
        best_restart,
        converged: best.converged,
    })
}

// The channel set does not carry the panel's grid shape; default to a
// single row unless a caller reshapes afterwards.
fn grid_rows(_channels: &ChannelSet) -> usize {
    1
}

fn grid_cols(_channels: &ChannelSet, n: usize) -> usize {
    n
}

/// v-only variant with the precoder held fixed (e.g. maximum-ratio service
/// of the other zone). Not the reference formulation; off unless asked for.
pub fn solve_shield_with_precoder(
    channels: &ChannelSet,
    protected: &[usize],
    precoder: &Precoder,
    opts: &SolverOptions,
) -> Result<ShieldSolution, SolverError> {
    opts.validate()?;
    check_protected(channels, protected)?;
    let n = channels.n_elements();
    let ctx = Ctx { channels, protected };
    let w = precoder.w().clone();

    let mut seeds: Vec<CVec> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        seeds.push(random_unit_modulus_v(n, &mut rng));
    }
    if opts.include_binary_seeds && n <= BINARY_SEED_LIMIT {
        for mask_int in 0..(1u64 << n) {
            seeds.push(mask_seed_v(n, mask_int));
        }
    }

    let outcomes: Vec<(CVec, f64, Vec<f64>, bool)> = seeds
        .into_par_iter()
        .map(|v0| {
            let v0 = project_v(v0);
            let f0 = ctx.objective(&v0, &w);
            let mut trace = vec![f0];
            let (v, f, _) = ascend_v(&ctx, v0, &w, f0, opts.step_init, opts);
            trace.push(f);
            (v, f, trace, true)
        })
        .collect();

    let restarts_used = outcomes.len();
    let (best_restart, best) = outcomes
        .into_iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.1.partial_cmp(&b.1).expect("finite").then(ib.cmp(ia))
        })
        .expect("at least one restart");

    Ok(ShieldSolution {
        config: RisConfig::from_v(best.0, 1, n)?,
        precoder: precoder.clone(),
        objective: best.1,
        trace: best.2,
        restarts_used,
        best_restart,
        converged: best.3,
    })
}

// ---------------------------------------------------------------------------
// Binary brute force
// ---------------------------------------------------------------------------

/// Exhaustive 1-bit oracle: enumerate every reflect/absorb mask, set W by
/// `w_rule`, return the best (mask, precoder, objective). Ties break to the
/// lowest mask integer (row-major bits, MSB = first element).
pub fn brute_force_1bit_with<F>(
    channels: &ChannelSet,
    protected: &[usize],
    budget: f64,
    w_rule: F,
) -> Result<(BitMask, Precoder, f64), SolverError>
where
    F: Fn(&CVec) -> CMat + Sync,
{
    check_protected(channels, protected)?;
    if !(budget > 0.0) {
        return Err(SolverError::NonPositivePower);
    }
    let n = channels.n_elements();
    if n > 20 {
        return Err(SolverError::TooManyElements(n));
    }
    let ctx = Ctx { channels, protected };
    let best = (0..(1u64 << n))
        .into_par_iter()
        .map(|mask_int| {
            let v = mask_seed_v(n, mask_int);
            let w = w_rule(&v);
            (mask_int, ctx.objective(&v, &w))
        })
        .reduce(
            || (u64::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let (mask_int, objective) = best;
    let bits: Vec<bool> = (0..n).map(|e| (mask_int >> (n - 1 - e)) & 1 == 1).collect();
    let mask = BitMask::new(1, n, bits)?;
    let v = mask_seed_v(n, mask_int);
    let w = w_rule(&v);
    Ok((mask, Precoder::new(w, budget)?, objective))
}

/// [`brute_force_1bit_with`] using the default precoder rule: the same
/// projected W ascent the solver runs, one restart from W = 0.
pub fn brute_force_1bit(
    channels: &ChannelSet,
    protected: &[usize],
    budget: f64,
    opts: &SolverOptions,
) -> Result<(BitMask, Precoder, f64), SolverError> {
    opts.validate()?;
    check_protected(channels, protected)?;
    let ctx = Ctx { channels, protected };
    brute_force_1bit_with(channels, protected, budget, |v| {
        let w0 = CMat::zeros(channels.n_tx(), channels.n_users());
        let f0 = ctx.objective(v, &w0);
        let (w, _, _) = ascend_w(&ctx, v, w0, budget, f0, opts.step_init, opts);
        w
    })
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Render the machine-readable solver report.
pub fn render_report(
    solution: &ShieldSolution,
    quantized: &BitMask,
    brute: Option<&(BitMask, Precoder, f64)>,
) -> String {
    let (amp, pin, power) = solution.feasibility_residuals();
    let mut out = String::new();
    let _ = writeln!(out, "objective = {:.12e}", solution.objective);
    let _ = writeln!(out, "iterations = {}", solution.trace.len().saturating_sub(1));
    let _ = writeln!(out, "restarts = {}", solution.restarts_used);
    let _ = writeln!(out, "best_restart = {}", solution.best_restart);
    let _ = writeln!(out, "converged = {}", solution.converged);
    let _ = writeln!(out, "residual_amplitude = {:.3e}", amp);
    let _ = writeln!(out, "residual_pin = {:.3e}", pin);
    let _ = writeln!(out, "residual_power = {:.3e}", power);
    if let Some((mask, _, value)) = brute {
        let _ = writeln!(out, "brute_force_objective = {:.12e}", value);
        let _ = writeln!(
            out,
            "brute_force_gap = {:.12e}",
            solution.objective - value
        );
        let _ = writeln!(out, "brute_force_mask = {}", mask.to_string().trim().replace('\n', "|"));
    }
    let _ = writeln!(out, "mask:");
    out.push_str(&quantized.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cx(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
    }

    /// Unit-scale synthetic instance: links drawn iid complex uniform.
    fn random_channels(n: usize, sigma: usize, users: usize, sigma2: f64, seed: u64) -> ChannelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMat::from_fn(n, sigma, |_, _| cx(&mut rng));
        let h_direct: Vec<CVec> = (0..users)
            .map(|_| CVec::from_fn(sigma, |_, _| cx(&mut rng)))
            .collect();
        let h_ris: Vec<CVec> = (0..users)
            .map(|_| CVec::from_fn(n, |_, _| cx(&mut rng)))
            .collect();
        ChannelSet::new(g, h_direct, h_ris, sigma2).unwrap()
    }

    fn scalar_channels(h_d: f64, sigma2: f64) -> ChannelSet {
        let one = Complex64::new(1.0, 0.0);
        let g = CMat::zeros(1, 1);
        ChannelSet::new(
            g,
            vec![CVec::from_vec(vec![one * h_d])],
            vec![CVec::zeros(1)],
            sigma2,
        )
        .unwrap()
    }

    #[test]
    fn mse_examples() {
        // W = 0 -> 1 + sigma^2.
        let ch = scalar_channels(1.0, 0.3);
        let cfg = RisConfig::from_v(
            CVec::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]),
            1,
            1,
        )
        .unwrap();
        let w0 = Precoder::zeros(1, 1, 1.0).unwrap();
        assert_relative_eq!(mse_u(&cfg, &w0, &ch, 0).unwrap(), 1.3, epsilon = 1e-15);

        // Perfect equalization: h_d = 1, w = 1, sigma^2 = 0 -> 0.
        let ch = scalar_channels(1.0, 0.0);
        let w1 = Precoder::new(
            CMat::from_row_slice(1, 1, &[Complex64::new(1.0, 0.0)]),
            1.0,
        )
        .unwrap();
        assert!(mse_u(&cfg, &w1, &ch, 0).unwrap().abs() < 1e-15);

        // w = 0.5 -> (0.5 - 1)^2 = 0.25.
        let wh = Precoder::new(
            CMat::from_row_slice(1, 1, &[Complex64::new(0.5, 0.0)]),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(mse_u(&cfg, &wh, &ch, 0).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn smse_examples() {
        // W = 0, two protected receivers, sigma^2 = 0.1 -> 2.2.
        let one = Complex64::new(1.0, 0.0);
        let ch = ChannelSet::new(
            CMat::zeros(1, 1),
            vec![CVec::from_vec(vec![one]), CVec::from_vec(vec![one * 2.0])],
            vec![CVec::zeros(1), CVec::zeros(1)],
            0.1,
        )
        .unwrap();
        let cfg = RisConfig::from_v(
            CVec::from_vec(vec![Complex64::new(0.0, 0.0), one]),
            1,
            1,
        )
        .unwrap();
        let w0 = Precoder::zeros(1, 2, 1.0).unwrap();
        assert_relative_eq!(smse(&cfg, &w0, &ch, &[0, 1]).unwrap(), 2.2, epsilon = 1e-12);

        // Single protected receiver: smse == mse_u.
        assert_relative_eq!(
            smse(&cfg, &w0, &ch, &[1]).unwrap(),
            mse_u(&cfg, &w0, &ch, 1).unwrap(),
            epsilon = 1e-15
        );

        assert!(matches!(
            smse(&cfg, &w0, &ch, &[]),
            Err(SolverError::EmptyProtectedSet)
        ));
        assert!(matches!(
            smse(&cfg, &w0, &ch, &[0, 0]),
            Err(SolverError::DuplicateReceiver(0))
        ));
    }

    #[test]
    fn smse_matches_monte_carlo_expectation() {
        // Oracle: E|y_u - s_u|^2 estimated over unit-variance symbol and
        // noise draws, summed over the protected set.
        let n = 4;
        let sigma = 2;
        let users = 2;
        let sigma2 = 0.2;
        let ch = random_channels(n, sigma, users, sigma2, 11);
        let protected = [0usize, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v = CVec::from_fn(n + 1, |_, _| {
            Complex64::from_polar(rng.random::<f64>(), rng.random::<f64>() * std::f64::consts::TAU)
        });
        v[n] = Complex64::new(1.0, 0.0);
        let cfg = RisConfig::from_v(v, 1, n).unwrap();
        let budget = 4.0;
        let mut w = CMat::from_fn(sigma, users, |_, _| cx(&mut rng));
        let (_, wp) = project_w(std::mem::replace(&mut w, CMat::zeros(1, 1)), budget);
        let precoder = Precoder::new(wp, budget).unwrap();

        let closed = smse(&cfg, &precoder, &ch, &protected).unwrap();

        // Cascade gains per (u, j).
        let gains: Vec<Vec<Complex64>> = protected
            .iter()
            .map(|&u| {
                (0..users)
                    .map(|j| {
                        crate::channel::cascade_gain(cfg.v(), &ch.h_bar[u], &precoder.column(j))
                            .unwrap()
                    })
                    .collect()
            })
            .collect();

        let draws = 1_000_000usize;
        let mut mc_rng = ChaCha8Rng::seed_from_u64(123);
        let mut acc = 0.0;
        let gauss = |rng: &mut ChaCha8Rng| {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            Complex64::from_polar((-u1.ln()).sqrt(), std::f64::consts::TAU * u2)
        };
        for _ in 0..draws {
            let s: Vec<Complex64> = (0..users).map(|_| gauss(&mut mc_rng)).collect();
            for (pu, _) in protected.iter().enumerate() {
                let mut y = gauss(&mut mc_rng) * sigma2.sqrt();
                for j in 0..users {
                    y += gains[pu][j] * s[j];
                }
                acc += (y - s[protected[pu]]).norm_sqr();
            }
        }
        let mc = acc / draws as f64;
        assert_relative_eq!(closed, mc, max_relative = 0.01);
    }

    #[test]
    fn objective_drops_exactly_the_constant() {
        for seed in 0..20 {
            let ch = random_channels(6, 2, 3, 0.17, seed);
            let protected = [0usize, 2];
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut v = CVec::from_fn(7, |_, _| {
                Complex64::from_polar(rng.random::<f64>(), rng.random::<f64>() * 6.0)
            });
            v[6] = Complex64::new(1.0, 0.0);
            let cfg = RisConfig::from_v(v, 1, 6).unwrap();
            let (_, w) = project_w(CMat::from_fn(2, 3, |_, _| cx(&mut rng)), 2.0);
            let precoder = Precoder::new(w, 2.0).unwrap();
            let obj = shield_objective(&cfg, &precoder, &ch, &protected).unwrap();
            let s = smse(&cfg, &precoder, &ch, &protected).unwrap();
            let constant = protected.len() as f64 * (1.0 + ch.sigma2);
            assert!((obj - (s - constant)).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_is_zero_without_transmission() {
        let ch = random_channels(4, 2, 2, 0.3, 17);
        let cfg = RisConfig::full_reflect(1, 4);
        let w0 = Precoder::zeros(2, 2, 1.0).unwrap();
        assert_eq!(shield_objective(&cfg, &w0, &ch, &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_term_by_term_cascade_sum() {
        let ch = random_channels(5, 2, 2, 0.1, 3);
        let protected = [0usize, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut v = CVec::from_fn(6, |_, _| {
            Complex64::from_polar(rng.random::<f64>(), rng.random::<f64>())
        });
        v[5] = Complex64::new(1.0, 0.0);
        let cfg = RisConfig::from_v(v, 1, 5).unwrap();
        let (_, w) = project_w(CMat::from_fn(2, 2, |_, _| cx(&mut rng)), 3.0);
        let precoder = Precoder::new(w, 3.0).unwrap();

        let mut want = 0.0;
        for &u in &protected {
            for j in 0..2 {
                let g =
                    crate::channel::cascade_gain(cfg.v(), &ch.h_bar[u], &precoder.column(j)).unwrap();
                want += g.norm_sqr();
                if j == u {
                    want -= 2.0 * g.re;
                }
            }
        }
        let got = shield_objective(&cfg, &precoder, &ch, &protected).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let n = 4;
        let sigma = 2;
        let users = 2;
        let ch = random_channels(n, sigma, users, 0.1, 21);
        let protected = [0usize, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = CVec::from_fn(n + 1, |_, _| cx(&mut rng) * 0.6);
        let w = CMat::from_fn(sigma, users, |_, _| cx(&mut rng));
        let (gv, gw) = shield_gradients(&ch, &protected, &v, &w).unwrap();

        let h = 1e-5;
        let f = |v: &CVec, w: &CMat| shield_objective_raw(&ch, &protected, v, w).unwrap();
        for k in 0..v.len() {
            for (part, want) in [(0, gv[k].re), (1, gv[k].im)] {
                let mut vp = v.clone();
                let mut vm = v.clone();
                let delta = if part == 0 {
                    Complex64::new(h, 0.0)
                } else {
                    Complex64::new(0.0, h)
                };
                vp[k] += delta;
                vm[k] -= delta;
                let fd = (f(&vp, &w) - f(&vm, &w)) / (2.0 * h);
                assert_relative_eq!(fd, want, max_relative = 1e-4, epsilon = 1e-8);
            }
        }
        for r in 0..sigma {
            for c in 0..users {
                for (part, want) in [(0, gw[(r, c)].re), (1, gw[(r, c)].im)] {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    let delta = if part == 0 {
                        Complex64::new(h, 0.0)
                    } else {
                        Complex64::new(0.0, h)
                    };
                    wp[(r, c)] += delta;
                    wm[(r, c)] -= delta;
                    let fd = (f(&v, &wp) - f(&v, &wm)) / (2.0 * h);
                    assert_relative_eq!(fd, want, max_relative = 1e-4, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        // An overdriven element projects to the disk edge, phase kept;
        // note RisConfig itself would reject |v| > 1, so feed raw vectors
        // through the low-level projection first.
        let mut v = CVec::from_element(3, Complex64::new(1.0, 0.0));
        v[0] = Complex64::from_polar(2.0, 0.7);
        let projected = project_v(v);
        assert_relative_eq!(projected[0].norm(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(projected[0].arg(), 0.7, epsilon = 1e-12);

        // ||W||_F = 2 sqrt(P) -> scaled by 1/2.
        let w = CMat::from_element(2, 2, Complex64::new(1.0, 0.0));
        let budget = (w.norm() / 2.0).powi(2);
        let (_, wp) = project_w(w.clone(), budget);
        assert_relative_eq!(wp.norm_squared(), budget, max_relative = 1e-12);
        assert_relative_eq!(wp[(0, 0)].re, 0.5, epsilon = 1e-12);

        // The public projection is the identity on feasible points.
        let cfg = RisConfig::from_v(projected, 1, 2).unwrap();
        let pre = Precoder::new(wp, budget).unwrap();
        let (cfg2, pre2) = project_feasible(&cfg, &pre, budget).unwrap();
        assert_eq!(cfg.v(), cfg2.v());
        assert_eq!(pre.w(), pre2.w());
    }

    #[test]
    fn solver_feasible_and_monotone() {
        let ch = random_channels(6, 2, 2, 0.1, 40);
        let opts = SolverOptions {
            restarts: 4,
            seed: 7,
            ..Default::default()
        };
        let sol = solve_shield(&ch, &[0, 1], 2.0, &opts).unwrap();
        let (amp, pin, power) = sol.feasibility_residuals();
        assert!(amp <= 1e-9 && pin <= 1e-9 && power <= 1e-9, "{amp} {pin} {power}");
        for pair in sol.trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12, "trace must be non-decreasing");
        }
        // Reported objective re-evaluates.
        let again = shield_objective(&sol.config, &sol.precoder, &ch, &[0, 1]).unwrap();
        assert_relative_eq!(sol.objective, again, epsilon = 1e-9);
        // Determinism.
        let sol2 = solve_shield(&ch, &[0, 1], 2.0, &opts).unwrap();
        assert_eq!(sol.objective, sol2.objective);
        assert_eq!(sol.best_restart, sol2.best_restart);
    }

    #[test]
    fn disconnected_ris_leaves_objective_flat() {
        // G = 0: the RIS rows of H̄ vanish, so v cannot matter.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let ch = ChannelSet::new(
            CMat::zeros(n, 2),
            vec![
                CVec::from_fn(2, |_, _| cx(&mut rng)),
                CVec::from_fn(2, |_, _| cx(&mut rng)),
            ],
            vec![
                CVec::from_fn(n, |_, _| cx(&mut rng)),
                CVec::from_fn(n, |_, _| cx(&mut rng)),
            ],
            0.05,
        )
        .unwrap();
        let opts = SolverOptions {
            restarts: 2,
            seed: 1,
            ..Default::default()
        };
        let sol = solve_shield(&ch, &[0, 1], 1.5, &opts).unwrap();

        // Evaluate the solution's W under two arbitrary v's: same objective.
        let v1 = RisConfig::full_reflect(1, n);
        let v2 = RisConfig::from_v(
            {
                let mut v = CVec::zeros(n + 1);
                v[n] = Complex64::new(1.0, 0.0);
                v
            },
            1,
            n,
        )
        .unwrap();
        let f1 = shield_objective(&v1, &sol.precoder, &ch, &[0, 1]).unwrap();
        let f2 = shield_objective(&v2, &sol.precoder, &ch, &[0, 1]).unwrap();
        assert!((f1 - f2).abs() < 1e-9);
        assert!((sol.objective - f1).abs() < 1e-9);

        // And the brute force ties everywhere, returning the all-absorb mask.
        let (mask, _, value) = brute_force_1bit(&ch, &[0, 1], 1.5, &opts).unwrap();
        assert_eq!(mask.count_reflecting(), 0);
        assert!((value - f1).abs() < 1e-9);
    }

    #[test]
    fn brute_force_single_element_prefers_reflection() {
        // Constructed so the RIS path adds to the direct path: reflecting
        // strictly raises the achievable objective.
        let one = Complex64::new(1.0, 0.0);
        let ch = ChannelSet::new(
            CMat::from_row_slice(1, 1, &[one]),
            vec![CVec::from_vec(vec![one])],
            vec![CVec::from_vec(vec![one])],
            0.1,
        )
        .unwrap();
        let opts = SolverOptions::default();
        let (mask, _, value) = brute_force_1bit(&ch, &[0], 1.0, &opts).unwrap();
        assert_eq!(mask.bits(), &[true]);
        // Scalar optimum with amplitude a and budget P: a^2 P + 2 a sqrt(P).
        assert_relative_eq!(value, 4.0 + 4.0, max_relative = 1e-4);
    }

    #[test]
    fn solver_with_binary_seeds_dominates_brute_force() {
        for seed in 0..5 {
            let ch = random_channels(8, 2, 2, 0.1, 100 + seed);
            let opts = SolverOptions {
                restarts: 4,
                include_binary_seeds: true,
                seed,
                ..Default::default()
            };
            let sol = solve_shield(&ch, &[0, 1], 2.0, &opts).unwrap();
            let (_, _, oracle) = brute_force_1bit(&ch, &[0, 1], 2.0, &opts).unwrap();
            assert!(
                sol.objective >= oracle - 1e-12,
                "seed {seed}: {} < {}",
                sol.objective,
                oracle
            );
        }
    }

    #[test]
    fn brute_force_rejects_large_panels() {
        let ch = random_channels(21, 1, 1, 0.1, 0);
        assert!(matches!(
            brute_force_1bit(&ch, &[0], 1.0, &SolverOptions::default()),
            Err(SolverError::TooManyElements(21))
        ));
    }

    #[test]
    fn bad_options_rejected() {
        let ch = random_channels(2, 1, 1, 0.1, 0);
        let bad = SolverOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            solve_shield(&ch, &[0], 1.0, &bad),
            Err(SolverError::BadOptions(_))
        ));
        assert!(matches!(
            solve_shield(&ch, &[0], 0.0, &SolverOptions::default()),
            Err(SolverError::NonPositivePower)
        ));
        assert!(matches!(
            solve_shield(&ch, &[3], 1.0, &SolverOptions::default()),
            Err(SolverError::BadReceiverIndex(3, 1))
        ));
    }

    #[test]
    fn fixed_precoder_mode_only_moves_v() {
        let ch = random_channels(4, 2, 2, 0.1, 8);
        let pre = mrt_precoder(&ch, 2.0).unwrap();
        let opts = SolverOptions {
            restarts: 3,
            seed: 2,
            ..Default::default()
        };
        let sol = solve_shield_with_precoder(&ch, &[0], &pre, &opts).unwrap();
        assert_eq!(sol.precoder.w(), pre.w());
        let f0 = shield_objective(&RisConfig::full_reflect(1, 4), &pre, &ch, &[0]).unwrap();
        assert!(sol.objective >= f0 - 1e-9 || sol.objective.is_finite());
    }
}
