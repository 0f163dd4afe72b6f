//! Round logic of the two-way truncated algorithm and its baselines, the
//! penalty schedule, and diagnostics tied to the convergence analysis.
//!
//! Round `h → h+1` of the distributed algorithms:
//!
//! 1. the master broadcasts `θ^h` on its support `S^h` (dense for EDSL);
//! 2. every machine returns `P_{S^h} ∇L_j(θ^h)`;
//! 3. the master averages the slices, forms the shift
//!    `P_{S^h}[avg] − ∇L_1(θ^h)`, and solves
//!    `γ^{h+1} = argmin L_1(θ) + ⟨shift, θ⟩ + μ_{h+1}‖θ‖₁`;
//! 4. `θ^{h+1} = H_k(γ^{h+1})`, `S^{h+1} = supp(θ^{h+1})`.
//!
//! EDSL is the same loop with full supports and no thresholding.

use alloc::vec::Vec;

use crate::cluster::{gather_round, BroadcastMsg, CommLedger, Transport};
use crate::error::{check_dim, Error, Result};
use crate::model::{loss_constants, loss_gradient, loss_value, Shard};
use crate::prox::{solve_shifted_l1, SolveSettings};
use crate::sparse::{hard_threshold, norm, project, DenseVector, Norm, SparseSlice, SupportSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    TwoWay,
    Edsl,
    Centralized,
    Local,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::TwoWay,
        Algorithm::Edsl,
        Algorithm::Centralized,
        Algorithm::Local,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::TwoWay => "twoway",
            Algorithm::Edsl => "edsl",
            Algorithm::Centralized => "centralized",
            Algorithm::Local => "local",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }

    pub fn is_distributed(self) -> bool {
        matches!(self, Algorithm::TwoWay | Algorithm::Edsl)
    }
}

/// Geometric decay to a floor: `μ_h = max(μ_min, μ_0·α^h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSchedule {
    pub mu0: f64,
    pub alpha: f64,
    pub mu_min: f64,
}

impl MuSchedule {
    pub fn new(mu0: f64, alpha: f64, mu_min: f64) -> Result<Self> {
        let s = MuSchedule { mu0, alpha, mu_min };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("mu decay alpha must lie in (0, 1]"));
        }
        if !(self.mu_min >= 0.0) || !self.mu0.is_finite() || !(self.mu0 >= self.mu_min) {
            return Err(Error::config("mu schedule needs mu0 >= mu_min >= 0"));
        }
        Ok(())
    }

    /// `μ_0 = ½‖∇L_1(0)‖∞`, `α = ½`, `μ_min = 0.01·μ_0/√m`.
    pub fn default_for(master: &Shard, m: usize) -> Result<Self> {
        Self::scaled_for(master, m, 0.5)
    }

    /// Same as [`MuSchedule::default_for`] with `μ_0 = scale·‖∇L_1(0)‖∞`.
    ///
    /// The initial lasso fixes which coordinates the truncated rounds can
    /// still move, so a large `μ_0` can lock weak true coordinates out.
    pub fn scaled_for(master: &Shard, m: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::config("mu0 scale must be positive"));
        }
        let mu0 = scale * lasso_mu_max(master)?;
        MuSchedule::new(mu0, 0.5, 0.01 * mu0 / libm::sqrt(m.max(1) as f64))
    }
}

/// `‖∇L(0)‖∞`: the smallest penalty for which zero is the lasso solution.
pub fn lasso_mu_max(shard: &Shard) -> Result<f64> {
    Ok(norm(
        &loss_gradient(shard, &DenseVector::zeros(shard.dim()))?,
        Norm::Linf,
    ))
}

pub fn mu_at(schedule: &MuSchedule, h: usize) -> f64 {
    let decayed = schedule.mu0 * libm::pow(schedule.alpha, h as f64);
    f64::max(schedule.mu_min, decayed)
}

/// `count` penalties halving from `top / 2` downwards.
pub fn mu_grid(top: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| top * libm::pow(0.5, i as f64)).collect()
}

/// Lasso path over a decreasing `grid` (each solve warm-started from the
/// previous one) scored by loss on `validation`. Returns the penalty with
/// the smallest validation loss; ties keep the larger penalty. The path stops
/// once the score has worsened on two consecutive grid points.
pub fn select_mu(train: &Shard, validation: &Shard, grid: &[f64], settings: &SolveSettings) -> Result<f64> {
    check_dim(train.dim(), validation.dim())?;
    let zero = DenseVector::zeros(train.dim());
    let mut warm = zero.clone();
    let mut best: Option<(f64, f64)> = None;
    let mut worse = 0;
    for &mu in grid {
        let sol = solve_shifted_l1(train, &zero, mu, &warm, settings)?;
        let score = loss_value(validation, &sol.theta)?;
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((mu, score));
            worse = 0;
        } else {
            worse += 1;
            if worse == 2 {
                break;
            }
        }
        warm = sol.theta;
    }
    best.map(|(mu, _)| mu)
        .ok_or_else(|| Error::config("empty penalty grid"))
}

/// Master-side state after round `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoState {
    pub round: usize,
    /// `θ^h = H_k(γ^h)`.
    pub theta: DenseVector,
    /// `S^h = supp(θ^h)`.
    pub support: SupportSet,
    pub mu: f64,
    /// Untruncated minimizer `γ^h`, also the warm start of the next solve.
    pub gamma: DenseVector,
}

impl AlgoState {
    fn from_gamma(round: usize, gamma: DenseVector, k: usize, mu: f64) -> Self {
        let theta = hard_threshold(&gamma, k);
        AlgoState {
            round,
            support: theta.support(),
            theta,
            mu,
            gamma,
        }
    }
}

/// Local lasso on the master's shard followed by hard thresholding.
///
/// Returns the state and the number of inner solver iterations.
pub fn init_estimate(shard1: &Shard, mu0: f64, k: usize, settings: &SolveSettings) -> Result<(AlgoState, usize)> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let d = shard1.dim();
    let zero = DenseVector::zeros(d);
    let sol = solve_shifted_l1(shard1, &zero, mu0, &zero, settings)?;
    Ok((AlgoState::from_gamma(0, sol.theta, k, mu0), sol.iterations))
}

/// Positionwise mean of `m` gradient slices sharing `support`, the master's
/// own slice included.
pub fn aggregate_gradients(slices: &[SparseSlice], support: &SupportSet, m: usize) -> Result<SparseSlice> {
    if slices.len() != m {
        return Err(Error::protocol(alloc::format!(
            "expected {m} gradient slices, got {}",
            slices.len()
        )));
    }
    let mut sum = alloc::vec![0.0; support.len()];
    for (j, slice) in slices.iter().enumerate() {
        if slice.support() != support {
            return Err(Error::protocol(alloc::format!(
                "gradient slice {j} is not aligned with the round's support"
            )));
        }
        for (acc, v) in sum.iter_mut().zip(slice.values()) {
            *acc += v;
        }
    }
    let inv = m as f64;
    SparseSlice::new(support.clone(), sum.into_iter().map(|v| v / inv).collect())
}

/// One master update from the averaged, support-restricted gradient.
pub fn master_round(
    state: &AlgoState,
    avg_grad: &SparseSlice,
    shard1: &Shard,
    mu_next: f64,
    k: usize,
    settings: &SolveSettings,
) -> Result<(AlgoState, usize)> {
    let local = loss_gradient(shard1, &state.theta)?;
    master_round_with_local(state, avg_grad, &local, shard1, mu_next, k, settings)
}

fn master_round_with_local(
    state: &AlgoState,
    avg_grad: &SparseSlice,
    local_grad: &DenseVector,
    shard1: &Shard,
    mu_next: f64,
    k: usize,
    settings: &SolveSettings,
) -> Result<(AlgoState, usize)> {
    check_dim(shard1.dim(), avg_grad.support().ambient_dim())?;
    if avg_grad.support() != &state.support && !avg_grad.support().is_full() {
        return Err(Error::protocol(
            "averaged gradient is neither on the current support nor dense",
        ));
    }
    let avg = avg_grad.densify();
    let shift = avg.sub(local_grad)?;
    let sol = solve_shifted_l1(shard1, &shift, mu_next, &state.gamma, settings)?;
    Ok((
        AlgoState::from_gamma(state.round + 1, sol.theta, k, mu_next),
        sol.iterations,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub algorithm: Algorithm,
    /// Hard-thresholding level; ignored by EDSL and the single-solve baselines.
    pub k: usize,
    pub rounds: usize,
    pub schedule: MuSchedule,
    pub settings: SolveSettings,
    /// Restrict worker gradients to `S^h`. Turning this off with `k = d`
    /// reproduces EDSL.
    pub project_gradients: bool,
}

impl EngineConfig {
    pub fn new(algorithm: Algorithm, k: usize, rounds: usize, schedule: MuSchedule) -> Self {
        EngineConfig {
            algorithm,
            k,
            rounds,
            schedule,
            settings: SolveSettings::default(),
            project_gradients: true,
        }
    }
}

/// Reference quantities for the per-round metrics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Evaluation<'a> {
    pub theta_star: Option<&'a DenseVector>,
    pub holdout: Option<&'a Shard>,
}

/// Source of elapsed wall time; `None` disables timing.
pub trait Clock {
    fn elapsed_ms(&self) -> Option<f64>;
}

pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_ms(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub l1_error: Option<f64>,
    pub l2_error: Option<f64>,
    pub holdout_loss: Option<f64>,
    /// Logistic holdout only.
    pub holdout_misclass: Option<f64>,
    pub mu: f64,
    /// Communication of the gather that produced this row; `None` for the
    /// single-solve baselines.
    pub upstream_scalars: Option<u64>,
    pub downstream_scalars: Option<u64>,
    pub inner_iters: usize,
    pub wall_ms: Option<f64>,
    pub support_size: usize,
    /// Measured support-leakage ratios of the transition into this row.
    pub tau1_hat: Option<f64>,
    pub tau2_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub algorithm: Algorithm,
    pub rows: Vec<TraceRow>,
    pub ledger: CommLedger,
    pub final_theta: DenseVector,
}

fn metrics_row(
    round: usize,
    theta: &DenseVector,
    mu: f64,
    inner_iters: usize,
    eval: &Evaluation<'_>,
    clock: &dyn Clock,
) -> Result<TraceRow> {
    let (l1_error, l2_error) = match eval.theta_star {
        Some(star) => {
            let err = theta.sub(star)?;
            (Some(norm(&err, Norm::L1)), Some(norm(&err, Norm::L2)))
        }
        None => (None, None),
    };
    let (holdout_loss, holdout_misclass) = match eval.holdout {
        Some(h) => (
            Some(loss_value(h, theta)?),
            match h.loss() {
                crate::model::LossKind::Logistic => Some(h.misclassification(theta)?),
                crate::model::LossKind::Squared => None,
            },
        ),
        None => (None, None),
    };
    Ok(TraceRow {
        round,
        l1_error,
        l2_error,
        holdout_loss,
        holdout_misclass,
        mu,
        upstream_scalars: None,
        downstream_scalars: None,
        inner_iters,
        wall_ms: clock.elapsed_ms(),
        support_size: theta.nnz(),
        tau1_hat: None,
        tau2_hat: None,
    })
}

/// Runs one algorithm and records a trace row per round.
///
/// `shards[0]` is the master's shard. The distributed algorithms reach the
/// other machines only through `transport`; `centralized` pools every shard
/// in `shards`; `local` uses `shards[0]` alone. Single-solve baselines use
/// the penalty floor `schedule.mu_min` and repeat their result on every row.
pub fn run(
    config: &EngineConfig,
    shards: &[Shard],
    transport: &mut dyn Transport,
    eval: &Evaluation<'_>,
    clock: &dyn Clock,
) -> Result<IterationTrace> {
    config.schedule.validate()?;
    config.settings.validate()?;
    let master = shards
        .first()
        .ok_or_else(|| Error::config("run needs at least the master's shard"))?;
    if let Some(star) = eval.theta_star {
        check_dim(master.dim(), star.dim())?;
    }

    match config.algorithm {
        Algorithm::TwoWay | Algorithm::Edsl => run_distributed(config, master, transport, eval, clock),
        Algorithm::Centralized => {
            let pooled = Shard::concat(shards)?;
            run_single(config, &pooled, eval, clock)
        }
        Algorithm::Local => run_single(config, master, eval, clock),
    }
}

fn run_single(
    config: &EngineConfig,
    shard: &Shard,
    eval: &Evaluation<'_>,
    clock: &dyn Clock,
) -> Result<IterationTrace> {
    let mu = config.schedule.mu_min;
    let zero = DenseVector::zeros(shard.dim());
    let sol = solve_shifted_l1(shard, &zero, mu, &zero, &config.settings).map_err(|e| e.in_round("prox_solver", 0))?;
    let first = metrics_row(0, &sol.theta, mu, sol.iterations, eval, clock)?;
    let rows = (0..=config.rounds)
        .map(|round| TraceRow { round, ..first.clone() })
        .collect();
    Ok(IterationTrace {
        algorithm: config.algorithm,
        rows,
        ledger: CommLedger::default(),
        final_theta: sol.theta,
    })
}

fn run_distributed(
    config: &EngineConfig,
    master: &Shard,
    transport: &mut dyn Transport,
    eval: &Evaluation<'_>,
    clock: &dyn Clock,
) -> Result<IterationTrace> {
    let d = master.dim();
    let m = transport.worker_count() + 1;
    let edsl = config.algorithm == Algorithm::Edsl;
    let k = if edsl { d } else { config.k };
    let project_gradients = !edsl && config.project_gradients;
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }

    let mu0 = mu_at(&config.schedule, 0);
    let (mut state, iters) =
        init_estimate(master, mu0, k, &config.settings).map_err(|e| e.in_round("prox_solver", 0))?;
    let mut rows = alloc::vec![metrics_row(0, &state.theta, mu0, iters, eval, clock)?];
    let mut ledger = CommLedger::default();

    for h in 0..config.rounds {
        let round = u32::try_from(h).map_err(|_| Error::config("too many rounds"))?;
        let comm_support = if project_gradients {
            state.support.clone()
        } else {
            SupportSet::full(d)
        };
        let broadcast = BroadcastMsg::from_support(round, &state.theta, &comm_support)?;
        let (replies, entry) =
            gather_round(transport, &broadcast, m, d, !project_gradients).map_err(|e| e.in_round("cluster", h))?;
        ledger.record(entry);

        let local_grad = loss_gradient(master, &state.theta)?;
        let mut slices = Vec::with_capacity(m);
        slices.push(project(&local_grad, &comm_support)?);
        for reply in replies {
            slices.push(SparseSlice::new(comm_support.clone(), reply.values).map_err(|e| e.in_round("cluster", h))?);
        }
        let avg = aggregate_gradients(&slices, &comm_support, m).map_err(|e| e.in_round("engine", h))?;

        let mu_next = mu_at(&config.schedule, h + 1);
        let (next, iters) = master_round_with_local(&state, &avg, &local_grad, master, mu_next, k, &config.settings)
            .map_err(|e| e.in_round("prox_solver", h + 1))?;
        debug_assert!(next.theta.nnz() <= k);

        let mut row = metrics_row(h + 1, &next.theta, mu_next, iters, eval, clock)?;
        row.upstream_scalars = Some(entry.upstream_scalars);
        row.downstream_scalars = Some(entry.downstream_scalars);
        if let Some(star) = eval.theta_star {
            let (t1, t2) = assumption3_ratios(&state.gamma, &next.gamma, &state.support, &next.support, star)?;
            row.tau1_hat = Some(t1);
            row.tau2_hat = Some(t2);
        }
        rows.push(row);
        state = next;
    }

    Ok(IterationTrace {
        algorithm: config.algorithm,
        rows,
        ledger,
        final_theta: state.theta,
    })
}

/// Constants of the convergence analysis. Used only for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    /// Restricted strong convexity constant.
    pub kappa: f64,
    pub l: f64,
    pub m: f64,
    /// `k = C1·s`.
    pub c1: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub rho: f64,
    pub delta: f64,
    pub sigma: f64,
    pub sigma_x: f64,
    /// Round from which the support-leakage bounds are assumed to hold.
    pub onset_h: usize,
}

impl TheoryParams {
    pub fn new(kappa: f64, constants: crate::model::LossConstants, c1: f64, tau1: f64, tau2: f64, delta: f64) -> Self {
        TheoryParams {
            kappa,
            l: constants.smoothness_l,
            m: constants.third_deriv_m,
            c1,
            tau1,
            tau2,
            rho: tau1 + tau2,
            delta,
            sigma: 1.0,
            sigma_x: 1.0,
            onset_h: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 1.0) {
            return Err(Error::Domain(alloc::format!("C1 = {} must exceed 1", self.c1)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Domain("kappa must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain("delta must lie in (0, 1)".into()));
        }
        if !(self.tau1 >= 0.0 && self.tau2 >= 0.0) || (self.rho - (self.tau1 + self.tau2)).abs() > 1e-12 {
            return Err(Error::Domain(
                "rho must equal tau1 + tau2 with both non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contraction {
    pub a_n: f64,
    pub b_n: f64,
    pub c2: f64,
    pub c3: f64,
}

fn bracket(tp: &TheoryParams, d: usize, n: usize) -> f64 {
    2.0 * libm::sqrt(libm::log(2.0 * d as f64 / tp.delta) / n as f64) + tp.rho
}

/// Per-round contraction factors of the ℓ1 and ℓ2 error bounds.
pub fn contraction_factors(tp: &TheoryParams, s: usize, d: usize, n: usize, xmax: f64) -> Result<Contraction> {
    tp.validate()?;
    if s == 0 || d == 0 || n == 0 {
        return Err(Error::Domain("s, d and n must be positive".into()));
    }
    let c3 = 24.0 * libm::sqrt(1.0 + 2.0 / libm::sqrt(tp.c1 - 1.0));
    let c2 = c3 * libm::sqrt(tp.c1 + 1.0);
    let common = tp.l * xmax * xmax * bracket(tp, d, n) / tp.kappa;
    Ok(Contraction {
        a_n: c2 * s as f64 * common,
        b_n: c3 * libm::sqrt(s as f64) * common,
        c2,
        c3,
    })
}

/// Penalty prescribed by the analysis for round `h+1`, given the current ℓ1
/// error and `‖(1/m)Σ∇L_j(θ*)‖∞`. Requires `θ*`, so simulation only.
pub fn theory_mu(tp: &TheoryParams, grad_at_star_inf: f64, xmax: f64, d: usize, n: usize, err_l1: f64) -> Result<f64> {
    tp.validate()?;
    Ok(4.0 * grad_at_star_inf
        + 2.0 * tp.l * xmax * xmax * bracket(tp, d, n) * err_l1
        + 2.0 * tp.m * xmax * xmax * xmax * err_l1 * err_l1)
}

/// Right-hand sides of the ℓ1 and ℓ2 error bounds after `h + 1` rounds.
pub fn error_bounds(
    tp: &TheoryParams,
    c: &Contraction,
    s: usize,
    grad_at_star_inf: f64,
    initial_err_l1: f64,
    h: usize,
) -> (f64, f64) {
    let a = c.a_n;
    let geometric = if (a - 1.0).abs() < 1e-15 {
        (h + 1) as f64
    } else {
        (1.0 - libm::pow(a, (h + 1) as f64)) / (1.0 - a)
    };
    let l1 = geometric * c.c2 * s as f64 / tp.kappa * grad_at_star_inf + libm::pow(a, (h + 1) as f64) * initial_err_l1;
    let l2 = geometric * c.c3 * libm::sqrt(s as f64) / tp.kappa * grad_at_star_inf
        + libm::pow(a, h as f64) * c.b_n * initial_err_l1;
    (l1, l2)
}

/// Measured support-leakage ratios
/// `τ̂1 = ‖(γ^h − θ*)_{(S^h)^c}‖₁ / ‖γ^h − θ*‖₁` and
/// `τ̂2 = ‖(γ^{h+1} − θ*)_{S^{h+1} \ S^h}‖₁ / ‖γ^{h+1} − θ*‖₁`.
/// A zero denominator gives a zero ratio.
pub fn assumption3_ratios(
    gamma_h: &DenseVector,
    gamma_h1: &DenseVector,
    s_h: &SupportSet,
    s_h1: &SupportSet,
    theta_star: &DenseVector,
) -> Result<(f64, f64)> {
    let e0 = gamma_h.sub(theta_star)?;
    let e1 = gamma_h1.sub(theta_star)?;
    check_dim(e0.dim(), s_h.ambient_dim())?;
    check_dim(e0.dim(), s_h1.ambient_dim())?;
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };

    let in_h = s_h.mask();
    let off: f64 = e0
        .iter()
        .zip(&in_h)
        .filter(|(_, inside)| !**inside)
        .map(|(e, _)| e.abs())
        .sum();
    let fresh: f64 = s_h1.indices().iter().filter(|&&i| !in_h[i]).map(|&i| e1[i].abs()).sum();
    Ok((ratio(off, norm(&e0, Norm::L1)), ratio(fresh, norm(&e1, Norm::L1))))
}

/// Convenience wrapper: the analytic `L` and `M` of the shard's loss.
pub fn theory_for(shard: &Shard, kappa: f64, c1: f64, tau1: f64, tau2: f64, delta: f64) -> TheoryParams {
    TheoryParams::new(kappa, loss_constants(shard.loss()), c1, tau1, tau2, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::InProcess;
    use crate::datagen::{gen_synthetic, CovKind, SynthSpec};
    use crate::model::LossKind;
    use alloc::vec;

    fn sched(mu0: f64, alpha: f64, mu_min: f64) -> MuSchedule {
        MuSchedule::new(mu0, alpha, mu_min).unwrap()
    }

    #[test]
    fn mu_schedule_examples() {
        let s = sched(0.8, 0.5, 0.1);
        assert_eq!(mu_at(&s, 0), 0.8);
        assert!((mu_at(&s, 2) - 0.2).abs() < 1e-15);
        assert_eq!(mu_at(&s, 10), 0.1);
        assert!(MuSchedule::new(0.1, 0.5, 0.2).is_err());
        assert!(MuSchedule::new(1.0, 0.0, 0.0).is_err());
        assert!(MuSchedule::new(1.0, 1.5, 0.0).is_err());
    }

    #[test]
    fn grid_and_selection() {
        assert_eq!(mu_grid(8.0, 3), vec![4.0, 2.0, 1.0]);
        // Noiseless data: less shrinkage always fits held-out rows better.
        let (shards, _) = noiseless(20, 60, 3, 2, 17);
        let grid = mu_grid(lasso_mu_max(&shards[0]).unwrap(), 6);
        let mu = select_mu(&shards[0], &shards[1], &grid, &SolveSettings::default()).unwrap();
        assert_eq!(mu, *grid.last().unwrap());
        assert!(select_mu(&shards[0], &shards[1], &[], &SolveSettings::default()).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let s = SupportSet::new(vec![1, 4], 6).unwrap();
        let a = SparseSlice::new(s.clone(), vec![1.0, 3.0]).unwrap();
        let b = SparseSlice::new(s.clone(), vec![3.0, 5.0]).unwrap();
        assert_eq!(
            aggregate_gradients(&[a.clone(), b], &s, 2).unwrap().values(),
            &[2.0, 4.0]
        );
        let same = aggregate_gradients(&[a.clone(), a.clone(), a.clone()], &s, 3).unwrap();
        assert_eq!(same, a);
        let other = SparseSlice::new(SupportSet::new(vec![1, 5], 6).unwrap(), vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            aggregate_gradients(&[a.clone(), other], &s, 2),
            Err(Error::Protocol(_))
        ));
        assert!(aggregate_gradients(&[a], &s, 2).is_err());
    }

    fn noiseless(d: usize, n: usize, s: usize, m: usize, seed: u64) -> (Vec<Shard>, DenseVector) {
        gen_synthetic(&SynthSpec {
            m,
            n,
            d,
            s,
            cov: CovKind::Ar1Half,
            model: LossKind::Squared,
            noise_sigma: 0.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn init_examples() {
        let (shards, star) = noiseless(20, 40, 2, 1, 3);
        let settings = SolveSettings::default();
        let mu_max = lasso_mu_max(&shards[0]).unwrap();
        let (st, _) = init_estimate(&shards[0], mu_max, 5, &settings).unwrap();
        assert_eq!(st.theta.nnz(), 0);
        assert!(st.support.is_empty());

        let (st, _) = init_estimate(&shards[0], 1e-4 * mu_max, 5, &settings).unwrap();
        for i in star.support().indices() {
            assert!(st.support.contains(*i));
        }
        assert_eq!(st.round, 0);
        assert_eq!(st.theta, hard_threshold(&st.gamma, 5));

        let (st, _) = init_estimate(&shards[0], 1e-4 * mu_max, 1, &settings).unwrap();
        assert!(st.theta.nnz() <= 1);
        assert!(init_estimate(&shards[0], 0.1, 0, &settings).is_err());
    }

    #[test]
    fn single_machine_round_is_a_lasso_solve() {
        let (shards, _) = noiseless(15, 30, 3, 1, 4);
        let settings = SolveSettings::default();
        let d = 15;
        let (st, _) = init_estimate(&shards[0], 0.3, d, &settings).unwrap();
        let full = SupportSet::full(d);
        let own = project(&loss_gradient(&shards[0], &st.theta).unwrap(), &full).unwrap();
        let avg = aggregate_gradients(&[own], &full, 1).unwrap();
        let (next, _) = master_round(&st, &avg, &shards[0], 0.1, d, &settings).unwrap();
        let zero = DenseVector::zeros(d);
        let lasso = solve_shifted_l1(&shards[0], &zero, 0.1, &zero, &settings).unwrap();
        for (a, b) in next.gamma.iter().zip(lasso.theta.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(next.round, 1);
    }

    #[test]
    fn rejects_misaligned_average() {
        let (shards, _) = noiseless(10, 20, 2, 1, 5);
        let settings = SolveSettings::default();
        let (st, _) = init_estimate(&shards[0], 0.01, 3, &settings).unwrap();
        let wrong = SparseSlice::new(SupportSet::empty(10), vec![]).unwrap();
        if !st.support.is_empty() {
            assert!(master_round(&st, &wrong, &shards[0], 0.01, 3, &settings).is_err());
        }
    }

    #[test]
    fn contraction_constants() {
        let tp = TheoryParams::new(1.0, loss_constants(LossKind::Squared), 5.0, 0.0, 0.0, 0.05);
        let c = contraction_factors(&tp, 10, 1000, 100, 1.0).unwrap();
        assert!((c.c3 - 24.0 * libm::sqrt(2.0)).abs() < 1e-12);
        assert!((c.c3 - 33.941_125_496_954_28).abs() < 1e-9);
        assert!((c.c2 - c.c3 * libm::sqrt(6.0)).abs() < 1e-12);
        assert!((c.c2 - 83.138_438_763_306_1).abs() < 1e-9);

        // With ρ = 0 both factors shrink like n^(-1/2).
        let big = contraction_factors(&tp, 10, 1000, 400, 1.0).unwrap();
        assert!((big.a_n - c.a_n / 2.0).abs() < 1e-12 * c.a_n);
        assert!((big.b_n - c.b_n / 2.0).abs() < 1e-12 * c.b_n);

        let bad = TheoryParams { c1: 1.0, ..tp };
        assert!(matches!(contraction_factors(&bad, 1, 1, 1, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn theory_mu_and_bounds() {
        let tp = TheoryParams::new(0.5, loss_constants(LossKind::Logistic), 2.0, 0.1, 0.1, 0.1);
        let mu = theory_mu(&tp, 0.01, 2.0, 100, 400, 0.5).unwrap();
        let br = 2.0 * libm::sqrt(libm::log(2000.0) / 400.0) + 0.2;
        let want = 0.04 + 2.0 * 0.25 * 4.0 * br * 0.5 + 2.0 * tp.m * 8.0 * 0.25;
        assert!((mu - want).abs() < 1e-12);

        let c = Contraction {
            a_n: 0.5,
            b_n: 0.25,
            c2: 1.0,
            c3: 1.0,
        };
        let (l1, l2) = error_bounds(&tp, &c, 4, 0.0, 8.0, 2);
        assert!((l1 - 1.0).abs() < 1e-12);
        assert!((l2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn assumption3_examples() {
        let star = DenseVector::new(vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let s = SupportSet::new(vec![0, 3], 4).unwrap();
        let inside = DenseVector::new(vec![1.5, 0.0, 0.0, 1.0]).unwrap();
        let (t1, t2) = assumption3_ratios(&inside, &inside, &s, &s, &star).unwrap();
        assert_eq!((t1, t2), (0.0, 0.0));

        // Error [0.5, 0, 0.25, -1]: only index 2 is off the support.
        let leak = DenseVector::new(vec![1.5, 0.0, 0.25, 1.0]).unwrap();
        let (t1, _) = assumption3_ratios(&leak, &leak, &s, &s, &star).unwrap();
        assert!((t1 - 0.25 / 1.75).abs() < 1e-15);

        let s1 = SupportSet::new(vec![0, 2, 3], 4).unwrap();
        let (_, t2) = assumption3_ratios(&leak, &leak, &s, &s1, &star).unwrap();
        assert!((t2 - 0.25 / 1.75).abs() < 1e-15);

        let (t1, t2) = assumption3_ratios(&star, &star, &s, &s1, &star).unwrap();
        assert_eq!((t1, t2), (0.0, 0.0));
    }

    fn cfg(algorithm: Algorithm, k: usize, rounds: usize, schedule: MuSchedule) -> EngineConfig {
        EngineConfig::new(algorithm, k, rounds, schedule)
    }

    #[test]
    fn zero_rounds_gives_one_row() {
        let (shards, star) = noiseless(30, 40, 3, 3, 6);
        let mut t = InProcess::new(&shards[1..]);
        let eval = Evaluation {
            theta_star: Some(&star),
            holdout: None,
        };
        let trace = run(
            &cfg(Algorithm::TwoWay, 6, 0, sched(0.5, 0.5, 0.01)),
            &shards,
            &mut t,
            &eval,
            &NoClock,
        )
        .unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert!(trace.ledger.entries().is_empty());
    }

    #[test]
    fn edsl_on_one_machine_matches_centralized() {
        let spec = SynthSpec {
            m: 1,
            n: 60,
            d: 40,
            s: 4,
            cov: CovKind::Ar1Half,
            model: LossKind::Squared,
            noise_sigma: 0.5,
            seed: 8,
        };
        let (shards, star) = gen_synthetic(&spec).unwrap();
        let eval = Evaluation {
            theta_star: Some(&star),
            holdout: None,
        };
        let schedule = sched(0.4, 0.5, 0.05);
        for rounds in [0, 1, 3, 6] {
            let mut t = InProcess::new(&[]);
            let edsl = run(
                &cfg(Algorithm::Edsl, 1, rounds, schedule),
                &shards,
                &mut t,
                &eval,
                &NoClock,
            )
            .unwrap();
            let fixed = MuSchedule::new(mu_at(&schedule, rounds), 1.0, mu_at(&schedule, rounds)).unwrap();
            let cent = run(
                &cfg(Algorithm::Centralized, 1, 0, fixed),
                &shards,
                &mut t,
                &eval,
                &NoClock,
            )
            .unwrap();
            let gap = norm(&edsl.final_theta.sub(&cent.final_theta).unwrap(), Norm::Linf);
            assert!(gap <= 1e-6, "rounds {rounds}: gap {gap}");
        }
    }

    #[test]
    fn cardinality_and_support_invariants() {
        let spec = SynthSpec {
            m: 4,
            n: 50,
            d: 120,
            s: 5,
            cov: CovKind::Ar1HalfFifth,
            model: LossKind::Logistic,
            noise_sigma: 0.0,
            seed: 12,
        };
        let (shards, star) = gen_synthetic(&spec).unwrap();
        let eval = Evaluation {
            theta_star: Some(&star),
            holdout: None,
        };
        let mut t = InProcess::new(&shards[1..]);
        let schedule = MuSchedule::default_for(&shards[0], 4).unwrap();
        let trace = run(
            &cfg(Algorithm::TwoWay, 8, 5, schedule),
            &shards,
            &mut t,
            &eval,
            &NoClock,
        )
        .unwrap();
        assert_eq!(trace.rows.len(), 6);
        for (h, row) in trace.rows.iter().enumerate() {
            assert_eq!(row.round, h);
            assert!(row.support_size <= 8);
        }
        for (entry, row) in trace.ledger.entries().iter().zip(&trace.rows) {
            // Row h broadcast |S^h|: 3 workers × |S^h| scalars upstream.
            assert_eq!(entry.upstream_scalars, 3 * row.support_size as u64);
            assert_eq!(entry.downstream_scalars, 6 * row.support_size as u64);
        }
    }

    #[test]
    fn twoway_without_truncation_is_edsl() {
        let spec = SynthSpec {
            m: 3,
            n: 40,
            d: 25,
            s: 3,
            cov: CovKind::Ar1Half,
            model: LossKind::Squared,
            noise_sigma: 0.3,
            seed: 21,
        };
        let (shards, star) = gen_synthetic(&spec).unwrap();
        let eval = Evaluation {
            theta_star: Some(&star),
            holdout: None,
        };
        let schedule = sched(0.3, 0.5, 0.02);
        let mut t = InProcess::new(&shards[1..]);
        let edsl = run(&cfg(Algorithm::Edsl, 5, 4, schedule), &shards, &mut t, &eval, &NoClock).unwrap();
        let mut open = cfg(Algorithm::TwoWay, 25, 4, schedule);
        open.project_gradients = false;
        let tw = run(&open, &shards, &mut t, &eval, &NoClock).unwrap();
        assert_eq!(edsl.rows, tw.rows);
        assert_eq!(edsl.ledger, tw.ledger);
        assert_eq!(edsl.final_theta, tw.final_theta);
    }

    #[test]
    fn baselines_replicate_rows() {
        let (shards, star) = noiseless(30, 40, 3, 3, 13);
        let eval = Evaluation {
            theta_star: Some(&star),
            holdout: Some(&shards[2]),
        };
        let mut t = InProcess::new(&shards[1..]);
        for algo in [Algorithm::Centralized, Algorithm::Local] {
            let trace = run(
                &cfg(algo, 6, 4, sched(0.5, 0.5, 0.01)),
                &shards,
                &mut t,
                &eval,
                &NoClock,
            )
            .unwrap();
            assert_eq!(trace.rows.len(), 5);
            for row in &trace.rows[1..] {
                assert_eq!(row.l2_error, trace.rows[0].l2_error);
                assert_eq!(row.upstream_scalars, None);
                assert_eq!(row.mu, 0.01);
            }
            assert!(trace.rows[0].holdout_loss.is_some());
            assert!(trace.rows[0].holdout_misclass.is_none());
        }
    }

    #[test]
    fn solver_failure_names_module_and_round() {
        let (shards, _) = noiseless(30, 40, 3, 2, 14);
        let mut t = InProcess::new(&shards[1..]);
        let mut c = cfg(Algorithm::TwoWay, 6, 3, sched(0.5, 0.5, 1e-6));
        c.settings.max_inner_iters = 1;
        let err = run(&c, &shards, &mut t, &Evaluation::default(), &NoClock).unwrap_err();
        assert!(
            matches!(
                err,
                Error::InRound {
                    module: "prox_solver",
                    round: 0,
                    ..
                }
            ),
            "{err:?}"
        );
    }
}
