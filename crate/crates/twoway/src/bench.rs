//! The four-algorithm comparisons on simulated and real data.
//!
//! Penalties: the centralized and local lassos each take the grid value with
//! the best validation loss (`mu_c`, `mu_l`). Both distributed methods start
//! from the local lasso at `max(mu_l, mu_c)`, since their initial estimate is
//! exactly that local solve, and halve the penalty each round down to a floor.
//! The floor is tuned per method on the validation set, ascending in
//! half-octave steps from `mu_c`, the penalty of the estimator they
//! approximate. The shifted subproblem can be unbounded below when the
//! penalty is too small for the current gradient shift (fewer local samples
//! than features, or features the master barely sees); such candidates end
//! in a solver error and are skipped.

use twoway_core::datagen::SynthSpec;
use twoway_core::engine::{lasso_mu_max, mu_grid, select_mu, Algorithm, EngineConfig, IterationTrace, MuSchedule};
use twoway_core::model::loss_value;
use twoway_core::prox::SolveSettings;
use twoway_core::{Error, Result, Shard};

use crate::config::{CovArg, DataArgs, ModelArg};
use crate::runner::{load_problem, run_in_process, Problem};

/// Grid size for validation-based penalty selection.
pub const GRID_LEN: usize = 14;

/// Most candidate floors tried for a distributed schedule.
pub const FLOOR_STEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    pub mu_central: f64,
    pub mu_local: f64,
}

pub fn tune_penalties(problem: &Problem, settings: &SolveSettings) -> Result<Penalties> {
    let validation = problem
        .validation
        .as_ref()
        .ok_or_else(|| twoway_core::Error::Config("penalty selection needs a validation set".into()))?;
    let pooled = Shard::concat(&problem.shards)?;
    let central_grid = mu_grid(lasso_mu_max(&pooled)?, GRID_LEN);
    let local_grid = mu_grid(lasso_mu_max(&problem.shards[0])?, GRID_LEN);
    Ok(Penalties {
        mu_central: select_mu(&pooled, validation, &central_grid, settings)?,
        mu_local: select_mu(&problem.shards[0], validation, &local_grid, settings)?,
    })
}

/// Schedule of a distributed method with the given floor.
pub fn distributed_schedule(p: Penalties, floor: f64) -> Result<MuSchedule> {
    MuSchedule::new(p.mu_local.max(p.mu_central).max(floor), 0.5, floor)
}

/// Engine settings for each algorithm, with both distributed floors at `mu_c`.
pub fn configs(k: usize, rounds: usize, p: Penalties) -> Result<Vec<EngineConfig>> {
    let distributed = distributed_schedule(p, p.mu_central)?;
    let central = MuSchedule::new(p.mu_central, 1.0, p.mu_central)?;
    let local = MuSchedule::new(p.mu_local, 1.0, p.mu_local)?;
    Ok(vec![
        EngineConfig::new(Algorithm::TwoWay, k, rounds, distributed),
        EngineConfig::new(Algorithm::Edsl, k, rounds, distributed),
        EngineConfig::new(Algorithm::Centralized, k, rounds, central),
        EngineConfig::new(Algorithm::Local, k, rounds, local),
    ])
}

/// Runs a distributed config with floors `mu_c·√2^i`, up to the pooled
/// `‖∇L(0)‖∞`, and keeps the run whose final estimate has the lowest
/// validation loss. Candidates whose subproblems fail to converge are
/// skipped. Once one run succeeds, the search stops after two candidates in a
/// row that do not improve on the best. If every candidate fails, the first
/// failure is returned.
pub fn tune_floor(config: &EngineConfig, problem: &Problem, p: Penalties) -> Result<IterationTrace> {
    let validation = problem
        .validation
        .as_ref()
        .ok_or_else(|| Error::Config("penalty selection needs a validation set".into()))?;
    let top = lasso_mu_max(&Shard::concat(&problem.shards)?)?;
    let mut best: Option<(f64, IterationTrace)> = None;
    let mut first_err = None;
    let mut stale = 0;
    for i in 0..FLOOR_STEPS {
        let floor = p.mu_central * core::f64::consts::SQRT_2.powi(i as i32);
        if floor > top && i > 0 {
            break;
        }
        let mut c = *config;
        c.schedule = distributed_schedule(p, floor)?;
        let improved = match run_in_process(&c, problem) {
            Ok(trace) => {
                let score = loss_value(validation, &trace.final_theta)?;
                let better = best.as_ref().is_none_or(|(b, _)| score < *b);
                if better {
                    best = Some((score, trace));
                }
                better
            }
            Err(e) if matches!(e.root(), Error::NotConverged { .. }) => {
                first_err.get_or_insert(e);
                false
            }
            Err(e) => return Err(e),
        };
        if improved {
            stale = 0;
        } else if best.is_some() {
            stale += 1;
            if stale == 2 {
                break;
            }
        }
    }
    match (best, first_err) {
        (Some((_, trace)), _) => Ok(trace),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Config("no candidate floors".into())),
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub penalties: Penalties,
    pub k: usize,
    pub traces: Vec<IterationTrace>,
}

impl Comparison {
    pub fn trace(&self, algo: Algorithm) -> &IterationTrace {
        self.traces
            .iter()
            .find(|t| t.algorithm == algo)
            .expect("every comparison runs all four algorithms")
    }

    /// Final-row ℓ2 error of `algo`, when θ* is known.
    pub fn final_l2(&self, algo: Algorithm) -> Option<f64> {
        self.trace(algo).rows.last().and_then(|r| r.l2_error)
    }

    pub fn final_misclass(&self, algo: Algorithm) -> Option<f64> {
        self.trace(algo).rows.last().and_then(|r| r.holdout_misclass)
    }
}

/// Hard-thresholding level when the sparsity is unknown: twice the support
/// of the centralized lasso at `mu_c`, capped at the dimension.
pub fn data_driven_k(problem: &Problem, p: Penalties) -> Result<usize> {
    let central = MuSchedule::new(p.mu_central, 1.0, p.mu_central)?;
    let trace = run_in_process(&EngineConfig::new(Algorithm::Centralized, 1, 0, central), problem)?;
    let d = trace.final_theta.dim();
    Ok((2 * trace.final_theta.nnz()).clamp(1, d))
}

/// Runs all four algorithms. `k = None` picks [`data_driven_k`].
pub fn compare(problem: &Problem, k: Option<usize>, rounds: usize) -> Result<Comparison> {
    let penalties = tune_penalties(problem, &SolveSettings::default())?;
    let k = match k {
        Some(k) => k,
        None => data_driven_k(problem, penalties)?,
    };
    let traces = configs(k, rounds, penalties)?
        .iter()
        .map(|c| {
            if c.algorithm.is_distributed() {
                tune_floor(c, problem, penalties)
            } else {
                run_in_process(c, problem)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { penalties, k, traces })
}

fn scaled(count: usize, scale: f64) -> usize {
    ((count as f64 * scale).round() as usize).max(1)
}

/// Simulated linear regression grid: m = 20, n = 600, d = 20000, s = 10.
/// `scale` multiplies n and d.
pub fn fig1_data(scale: f64, cov: CovArg, seed: u64) -> DataArgs {
    DataArgs {
        model: ModelArg::Linear,
        m: 20,
        n: scaled(600, scale),
        d: scaled(20_000, scale),
        s: 10,
        cov,
        noise: 1.0,
        seed,
        data: None,
    }
}

/// Simulated logistic regression grid: m = 10, n = 1000, d = 2000, s = 20.
pub fn fig2_data(scale: f64, cov: CovArg, seed: u64) -> DataArgs {
    DataArgs {
        model: ModelArg::Logistic,
        m: 10,
        n: scaled(1000, scale),
        d: scaled(2000, scale),
        s: 20,
        cov,
        noise: 1.0,
        seed,
        data: None,
    }
}

pub fn synthetic(spec: &SynthSpec) -> DataArgs {
    DataArgs {
        model: match spec.model {
            twoway_core::LossKind::Squared => ModelArg::Linear,
            twoway_core::LossKind::Logistic => ModelArg::Logistic,
        },
        m: spec.m,
        n: spec.n,
        d: spec.d,
        s: spec.s,
        cov: match spec.cov {
            twoway_core::datagen::CovKind::Ar1Half => CovArg::Ar1Half,
            twoway_core::datagen::CovKind::Ar1HalfFifth => CovArg::Ar1HalfFifth,
        },
        noise: spec.noise_sigma,
        seed: spec.seed,
        data: None,
    }
}

pub fn run_bench(data: &DataArgs, k: Option<usize>, rounds: usize) -> anyhow::Result<Comparison> {
    let problem = load_problem(data)?;
    Ok(compare(&problem, k, rounds)?)
}
