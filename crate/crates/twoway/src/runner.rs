//! Turns a [`RunArgs`] into shards, a penalty schedule and a finished trace.

use std::net::TcpListener;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context};
use twoway_core::cluster::InProcess;
use twoway_core::datagen::{gen_shard, gen_synthetic, gen_theta_star, split_and_shard};
use twoway_core::engine::{run, Clock, EngineConfig, Evaluation, IterationTrace, MuSchedule, NoClock};
use twoway_core::{DenseVector, LossKind, Shard};

use crate::config::{DataArgs, RunArgs, TransportArg};
use crate::libsvm::{read_libsvm_file, LabelMode};
use crate::tcp::TcpMaster;

/// Train/validation/test split fractions for file data.
pub const SPLIT: (f64, f64, f64) = (0.6, 0.2, 0.2);

/// Everything a run needs besides the algorithm settings.
#[derive(Debug, Clone)]
pub struct Problem {
    /// `shards[0]` belongs to the master.
    pub shards: Vec<Shard>,
    pub theta_star: Option<DenseVector>,
    pub validation: Option<Shard>,
    pub holdout: Option<Shard>,
}

pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn elapsed_ms(&self) -> Option<f64> {
        Some(self.0.elapsed().as_secs_f64() * 1e3)
    }
}

fn label_mode(model: LossKind) -> LabelMode {
    match model {
        LossKind::Squared => LabelMode::Regression,
        LossKind::Logistic => LabelMode::Binary,
    }
}

/// Builds the full problem. Synthetic data gets a validation shard (machine
/// index `m`) and a holdout shard (index `m + 1`) of `n` rows each.
pub fn load_problem(data: &DataArgs) -> anyhow::Result<Problem> {
    let model: LossKind = data.model.into();
    match &data.data {
        Some(path) => {
            let ds = read_libsvm_file(path, label_mode(model), None)
                .with_context(|| format!("loading {}", path.display()))?;
            let split = split_and_shard(&ds, model, SPLIT, data.m, data.seed)?;
            Ok(Problem {
                shards: split.train,
                theta_star: None,
                validation: Some(Shard::from_dataset(split.validation, model)?),
                holdout: Some(Shard::from_dataset(split.test, model)?),
            })
        }
        None => {
            let spec = data.synth_spec();
            let (shards, star) = gen_synthetic(&spec)?;
            let extra = |j: usize| gen_shard(&spec, j as u64, spec.n, &star);
            Ok(Problem {
                validation: Some(extra(spec.m)?),
                holdout: Some(extra(spec.m + 1)?),
                shards,
                theta_star: Some(star),
            })
        }
    }
}

/// The shard of one worker, regenerated or re-split from the same inputs as
/// the master.
pub fn load_worker_shard(data: &DataArgs, worker_id: u32) -> anyhow::Result<Shard> {
    let j = worker_id as usize;
    if j == 0 || j >= data.m {
        bail!("worker id must lie in 1..{}", data.m);
    }
    match &data.data {
        Some(_) => Ok(load_problem(data)?.shards.swap_remove(j)),
        None => {
            let spec = data.synth_spec();
            let star = gen_theta_star(&spec)?;
            Ok(gen_shard(&spec, j as u64, spec.n, &star)?)
        }
    }
}

pub fn schedule_for(args: &RunArgs, master: &Shard) -> anyhow::Result<MuSchedule> {
    let m = args.data.m;
    let base = MuSchedule::scaled_for(master, m, args.mu0_scale)?;
    let mu0 = args.mu0.unwrap_or(base.mu0);
    let mu_min = args.mu_min.unwrap_or(0.01 * mu0 / (m as f64).sqrt());
    Ok(MuSchedule::new(mu0, args.mu_alpha, mu_min)?)
}

pub fn engine_config(args: &RunArgs, problem: &Problem) -> anyhow::Result<EngineConfig> {
    let k = match (args.k, &problem.theta_star, &args.data.data) {
        (Some(k), _, _) => k,
        (None, Some(_), None) => 2 * args.data.s,
        _ => bail!("--k is required for file data"),
    };
    if k == 0 {
        bail!("--k must be at least 1");
    }
    let schedule = schedule_for(args, &problem.shards[0])?;
    Ok(EngineConfig::new(args.algo.into(), k, args.rounds, schedule))
}

/// Executes one run in process or as the TCP master.
pub fn execute(args: &RunArgs) -> anyhow::Result<IterationTrace> {
    if args.data.m == 0 {
        bail!("--m must be at least 1");
    }
    let problem = load_problem(&args.data)?;
    let config = engine_config(args, &problem)?;
    let eval = Evaluation {
        theta_star: problem.theta_star.as_ref(),
        holdout: problem.holdout.as_ref(),
    };
    let wall = WallClock::start();
    let clock: &dyn Clock = if args.wall_clock { &wall } else { &NoClock };

    let trace = match args.transport {
        TransportArg::Inproc => {
            let mut transport = InProcess::new(&problem.shards[1..]);
            run(&config, &problem.shards, &mut transport, &eval, clock)?
        }
        TransportArg::Tcp => {
            let addr = args
                .listen
                .as_deref()
                .ok_or_else(|| anyhow!("--transport tcp needs --listen"))?;
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            run_tcp_master(&config, &problem, &listener, args.timeout, &eval, clock)?
        }
    };
    Ok(trace)
}

pub fn run_tcp_master(
    config: &EngineConfig,
    problem: &Problem,
    listener: &TcpListener,
    timeout_s: f64,
    eval: &Evaluation<'_>,
    clock: &dyn Clock,
) -> anyhow::Result<IterationTrace> {
    let timeout = Duration::from_secs_f64(timeout_s);
    let workers = if config.algorithm.is_distributed() {
        problem.shards.len() - 1
    } else {
        0
    };
    let mut master = TcpMaster::accept(listener, workers, timeout, timeout)?;
    let trace = run(config, &problem.shards, &mut master, eval, clock)?;
    Ok(trace)
}

/// Convenience for tests and benches: a full run with all shards in memory.
pub fn run_in_process(config: &EngineConfig, problem: &Problem) -> twoway_core::Result<IterationTrace> {
    let eval = Evaluation {
        theta_star: problem.theta_star.as_ref(),
        holdout: problem.holdout.as_ref(),
    };
    let mut transport = InProcess::new(&problem.shards[1..]);
    run(config, &problem.shards, &mut transport, &eval, &NoClock)
}
