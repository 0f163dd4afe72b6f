use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use twoway::bench::{fig1_data, fig2_data, run_bench};
use twoway::config::{inject_config, manifest, CovArg, DataArgs, ModelArg, RunArgs};
use twoway::runner::{execute, load_worker_shard};
use twoway::tcp::run_worker;
use twoway::trace_csv::{self, CsvRow};

#[derive(Parser)]
#[command(
    name = "twoway",
    version,
    about = "Distributed sparse learning with two-way truncation"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the key=value manifest of a synthetic dataset.
    Gen {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run one algorithm and write its trace CSV.
    Run(Box<RunArgs>),
    /// Run all four algorithms on one dataset and write a combined CSV.
    Bench {
        #[command(subcommand)]
        figure: Figure,
    },
    /// Serve one shard to a TCP master.
    Worker {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        connect: String,
        #[arg(long)]
        worker_id: u32,
        /// Seconds to keep retrying the initial connection.
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Multiplies n and d of the simulated grid.
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    #[arg(long, value_enum, default_value = "ar1_half")]
    cov: CovArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    /// Defaults to 2s.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Figure {
    /// Simulated sparse linear regression.
    Fig1(BenchArgs),
    /// Simulated sparse logistic regression.
    Fig2(BenchArgs),
    /// LIBSVM data split 60/20/20 over m machines.
    Fig3 {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "logistic")]
        model: ModelArg,
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Defaults to twice the support of the validated centralized lasso.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn write_output(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn bench(data: &DataArgs, k: Option<usize>, rounds: usize, output: Option<&PathBuf>) -> anyhow::Result<()> {
    let cmp = run_bench(data, k, rounds)?;
    eprintln!(
        "penalties: centralized {:e}, local {:e}; k = {}",
        cmp.penalties.mu_central, cmp.penalties.mu_local, cmp.k
    );
    write_output(output, &trace_csv::to_string(&trace_csv::rows_of(&cmp.traces)))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { data, output } => {
            data.synth_spec().validate()?;
            write_output(output.as_ref(), &manifest(&data))
        }
        Command::Run(args) => {
            let trace = execute(&args)?;
            let rows: Vec<CsvRow> = trace
                .rows
                .iter()
                .map(|r| CsvRow::from_trace(trace.algorithm, r))
                .collect();
            write_output(args.output.as_ref(), &trace_csv::to_string(&rows))
        }
        Command::Bench { figure } => match figure {
            Figure::Fig1(b) | Figure::Fig2(b) if b.scale <= 0.0 => bail!("--scale must be positive"),
            Figure::Fig1(b) => {
                let data = fig1_data(b.scale, b.cov, b.seed);
                bench(&data, Some(b.k.unwrap_or(2 * data.s)), b.rounds, b.output.as_ref())
            }
            Figure::Fig2(b) => {
                let data = fig2_data(b.scale, b.cov, b.seed);
                bench(&data, Some(b.k.unwrap_or(2 * data.s)), b.rounds, b.output.as_ref())
            }
            Figure::Fig3 {
                data,
                model,
                m,
                k,
                rounds,
                seed,
                output,
            } => {
                let data = DataArgs {
                    model,
                    m,
                    n: 0,
                    d: 0,
                    s: 0,
                    cov: CovArg::Ar1Half,
                    noise: 0.0,
                    seed,
                    data: Some(data),
                };
                bench(&data, k, rounds, output.as_ref())
            }
        },
        Command::Worker {
            data,
            connect,
            worker_id,
            timeout,
        } => {
            let shard = load_worker_shard(&data, worker_id)?;
            run_worker(&connect, worker_id, &shard, Duration::from_secs_f64(timeout))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let argv = match inject_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
