//! Run configuration and its sources. Precedence: command-line flags, then a
//! flat `key=value` file (keys are the flag names without dashes), then
//! defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use twoway_core::datagen::{CovKind, SynthSpec};
use twoway_core::engine::Algorithm;
use twoway_core::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Twoway,
    Edsl,
    Centralized,
    Local,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Twoway => Algorithm::TwoWay,
            AlgoArg::Edsl => Algorithm::Edsl,
            AlgoArg::Centralized => Algorithm::Centralized,
            AlgoArg::Local => Algorithm::Local,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Linear,
    Logistic,
}

impl From<ModelArg> for LossKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Linear => LossKind::Squared,
            ModelArg::Logistic => LossKind::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    #[value(name = "ar1_half")]
    Ar1Half,
    #[value(name = "ar1_half_fifth")]
    Ar1HalfFifth,
}

impl From<CovArg> for CovKind {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Ar1Half => CovKind::Ar1Half,
            CovArg::Ar1HalfFifth => CovKind::Ar1HalfFifth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportArg {
    Inproc,
    Tcp,
}

/// Data source shared by `gen`, `run`, `worker` and the benches.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "linear")]
    pub model: ModelArg,
    /// Number of machines, master included.
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Samples per machine (synthetic data).
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub d: usize,
    /// Nonzeros of the true parameter (synthetic data).
    #[arg(long, default_value_t = 5)]
    pub s: usize,
    #[arg(long, value_enum, default_value = "ar1_half")]
    pub cov: CovArg,
    /// Standard deviation of the linear-model noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// LIBSVM file; replaces the synthetic generator and is split 60/20/20.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

impl DataArgs {
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            m: self.m,
            n: self.n,
            d: self.d,
            s: self.s,
            cov: self.cov.into(),
            model: self.model.into(),
            noise_sigma: self.noise,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "twoway")]
    pub algo: AlgoArg,
    /// Hard-thresholding level; defaults to 2s on synthetic data.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    /// Initial penalty; overrides --mu0-scale.
    #[arg(long)]
    pub mu0: Option<f64>,
    /// Initial penalty as a multiple of the master's ‖∇L(0)‖∞.
    #[arg(long, default_value_t = 0.5)]
    pub mu0_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    pub mu_alpha: f64,
    /// Penalty floor; defaults to 0.01·mu0/√m.
    #[arg(long)]
    pub mu_min: Option<f64>,
    #[arg(long, value_enum, default_value = "inproc")]
    pub transport: TransportArg,
    /// Master address in TCP mode.
    #[arg(long)]
    pub listen: Option<String>,
    /// Master address a worker connects to.
    #[arg(long)]
    pub connect: Option<String>,
    /// Seconds to wait for workers to connect and for each round's replies.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    /// Record elapsed milliseconds in the wall_ms column.
    #[arg(long)]
    pub wall_clock: bool,
    /// Trace CSV destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected key=value")]
    Syntax { path: String, line: usize },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Parses a flat config file into `(key, value)` pairs. `#` starts a comment.
pub fn parse_config(text: &str, path: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
            path: path.to_string(),
            line: i + 1,
        })?;
        let key = k.trim();
        if key.is_empty() || key.starts_with('-') {
            return Err(ConfigError::Syntax {
                path: path.to_string(),
                line: i + 1,
            });
        }
        pairs.push((key.replace('_', "-"), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Rewrites `argv` so that settings from every `--config FILE` come right
/// after the subcommand path and before the user's own flags. With clap's
/// `args_override_self`, later occurrences win, which yields the precedence
/// flags > file > defaults. Boolean keys take `true`/`false`.
pub fn inject_config(argv: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let mut files = Vec::new();
    let mut rest = Vec::new();
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            if let Some(p) = it.next() {
                files.push(p);
            }
        } else if let Some(p) = a.strip_prefix("--config=") {
            files.push(p.to_string());
        } else {
            rest.push(a);
        }
    }
    if files.is_empty() {
        return Ok(rest);
    }
    let mut injected = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(Path::new(path)).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        for (k, v) in parse_config(&text, path)? {
            match v.as_str() {
                "true" => injected.push(format!("--{k}")),
                "false" => {}
                _ => {
                    injected.push(format!("--{k}"));
                    injected.push(v);
                }
            }
        }
    }
    // Subcommand path: leading tokens before the first flag.
    let split = rest.iter().position(|a| a.starts_with('-')).unwrap_or(rest.len());
    let mut out: Vec<String> = rest[..split].to_vec();
    out.extend(injected);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}

/// The `key=value` manifest written by `gen`; it can be fed back as `--config`.
pub fn manifest(data: &DataArgs) -> String {
    let model = data
        .model
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    let cov = data
        .cov
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    format!(
        "model={model}\nm={}\nn={}\nd={}\ns={}\ncov={cov}\nnoise={}\nseed={}\n",
        data.m, data.n, data.d, data.s, data.noise, data.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let pairs = parse_config("# comment\nm = 8\n\nmu_alpha=0.25 # note\nwall-clock=true\n", "f").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("m".to_string(), "8".to_string()),
                ("mu-alpha".to_string(), "0.25".to_string()),
                ("wall-clock".to_string(), "true".to_string()),
            ]
        );
        assert!(matches!(
            parse_config("m 8", "f"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn injection_places_file_before_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "m=8\nrounds=3\nwall-clock=false\n").unwrap();
        let argv: Vec<String> = ["twoway", "run", "--rounds", "5", "--config", path.to_str().unwrap()]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = inject_config(argv).unwrap();
        assert_eq!(out, ["twoway", "run", "--m", "8", "--rounds", "3", "--rounds", "5"]);
    }
}
