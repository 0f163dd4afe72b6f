//! Seeded synthetic data and deterministic train/validation/test sharding.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{sigmoid, Dataset, LossKind, Shard};
use crate::sparse::DenseVector;

/// Toeplitz covariance `Σ_ij = ρ^|i−j|` of the design rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    /// ρ = 0.5, well conditioned.
    Ar1Half,
    /// ρ = 0.5^(1/5), ill conditioned.
    Ar1HalfFifth,
}

impl CovKind {
    pub fn rho(self) -> f64 {
        match self {
            CovKind::Ar1Half => 0.5,
            CovKind::Ar1HalfFifth => libm::pow(0.5, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub cov: CovKind,
    pub model: LossKind,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.d == 0 {
            return Err(Error::config("m, n and d must be positive"));
        }
        if self.s > self.d {
            return Err(Error::config("sparsity s exceeds dimension d"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::config("noise sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

/// `θ*`: the first `s` entries i.i.d. Uniform[0, 1] (never exactly zero), rest zero.
pub fn gen_theta_star(spec: &SynthSpec) -> Result<DenseVector> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut theta = alloc::vec![0.0; spec.d];
    for t in theta.iter_mut().take(spec.s) {
        *t = loop {
            let u: f64 = rng.random();
            if u != 0.0 {
                break u;
            }
        };
    }
    Ok(DenseVector::from_vec_unchecked(theta))
}

/// `rows` samples for machine `index`, seeded with `seed ^ index`.
///
/// Rows follow the stationary AR(1) recursion `x_0 = z_0`,
/// `x_t = ρ·x_{t−1} + √(1−ρ²)·z_t`, whose covariance is exactly `ρ^|i−j|`.
pub fn gen_shard(spec: &SynthSpec, index: u64, rows: usize, theta_star: &DenseVector) -> Result<Shard> {
    spec.validate()?;
    crate::error::check_dim(spec.d, theta_star.dim())?;
    let rho = spec.cov.rho();
    let innov = libm::sqrt(1.0 - rho * rho);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ index);
    let mut data = Vec::with_capacity(rows * spec.d);
    let mut responses = Vec::with_capacity(rows);
    for _ in 0..rows {
        let start = data.len();
        let mut prev: f64 = rng.sample(StandardNormal);
        data.push(prev);
        for _ in 1..spec.d {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innov * z;
            data.push(prev);
        }
        let u = crate::sparse::dot(&data[start..], theta_star);
        let y = match spec.model {
            LossKind::Squared => {
                let eps: f64 = rng.sample(StandardNormal);
                u + spec.noise_sigma * eps
            }
            LossKind::Logistic => {
                let p: f64 = rng.random();
                if p < sigmoid(u) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        responses.push(y);
    }
    Shard::new(spec.d, data, responses, spec.model)
}

/// `m` shards of `n` rows each plus the true parameter.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<(Vec<Shard>, DenseVector)> {
    let theta_star = gen_theta_star(spec)?;
    let shards = (0..spec.m as u64)
        .map(|j| gen_shard(spec, j, spec.n, &theta_star))
        .collect::<Result<Vec<_>>>()?;
    Ok((shards, theta_star))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Shard>,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Random permutation by `seed`, then `floor(f·N)` rows each to validation and
/// test; the remainder trains and is dealt round-robin to `m` shards.
pub fn split_and_shard(
    data: &Dataset,
    loss: LossKind,
    fractions: (f64, f64, f64),
    m: usize,
    seed: u64,
) -> Result<Split> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(*f >= 0.0)) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::config("split fractions must be non-negative and sum to 1"));
    }
    if m == 0 {
        return Err(Error::config("m must be at least 1"));
    }
    let total = data.len();
    let n_val = libm::floor(fv * total as f64 + 1e-9) as usize;
    let n_test = libm::floor(fs * total as f64 + 1e-9) as usize;
    let n_train = total - n_val - n_test;
    if n_train < m {
        return Err(Error::config(alloc::format!(
            "{n_train} training rows cannot fill {m} shards"
        )));
    }

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, rest) = order.split_at(n_train);
    let (val_idx, test_idx) = rest.split_at(n_val);

    let train = (0..m)
        .map(|j| {
            let mine: Vec<usize> = train_idx.iter().skip(j).step_by(m).copied().collect();
            Shard::from_dataset(data.select(&mine), loss)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Split {
        train,
        validation: data.select(val_idx),
        test: data.select(test_idx),
    })
}
