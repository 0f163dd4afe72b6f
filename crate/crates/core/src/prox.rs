//! Solver for the master's subproblem
//!
//! ```text
//! minimize  L(θ) + ⟨shift, θ⟩ + μ‖θ‖₁
//! ```
//!
//! where `L` is the empirical loss of one shard. A zero shift gives the plain
//! lasso used for initialization. The method is accelerated proximal gradient
//! with soft-thresholding, backtracking on the step size and a momentum
//! restart whenever a step would raise the objective, so accepted iterates
//! never increase the objective. Objective changes are accumulated sample by
//! sample rather than as a difference of two totals, which keeps the descent
//! test meaningful down to KKT residuals near 1e-8 on large shards.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::model::Shard;
use crate::sparse::{dot, norm, DenseVector, Norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    /// Target for the ℓ∞ KKT residual.
    pub tol: f64,
    pub max_inner_iters: usize,
    /// Step-size shrink factor used by backtracking, in (0, 1).
    pub step_backtrack_factor: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tol: 1e-8,
            max_inner_iters: 10_000,
            step_backtrack_factor: 0.5,
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config("solver tolerance must be positive"));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::config("max_inner_iters must be at least 1"));
        }
        if !(self.step_backtrack_factor > 0.0 && self.step_backtrack_factor < 1.0) {
            return Err(Error::config("step_backtrack_factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: DenseVector,
    /// KKT residual at `theta`, as computed by [`optimality_residual`].
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Residual of the KKT conditions given the loss gradient `g` at `theta`.
fn kkt_residual(g: &[f64], shift: &[f64], mu: f64, theta: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for ((&gi, &si), &ti) in g.iter().zip(shift).zip(theta) {
        let s = gi + si;
        let r = if ti > 0.0 {
            (s + mu).abs()
        } else if ti < 0.0 {
            (s - mu).abs()
        } else {
            f64::max(0.0, s.abs() - mu)
        };
        worst = worst.max(r);
    }
    worst
}

/// ℓ∞ violation of the optimality conditions of the shifted ℓ1 problem at `theta`.
///
/// Coordinates with `θ_i ≠ 0` contribute `|g_i + shift_i + μ·sign(θ_i)|`, zero
/// coordinates contribute `max(0, |g_i + shift_i| − μ)`.
pub fn optimality_residual(shard: &Shard, shift: &DenseVector, mu: f64, theta: &DenseVector) -> Result<f64> {
    check_dim(shard.dim(), shift.dim())?;
    check_dim(shard.dim(), theta.dim())?;
    let margins = shard.margins(theta);
    let mut g = alloc::vec![0.0; shard.dim()];
    shard.gradient_from_margins(&margins, &mut g);
    Ok(kkt_residual(&g, shift, mu, theta))
}

/// `L(θ) + ⟨shift, θ⟩ + μ‖θ‖₁`.
pub fn objective(shard: &Shard, shift: &DenseVector, mu: f64, theta: &DenseVector) -> Result<f64> {
    check_dim(shard.dim(), shift.dim())?;
    check_dim(shard.dim(), theta.dim())?;
    let f = shard.value_from_margins(&shard.margins(theta));
    Ok(f + dot(shift, theta) + mu * norm(theta, Norm::L1))
}

pub fn solve_shifted_l1(
    shard: &Shard,
    shift: &DenseVector,
    mu: f64,
    warm: &DenseVector,
    settings: &SolveSettings,
) -> Result<Solution> {
    solve_shifted_l1_observed(shard, shift, mu, warm, settings, |_| {})
}

/// Like [`solve_shifted_l1`], calling `observer` with the objective of every
/// accepted iterate (the warm start included).
pub fn solve_shifted_l1_observed(
    shard: &Shard,
    shift: &DenseVector,
    mu: f64,
    warm: &DenseVector,
    settings: &SolveSettings,
    mut observer: impl FnMut(f64),
) -> Result<Solution> {
    settings.validate()?;
    let d = shard.dim();
    check_dim(d, shift.dim())?;
    check_dim(d, warm.dim())?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::config("mu must be finite and non-negative"));
    }

    let n = shard.len();
    let composite = |f: f64, theta: &[f64]| f + dot(shift, theta) + mu * norm(theta, Norm::L1);
    // Change of the non-smooth and linear parts from `from` to `to`,
    // accumulated coordinate by coordinate so that it stays accurate when
    // the two points are close.
    let rest_diff = |to: &[f64], from: &[f64]| -> f64 {
        to.iter()
            .zip(from)
            .zip(shift.iter())
            .map(|((t, f), s)| s * (t - f) + mu * (t.abs() - f.abs()))
            .sum()
    };
    let tiny = |scale: f64| 16.0 * f64::EPSILON * scale;

    // Accepted iterate x with its margins and loss gradient.
    let mut x: Vec<f64> = warm.to_vec();
    let mut mx = shard.margins(&x);
    let mut gx = alloc::vec![0.0; d];
    shard.gradient_from_margins(&mx, &mut gx);
    observer(composite(shard.value_from_margins(&mx), &x));

    let finish = |x: Vec<f64>, mx: &[f64], residual: f64, iterations: usize| Solution {
        objective: composite(shard.value_from_margins(mx), &x),
        theta: DenseVector::from_vec_unchecked(x),
        residual,
        iterations,
    };

    let mut residual = kkt_residual(&gx, shift, mu, &x);
    if residual <= settings.tol {
        return Ok(finish(x, &mx, residual, 0));
    }

    let mut step = 1.0 / shard.curvature_bound().max(1e-12);
    let mut momentum_t = 1.0f64;

    // Extrapolated point y. Its margins are tracked as `my = mx + ey` with the
    // increment `ey` kept separately, and likewise every trial step carries
    // its own margin increment, so that loss changes are computed from
    // increments rather than as differences of nearly equal margins.
    let mut y = x.clone();
    let mut my = mx.clone();
    let mut ey = alloc::vec![0.0; n];
    let mut gy = gx.clone();
    let mut y_is_x = true;

    let mut z = alloc::vec![0.0; d];
    let mut diff = alloc::vec![0.0; d];
    let mut dz = alloc::vec![0.0; n];
    let mut du = alloc::vec![0.0; n];

    for iter in 1..=settings.max_inner_iters {
        // Backtracking on the quadratic upper model around y.
        loop {
            for i in 0..d {
                z[i] = soft_threshold(y[i] - step * (gy[i] + shift[i]), step * mu);
                diff[i] = z[i] - y[i];
            }
            shard.margins_into(&diff, &mut dz);
            let rise = shard.value_change(&my, &dz);
            let linear = dot(&gy, &diff);
            let quad = dot(&diff, &diff) / (2.0 * step);
            if rise <= linear + quad + tiny(linear.abs() + quad) {
                break;
            }
            step *= settings.step_backtrack_factor;
            if step < 1e-300 {
                return Err(Error::NotConverged {
                    iterations: iter,
                    residual,
                });
            }
        }

        for i in 0..n {
            du[i] = ey[i] + dz[i];
        }
        let change = shard.value_change(&mx, &du) + rest_diff(&z, &x);
        if change > 0.0 {
            if !y_is_x {
                // Restart momentum from the last accepted iterate.
                y.copy_from_slice(&x);
                my.copy_from_slice(&mx);
                ey.iter_mut().for_each(|e| *e = 0.0);
                gy.copy_from_slice(&gx);
                y_is_x = true;
                momentum_t = 1.0;
                continue;
            }
            // A plain proximal step cannot increase the objective unless the
            // step is too long for rounding; shorten it.
            step *= settings.step_backtrack_factor;
            continue;
        }

        // Accept z. Afterwards z holds the previous iterate.
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
        let beta = (momentum_t - 1.0) / t_next;
        momentum_t = t_next;

        core::mem::swap(&mut x, &mut z);
        if iter % 64 == 0 {
            // Drop the drift accumulated by the incremental updates.
            shard.margins_into(&x, &mut mx);
        } else {
            for i in 0..n {
                mx[i] += du[i];
            }
        }
        shard.gradient_from_margins(&mx, &mut gx);
        observer(composite(shard.value_from_margins(&mx), &x));

        residual = kkt_residual(&gx, shift, mu, &x);
        if residual <= settings.tol {
            return Ok(finish(x, &mx, residual, iter));
        }

        if beta == 0.0 {
            y.copy_from_slice(&x);
            my.copy_from_slice(&mx);
            ey.iter_mut().for_each(|e| *e = 0.0);
            gy.copy_from_slice(&gx);
            y_is_x = true;
        } else {
            for i in 0..d {
                y[i] = x[i] + beta * (x[i] - z[i]);
            }
            for i in 0..n {
                ey[i] = beta * du[i];
                my[i] = mx[i] + ey[i];
            }
            shard.gradient_from_margins(&my, &mut gy);
            y_is_x = false;
        }
    }

    Err(Error::NotConverged {
        iterations: settings.max_inner_iters,
        residual,
    })
}
