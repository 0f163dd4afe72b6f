//! Loss models and per-machine data shards.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::sparse::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `½(y − u)²`, used for sparse linear regression.
    Squared,
    /// `log(1 + exp(−y·u))` with labels in {−1, +1}.
    Logistic,
}

/// Analytic constants of the scalar loss `l(y, u)` in its second argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants {
    /// Lipschitz constant of `∂l/∂u`.
    pub smoothness_l: f64,
    /// Bound on `|∂³l/∂u³|`.
    pub third_deriv_m: f64,
}

pub fn loss_constants(kind: LossKind) -> LossConstants {
    match kind {
        LossKind::Squared => LossConstants {
            smoothness_l: 1.0,
            third_deriv_m: 0.0,
        },
        // σ'(u) peaks at 1/4; |σ''(u)| peaks at √3/18 (where σ = (3 ± √3)/6).
        LossKind::Logistic => LossConstants {
            smoothness_l: 0.25,
            third_deriv_m: libm::sqrt(3.0) / 18.0,
        },
    }
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

impl LossKind {
    /// `l(y, u)`.
    pub fn value(self, y: f64, u: f64) -> f64 {
        match self {
            LossKind::Squared => 0.5 * (y - u) * (y - u),
            LossKind::Logistic => log1pexp(-y * u),
        }
    }

    /// `l(y, u + du) − l(y, u)`, computed without cancellation for small `du`.
    pub fn change(self, y: f64, u: f64, du: f64) -> f64 {
        match self {
            LossKind::Squared => du * (u - y + 0.5 * du),
            LossKind::Logistic => {
                // l(a + δ) − l(a) = ln(1 + (e^δ − 1)·σ(a)). Near −1 the product
                // loses its small part to rounding, but there the change is
                // at least ln 2 in size and the plain difference is accurate.
                let (a, delta) = (-y * u, -y * du);
                let p = if delta > 30.0 {
                    f64::INFINITY
                } else {
                    libm::expm1(delta) * sigmoid(a)
                };
                if p.is_finite() && p > -0.5 {
                    libm::log1p(p)
                } else {
                    log1pexp(a + delta) - log1pexp(a)
                }
            }
        }
    }

    /// `∂l(y, u)/∂u`.
    pub fn derivative(self, y: f64, u: f64) -> f64 {
        match self {
            LossKind::Squared => u - y,
            LossKind::Logistic => -y * sigmoid(-y * u),
        }
    }
}

/// Rows and responses without a loss attached. May be empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    d: usize,
    rows: Vec<f64>,
    responses: Vec<f64>,
}

impl Dataset {
    /// `rows` is row-major with `responses.len()` rows of width `d`.
    pub fn new(d: usize, rows: Vec<f64>, responses: Vec<f64>) -> Result<Self> {
        check_dim(responses.len() * d, rows.len())?;
        if rows.iter().chain(&responses).any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite entry in dataset"));
        }
        Ok(Dataset { d, rows, responses })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Rows selected by `order`, in that order.
    pub fn select(&self, order: &[usize]) -> Dataset {
        let mut rows = Vec::with_capacity(order.len() * self.d);
        let mut responses = Vec::with_capacity(order.len());
        for &i in order {
            rows.extend_from_slice(self.row(i));
            responses.push(self.responses[i]);
        }
        Dataset {
            d: self.d,
            rows,
            responses,
        }
    }
}

/// One machine's local data together with its loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    data: Dataset,
    loss: LossKind,
    /// Power-iteration estimate of `λ_max(XᵀX / n)`.
    gram_norm: f64,
}

impl Shard {
    pub fn new(d: usize, rows: Vec<f64>, responses: Vec<f64>, loss: LossKind) -> Result<Self> {
        Self::from_dataset(Dataset::new(d, rows, responses)?, loss)
    }

    pub fn from_dataset(data: Dataset, loss: LossKind) -> Result<Self> {
        if data.is_empty() || data.d == 0 {
            return Err(Error::config("a shard needs at least one row and one column"));
        }
        if loss == LossKind::Logistic {
            if let Some(i) = data.responses.iter().position(|y| *y != 1.0 && *y != -1.0) {
                return Err(Error::config(alloc::format!(
                    "logistic response at row {i} is not in {{-1, +1}}"
                )));
            }
        }
        let gram_norm = gram_norm_estimate(&data);
        Ok(Shard { data, loss, gram_norm })
    }

    /// Stacks shards that share a loss and a dimension.
    pub fn concat(shards: &[Shard]) -> Result<Shard> {
        let first = shards
            .first()
            .ok_or_else(|| Error::config("cannot concatenate zero shards"))?;
        let mut rows = Vec::new();
        let mut responses = Vec::new();
        for s in shards {
            check_dim(first.dim(), s.dim())?;
            if s.loss != first.loss {
                return Err(Error::config("cannot concatenate shards with different losses"));
            }
            rows.extend_from_slice(&s.data.rows);
            responses.extend_from_slice(&s.data.responses);
        }
        Shard::new(first.dim(), rows, responses, first.loss)
    }

    pub fn dim(&self) -> usize {
        self.data.d
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn responses(&self) -> &[f64] {
        &self.data.responses
    }

    /// Estimated Lipschitz constant of the gradient of the empirical loss.
    pub fn curvature_bound(&self) -> f64 {
        loss_constants(self.loss).smoothness_l * self.gram_norm
    }

    /// `max_{i,j} |x_ij|`.
    pub fn max_abs_entry(&self) -> f64 {
        self.data.rows.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
    }

    /// `out[i] = ⟨x_i, θ⟩`.
    pub(crate) fn margins_into(&self, theta: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = crate::sparse::dot(self.row(i), theta);
        }
    }

    pub(crate) fn margins(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.len()];
        self.margins_into(theta, &mut out);
        out
    }

    pub(crate) fn value_from_margins(&self, margins: &[f64]) -> f64 {
        let total: f64 = self
            .data
            .responses
            .iter()
            .zip(margins)
            .map(|(&y, &u)| self.loss.value(y, u))
            .sum();
        total / self.len() as f64
    }

    /// `L` at margins `base + delta` minus `L` at `base`.
    pub(crate) fn value_change(&self, base: &[f64], delta: &[f64]) -> f64 {
        let total: f64 = self
            .data
            .responses
            .iter()
            .zip(base.iter().zip(delta))
            .map(|(&y, (&u, &du))| self.loss.change(y, u, du))
            .sum();
        total / self.len() as f64
    }

    pub(crate) fn gradient_from_margins(&self, margins: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for (i, (&y, &u)) in self.data.responses.iter().zip(margins).enumerate() {
            let w = self.loss.derivative(y, u);
            if w != 0.0 {
                for (g, x) in out.iter_mut().zip(self.row(i)) {
                    *g += w * x;
                }
            }
        }
        let inv_n = 1.0 / self.len() as f64;
        out.iter_mut().for_each(|g| *g *= inv_n);
    }

    /// Fraction of rows whose predicted sign (`⟨x, θ⟩ ≥ 0` → +1) disagrees with the label.
    pub fn misclassification(&self, theta: &DenseVector) -> Result<f64> {
        check_dim(self.dim(), theta.dim())?;
        let wrong = self
            .margins(theta)
            .iter()
            .zip(self.responses())
            .filter(|(u, y)| (if **u >= 0.0 { 1.0 } else { -1.0 }) != **y)
            .count();
        Ok(wrong as f64 / self.len() as f64)
    }
}

fn gram_norm_estimate(data: &Dataset) -> f64 {
    let d = data.d;
    let n = data.len() as f64;
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut xv = alloc::vec![0.0; data.len()];
    let mut lambda = 0.0;
    for _ in 0..50 {
        let nv = libm::sqrt(crate::sparse::dot(&v, &v));
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        for (i, o) in xv.iter_mut().enumerate() {
            *o = crate::sparse::dot(data.row(i), &v);
        }
        let mut w = alloc::vec![0.0; d];
        for (i, &s) in xv.iter().enumerate() {
            for (wj, x) in w.iter_mut().zip(data.row(i)) {
                *wj += s * x;
            }
        }
        w.iter_mut().for_each(|x| *x /= n);
        lambda = crate::sparse::dot(&v, &w);
        v = w;
    }
    lambda
}

/// Mean loss `(1/n) Σ l(y_i, ⟨x_i, θ⟩)` over the shard.
pub fn loss_value(shard: &Shard, theta: &DenseVector) -> Result<f64> {
    check_dim(shard.dim(), theta.dim())?;
    Ok(shard.value_from_margins(&shard.margins(theta)))
}

/// Exact gradient of [`loss_value`].
pub fn loss_gradient(shard: &Shard, theta: &DenseVector) -> Result<DenseVector> {
    check_dim(shard.dim(), theta.dim())?;
    let margins = shard.margins(theta);
    let mut g = alloc::vec![0.0; shard.dim()];
    shard.gradient_from_margins(&margins, &mut g);
    Ok(DenseVector::from_vec_unchecked(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_shard(rng: &mut ChaCha8Rng, n: usize, d: usize, loss: LossKind) -> Shard {
        let rows: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let responses = (0..n)
            .map(|_| match loss {
                LossKind::Squared => rng.random_range(-2.0..2.0),
                LossKind::Logistic => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            })
            .collect();
        Shard::new(d, rows, responses, loss).unwrap()
    }

    #[test]
    fn value_examples() {
        let theta_star = DenseVector::new(vec![0.5, -1.0]).unwrap();
        let rows = vec![1.0, 2.0, -0.5, 0.25, 3.0, 1.0];
        let y: Vec<f64> = rows.chunks(2).map(|r| r[0] * 0.5 - r[1]).collect();
        let sq = Shard::new(2, rows.clone(), y, LossKind::Squared).unwrap();
        assert_eq!(loss_value(&sq, &theta_star).unwrap(), 0.0);
        assert!(loss_gradient(&sq, &theta_star).unwrap().iter().all(|g| *g == 0.0));

        let lg = Shard::new(2, rows, vec![1.0, -1.0, 1.0], LossKind::Logistic).unwrap();
        let zero = DenseVector::zeros(2);
        assert!((loss_value(&lg, &zero).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);

        let one = Shard::new(2, vec![1.0, 0.0], vec![2.0], LossKind::Squared).unwrap();
        assert_eq!(loss_value(&one, &zero).unwrap(), 2.0);
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shard = random_shard(&mut rng, 9, 4, LossKind::Logistic);
        let g = loss_gradient(&shard, &DenseVector::zeros(4)).unwrap();
        for j in 0..4 {
            let want: f64 = -(0..9).map(|i| shard.responses()[i] * shard.row(i)[j]).sum::<f64>() / 18.0;
            assert!((g[j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for loss in [LossKind::Squared, LossKind::Logistic] {
            for _ in 0..10 {
                let shard = random_shard(&mut rng, 25, 12, loss);
                let theta: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = loss_gradient(&shard, &DenseVector::new(theta.clone()).unwrap()).unwrap();
                let h = 1e-6;
                let fd: Vec<f64> = (0..12)
                    .map(|j| {
                        let mut p = theta.clone();
                        let mut m = theta.clone();
                        p[j] += h;
                        m[j] -= h;
                        let fp = loss_value(&shard, &DenseVector::new(p).unwrap()).unwrap();
                        let fm = loss_value(&shard, &DenseVector::new(m).unwrap()).unwrap();
                        (fp - fm) / (2.0 * h)
                    })
                    .collect();
                let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum();
                let scale: f64 = fd.iter().map(|b| b * b).sum();
                assert!(libm::sqrt(diff / scale) <= 1e-5, "{loss:?}");
            }
        }
    }

    #[test]
    fn convex_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for loss in [LossKind::Squared, LossKind::Logistic] {
            let shard = random_shard(&mut rng, 20, 6, loss);
            for _ in 0..200 {
                let a: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
                let b: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
                let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                let f = |v: Vec<f64>| loss_value(&shard, &DenseVector::new(v).unwrap()).unwrap();
                let fa = f(a);
                let fb = f(b);
                assert!(f(mid) <= 0.5 * (fa + fb) + 1e-12);
            }
        }
    }

    #[test]
    fn smoothness_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for loss in [LossKind::Squared, LossKind::Logistic] {
            let l = loss_constants(loss).smoothness_l;
            for _ in 0..1000 {
                let y = match loss {
                    LossKind::Squared => rng.random_range(-5.0..5.0),
                    LossKind::Logistic => {
                        if rng.random_bool(0.5) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                let u: f64 = rng.random_range(-10.0..10.0);
                let v: f64 = rng.random_range(-10.0..10.0);
                let lhs = (loss.derivative(y, u) - loss.derivative(y, v)).abs();
                assert!(lhs <= l * (u - v).abs() * (1.0 + 1e-12) + 1e-14);
            }
        }
    }

    #[test]
    fn logistic_constants_match_grid_search() {
        // max σ'(u) and max |σ''(u)| over a fine grid.
        let (mut d1, mut d2) = (0.0f64, 0.0f64);
        for i in -200_000..=200_000 {
            let u = i as f64 * 1e-4;
            let s = sigmoid(u);
            d1 = d1.max(s * (1.0 - s));
            d2 = d2.max((s * (1.0 - s) * (1.0 - 2.0 * s)).abs());
        }
        let c = loss_constants(LossKind::Logistic);
        assert!((c.smoothness_l - d1).abs() < 1e-9);
        assert!((c.third_deriv_m - d2).abs() < 1e-8);
        assert!(c.third_deriv_m <= 0.1);
        let sq = loss_constants(LossKind::Squared);
        assert_eq!((sq.smoothness_l, sq.third_deriv_m), (1.0, 0.0));
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let l = LossKind::Logistic;
        assert!((l.value(1.0, 800.0)).abs() < 1e-300);
        assert!((l.value(1.0, -800.0) - 800.0).abs() < 1e-9);
        assert!(l.derivative(-1.0, 800.0).is_finite());
    }

    #[test]
    fn shard_validation() {
        assert!(Shard::new(2, vec![1.0, 2.0], vec![0.5], LossKind::Logistic).is_err());
        assert!(Shard::new(2, vec![1.0], vec![1.0], LossKind::Squared).is_err());
        assert!(Shard::new(2, vec![], vec![], LossKind::Squared).is_err());
        let s = Shard::new(2, vec![1.0, 2.0], vec![1.0], LossKind::Squared).unwrap();
        assert!(loss_value(&s, &DenseVector::zeros(3)).is_err());
        // XᵀX for a single row [1, 2] has top eigenvalue 5.
        assert!((s.curvature_bound() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn change_examples() {
        // Squared: 0.5·(1 − 3)² − 0.5·(1 − 1)² = 2.
        assert_eq!(LossKind::Squared.change(1.0, 1.0, 2.0), 2.0);
        // Logistic at u = 0 to du = ln 3 with y = −1: ln(1 + 3) − ln 2 = ln 2.
        let got = LossKind::Logistic.change(-1.0, 0.0, libm::log(3.0));
        assert!((got - core::f64::consts::LN_2).abs() < 1e-15);
        // A tiny step keeps full relative precision where the value
        // difference would cancel to zero: dl/du = −σ(−u) = −0.5 at u = 0.
        let tiny = LossKind::Logistic.change(1.0, 0.0, 1e-20);
        assert!((tiny + 0.5e-20).abs() < 1e-34);
    }

    proptest::proptest! {
        #[test]
        fn change_agrees_with_value_difference(
            y in proptest::prop_oneof![proptest::strategy::Just(-1.0), proptest::strategy::Just(1.0)],
            u in -40.0f64..40.0,
            du in -40.0f64..40.0,
            squared in proptest::bool::ANY,
        ) {
            let loss = if squared { LossKind::Squared } else { LossKind::Logistic };
            let direct = loss.value(y, u + du) - loss.value(y, u);
            let scale = loss.value(y, u + du).abs() + loss.value(y, u).abs() + 1.0;
            proptest::prop_assert!((loss.change(y, u, du) - direct).abs() <= 1e-12 * scale);
        }
    }
}
