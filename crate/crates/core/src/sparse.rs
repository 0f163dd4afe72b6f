//! Dense and support-aligned sparse vectors, hard thresholding and projection.
//!
//! Indices are 0-based everywhere in this crate.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Deref;

use crate::error::{check_dim, Error, Result};

/// A finite vector in the ambient model space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(alloc::format!("non-finite entry at index {i}")));
        }
        Ok(DenseVector(values))
    }

    pub fn zeros(d: usize) -> Self {
        DenseVector(alloc::vec![0.0; d])
    }

    /// Skips the finiteness scan. Callers guarantee the invariant.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        DenseVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `supp(v)`: indices of the nonzero entries.
    pub fn support(&self) -> SupportSet {
        SupportSet {
            indices: self
                .0
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect(),
            ambient_dim: self.0.len(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    pub fn norm(&self, p: Norm) -> f64 {
        norm(self, p)
    }

    /// `self - other`, both of the same dimension.
    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        check_dim(self.dim(), other.dim())?;
        Ok(DenseVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Strictly increasing set of coordinates inside `0..ambient_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportSet {
    indices: Vec<usize>,
    ambient_dim: usize,
}

impl SupportSet {
    pub fn new(indices: Vec<usize>, ambient_dim: usize) -> Result<Self> {
        for (pos, w) in indices.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(Error::config(alloc::format!(
                    "support indices not strictly increasing at position {}",
                    pos + 1
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= ambient_dim {
                return Err(Error::config(alloc::format!(
                    "support index {last} out of range for dimension {ambient_dim}"
                )));
            }
        }
        Ok(SupportSet { indices, ambient_dim })
    }

    pub fn empty(ambient_dim: usize) -> Self {
        SupportSet {
            indices: Vec::new(),
            ambient_dim,
        }
    }

    pub fn full(ambient_dim: usize) -> Self {
        SupportSet {
            indices: (0..ambient_dim).collect(),
            ambient_dim,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.ambient_dim
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Boolean mask of length `ambient_dim`.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = alloc::vec![false; self.ambient_dim];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }
}

/// `P_S(v)` stored as values aligned with the support indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSlice {
    support: SupportSet,
    values: Vec<f64>,
}

impl SparseSlice {
    pub fn new(support: SupportSet, values: Vec<f64>) -> Result<Self> {
        check_dim(support.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite value in sparse slice"));
        }
        Ok(SparseSlice { support, values })
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn densify(&self) -> DenseVector {
        let mut out = alloc::vec![0.0; self.support.ambient_dim];
        for (&i, &v) in self.support.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        DenseVector(out)
    }
}

/// Keeps the `k` largest-magnitude entries of `v` and zeroes the rest.
///
/// Ties in magnitude keep the lower index. When `v` has at most `k` nonzeros it
/// is returned unchanged, so the result may have fewer than `k` nonzeros.
pub fn hard_threshold(v: &DenseVector, k: usize) -> DenseVector {
    if v.nnz() <= k {
        return v.clone();
    }
    let mut order: Vec<usize> = (0..v.dim()).collect();
    // Strict total order: larger magnitude first, then lower index.
    let by_rank = |a: &usize, b: &usize| -> Ordering { v.0[*b].abs().total_cmp(&v.0[*a].abs()).then_with(|| a.cmp(b)) };
    if k > 0 {
        order.select_nth_unstable_by(k - 1, by_rank);
    }
    let mut out = alloc::vec![0.0; v.dim()];
    for &i in &order[..k] {
        out[i] = v.0[i];
    }
    DenseVector(out)
}

/// Restricts `v` to the coordinates in `support`.
pub fn project(v: &DenseVector, support: &SupportSet) -> Result<SparseSlice> {
    check_dim(support.ambient_dim, v.dim())?;
    Ok(SparseSlice {
        values: support.indices.iter().map(|&i| v.0[i]).collect(),
        support: support.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L0,
    L1,
    L2,
    Linf,
}

pub fn norm(v: &[f64], p: Norm) -> f64 {
    match p {
        Norm::L0 => v.iter().filter(|x| **x != 0.0).count() as f64,
        Norm::L1 => v.iter().map(|x| x.abs()).sum(),
        Norm::L2 => libm::sqrt(v.iter().map(|x| x * x).sum()),
        Norm::Linf => v.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
