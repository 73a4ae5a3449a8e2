//! Dense tensors with a variance signature.
//!
//! Storage is row-major over `dim^rank` entries. The element type is generic
//! so the same container holds plain values (`Tensor<f64>`) and fields of
//! Taylor jets (`Tensor<Jet>`); the algebra below is implemented for `f64`.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::jet::Jet;

/// Absolute floor used when normalising residuals.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Largest accepted condition number for a metric used to move indices.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variance {
    Up,
    Down,
}

impl Variance {
    pub fn flip(self) -> Variance {
        match self {
            Variance::Up => Variance::Down,
            Variance::Down => Variance::Up,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("slot {slot} out of range for rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("slots {0} and {1} must be distinct")]
    SameSlot(usize, usize),
    #[error("contraction needs one upper and one lower slot")]
    VarianceMismatch,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("data length {found} does not match dim^rank = {expected}")]
    Length { expected: usize, found: usize },
    #[error("metric is singular or indefinite (condition estimate {condition:e})")]
    SingularMetric { condition: f64 },
    #[error("metric must be a symmetric rank-2 tensor with lower indices")]
    NotAMetric,
    #[error("invalid permutation {0:?}")]
    BadPermutation(Vec<usize>),
    #[error("tensor contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    dim: usize,
    valence: Vec<Variance>,
    data: Vec<T>,
}

/// All multi-indices of `rank` slots over `0..dim`, in storage order.
pub fn multi_indices(dim: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = dim.pow(rank as u32);
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; rank];
        for slot in (0..rank).rev() {
            idx[slot] = flat % dim;
            flat /= dim;
        }
        idx
    })
}

impl<T> Tensor<T> {
    pub fn from_vec(dim: usize, valence: Vec<Variance>, data: Vec<T>) -> Result<Self, TensorError> {
        let expected = dim.pow(valence.len() as u32);
        if data.len() != expected {
            return Err(TensorError::Length {
                expected,
                found: data.len(),
            });
        }
        Ok(Tensor { dim, valence, data })
    }

    pub fn from_fn(dim: usize, valence: Vec<Variance>, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let rank = valence.len();
        let data = multi_indices(dim, rank).map(|idx| f(&idx)).collect();
        Tensor { dim, valence, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.valence.len()
    }

    pub fn valence(&self) -> &[Variance] {
        &self.valence
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| {
            debug_assert!(i < self.dim);
            acc * self.dim + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> &T {
        &self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            dim: self.dim,
            valence: self.valence.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }

    fn check_slot(&self, slot: usize) -> Result<(), TensorError> {
        if slot >= self.rank() {
            return Err(TensorError::SlotOutOfRange { slot, rank: self.rank() });
        }
        Ok(())
    }
}

impl<T: Clone> Tensor<T> {
    /// `permute(p)[i_0..i_r] = self[i_{p[0]}..i_{p[r-1]}]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>, TensorError> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::BadPermutation(perm.to_vec()));
        }
        let valence = perm.iter().map(|&p| self.valence[p]).collect();
        let mut src = vec![0; rank];
        Ok(Tensor::from_fn(self.dim, valence, |idx| {
            for (s, &p) in perm.iter().enumerate() {
                src[s] = idx[p];
            }
            self.get(&src).clone()
        }))
    }
}

impl<T, const N: usize> Index<[usize; N]> for Tensor<T> {
    type Output = T;
    fn index(&self, idx: [usize; N]) -> &T {
        self.get(&idx)
    }
}

impl<T, const N: usize> IndexMut<[usize; N]> for Tensor<T> {
    fn index_mut(&mut self, idx: [usize; N]) -> &mut T {
        let o = self.offset(&idx);
        &mut self.data[o]
    }
}

impl Tensor<Jet> {
    /// Point values of a jet-valued tensor.
    pub fn value(&self) -> Tensor<f64> {
        self.map(Jet::value)
    }
}

fn down(rank: usize) -> Vec<Variance> {
    vec![Variance::Down; rank]
}

impl Tensor<f64> {
    pub fn zeros(dim: usize, valence: Vec<Variance>) -> Self {
        let len = dim.pow(valence.len() as u32);
        Tensor {
            dim,
            valence,
            data: vec![0.0; len],
        }
    }

    /// Rank-0 tensor.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            dim: 1,
            valence: Vec::new(),
            data: vec![value],
        }
    }

    /// All-lower tensor built from a closure.
    pub fn covariant(dim: usize, rank: usize, f: impl FnMut(&[usize]) -> f64) -> Self {
        Tensor::from_fn(dim, down(rank), f)
    }

    /// Kronecker delta as a (1,1) tensor.
    pub fn identity(dim: usize) -> Self {
        Tensor::from_fn(dim, vec![Variance::Up, Variance::Down], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn from_matrix(m: &DMatrix<f64>, valence: [Variance; 2]) -> Self {
        let n = m.nrows();
        Tensor::from_fn(n, valence.to_vec(), |i| m[(i[0], i[1])])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank(), 2, "to_matrix needs a rank-2 tensor");
        let n = self.dim;
        DMatrix::from_fn(n, n, |i, j| self[[i, j]])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| c * v)
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        assert_eq!(self.rank(), other.rank(), "rank mismatch");
        Tensor {
            dim: self.dim,
            valence: self.valence.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a - b)
    }

    /// `self + c * other` in place.
    pub fn axpy(&mut self, c: f64, other: &Tensor) {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn outer(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.rank() > 0 && other.rank() > 0 && self.dim != other.dim {
            return Err(TensorError::DimensionMismatch(self.dim, other.dim));
        }
        let dim = if self.rank() == 0 { other.dim } else { self.dim };
        let mut valence = self.valence.clone();
        valence.extend_from_slice(&other.valence);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for a in &self.data {
            data.extend(other.data.iter().map(|b| a * b));
        }
        Ok(Tensor { dim, valence, data })
    }

    /// Trace over an upper/lower slot pair.
    pub fn contract(&self, slot_a: usize, slot_b: usize) -> Result<Tensor, TensorError> {
        self.check_slot(slot_a)?;
        self.check_slot(slot_b)?;
        if slot_a == slot_b {
            return Err(TensorError::SameSlot(slot_a, slot_b));
        }
        if self.valence[slot_a] == self.valence[slot_b] {
            return Err(TensorError::VarianceMismatch);
        }
        let rank = self.rank();
        let kept: Vec<usize> = (0..rank).filter(|&s| s != slot_a && s != slot_b).collect();
        let valence: Vec<Variance> = kept.iter().map(|&s| self.valence[s]).collect();
        let mut full = vec![0; rank];
        let data: Vec<f64> = multi_indices(self.dim, kept.len())
            .map(|idx| {
                for (&s, &i) in kept.iter().zip(&idx) {
                    full[s] = i;
                }
                (0..self.dim)
                    .map(|m| {
                        full[slot_a] = m;
                        full[slot_b] = m;
                        self.get(&full)
                    })
                    .sum()
            })
            .collect();
        let dim = if valence.is_empty() { 1 } else { self.dim };
        Ok(Tensor { dim, valence, data })
    }

    /// Flips the variance of `slot` using `metric` (lowering) or
    /// `inverse_metric` (raising).
    pub fn raise_lower(&self, slot: usize, metric: &Tensor, inverse_metric: &Tensor) -> Result<Tensor, TensorError> {
        self.check_slot(slot)?;
        for m in [metric, inverse_metric] {
            if m.dim != self.dim {
                return Err(TensorError::DimensionMismatch(self.dim, m.dim));
            }
        }
        metric_condition(metric)?;
        let lowering = self.valence[slot] == Variance::Up;
        let mover = if lowering { metric } else { inverse_metric };
        let mut valence = self.valence.clone();
        valence[slot] = valence[slot].flip();
        let mut src = vec![0; self.rank()];
        Ok(Tensor::from_fn(self.dim, valence, |idx| {
            src.copy_from_slice(idx);
            (0..self.dim)
                .map(|m| {
                    src[slot] = m;
                    mover[[idx[slot], m]] * self.get(&src)
                })
                .sum()
        }))
    }

    /// `max|t - sign * permute(t)| / max|t|`, zero for the zero tensor.
    pub fn symmetry_residual(&self, perm: &[usize], sign: f64) -> Result<f64, TensorError> {
        let p = self.permute(perm)?;
        let diff = self.zip(&p, |a, b| a - sign * b).max_abs();
        Ok(diff / self.max_abs().max(RESIDUAL_FLOOR))
    }

    /// Max-abs difference normalised by the larger operand (floored).
    pub fn rel_diff(&self, other: &Tensor) -> f64 {
        let scale = self.max_abs().max(other.max_abs()).max(RESIDUAL_FLOOR);
        self.sub(other).max_abs() / scale
    }

    /// Full metric norm squared `T_{a..} T^{a..}` of an all-lower tensor.
    pub fn norm2(&self, inverse_metric: &Tensor) -> f64 {
        let mut raised = self.clone();
        for slot in 0..self.rank() {
            let mut src = vec![0; self.rank()];
            raised = Tensor::from_fn(self.dim, raised.valence.clone(), |idx| {
                src.copy_from_slice(idx);
                (0..self.dim)
                    .map(|m| {
                        src[slot] = m;
                        inverse_metric[[idx[slot], m]] * raised.get(&src)
                    })
                    .sum()
            });
        }
        raised.data.iter().zip(&self.data).map(|(a, b)| a * b).sum()
    }
}

/// Condition number of a symmetric positive definite metric, or an error.
pub fn metric_condition(metric: &Tensor) -> Result<f64, TensorError> {
    if metric.rank() != 2 || metric.symmetry_residual(&[1, 0], 1.0)? > 1e-12 {
        return Err(TensorError::NotAMetric);
    }
    if !metric.is_finite() {
        return Err(TensorError::NonFinite);
    }
    let eig = SymmetricEigen::new(metric.to_matrix());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 || hi / lo > MAX_CONDITION {
        let condition = if lo <= 0.0 { f64::INFINITY } else { hi / lo };
        return Err(TensorError::SingularMetric { condition });
    }
    Ok(hi / lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use Variance::{Down, Up};

    fn random_spd(n: usize, seed: u64) -> Tensor {
        let mut s = seed;
        let mut rnd = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n, |_, _| rnd());
        let m = &a * a.transpose() + DMatrix::identity(n, n);
        Tensor::from_matrix(&m, [Down, Down])
    }

    fn inverse(g: &Tensor) -> Tensor {
        Tensor::from_matrix(&g.to_matrix().try_inverse().unwrap(), [Up, Up])
    }

    #[test]
    fn trace_of_identity() {
        let t = Tensor::identity(4).contract(0, 1).unwrap();
        assert_eq!(t.rank(), 0);
        assert_eq!(t.data()[0], 4.0);
    }

    #[test]
    fn inverse_times_metric_is_delta() {
        let g = random_spd(4, 3);
        let gi = inverse(&g);
        let prod = gi.outer(&g).unwrap().contract(1, 2).unwrap();
        assert!(prod.rel_diff(&Tensor::identity(4)) < 1e-13);
        assert_eq!(prod.valence(), &[Up, Down]);
    }

    #[test]
    fn contraction_errors() {
        let g = random_spd(3, 1);
        assert_eq!(g.contract(0, 1), Err(TensorError::VarianceMismatch));
        assert!(matches!(g.contract(0, 2), Err(TensorError::SlotOutOfRange { .. })));
        assert!(matches!(Tensor::identity(3).contract(1, 1), Err(TensorError::SameSlot(..))));
    }

    #[test]
    fn raise_lower_round_trip() {
        let g = random_spd(4, 11);
        let gi = inverse(&g);
        let t = Tensor::from_fn(4, vec![Down, Up, Down], |i| (i[0] as f64 + 1.3).sin() * (i[1] * 3 + i[2]) as f64);
        let raised = t.raise_lower(0, &g, &gi).unwrap();
        assert_eq!(raised.valence(), &[Up, Up, Down]);
        let back = raised.raise_lower(0, &g, &gi).unwrap();
        assert!(back.rel_diff(&t) < 1e-13);
    }

    #[test]
    fn euclidean_raise_is_identity() {
        let g = Tensor::from_matrix(&DMatrix::identity(4, 4), [Down, Down]);
        let t = Tensor::covariant(4, 2, |i| (i[0] * 7 + i[1]) as f64);
        let raised = t.raise_lower(1, &g, &g.map(|v| *v)).unwrap();
        assert_eq!(raised.data(), t.data());
    }

    #[test]
    fn singular_metric_rejected() {
        let mut m = DMatrix::identity(3, 3);
        m[(2, 2)] = 1e-14;
        let g = Tensor::from_matrix(&m, [Down, Down]);
        let t = Tensor::covariant(3, 1, |_| 1.0);
        assert!(matches!(t.raise_lower(0, &g, &g), Err(TensorError::SingularMetric { .. })));
    }

    #[test]
    fn symmetry_residuals() {
        let sym = Tensor::covariant(3, 2, |i| (i[0] + i[1]) as f64);
        assert_eq!(sym.symmetry_residual(&[1, 0], 1.0).unwrap(), 0.0);
        assert_relative_eq!(sym.symmetry_residual(&[1, 0], -1.0).unwrap(), 2.0);
        let generic = Tensor::covariant(3, 2, |i| (i[0] * 3 + i[1]) as f64);
        assert!(generic.symmetry_residual(&[1, 0], 1.0).unwrap() > 0.1);
        assert_eq!(Tensor::zeros(3, down(2)).symmetry_residual(&[1, 0], 1.0).unwrap(), 0.0);
        assert!(generic.permute(&[0, 0]).is_err());
    }

    #[test]
    fn permute_moves_slots() {
        let t = Tensor::covariant(2, 4, |i| (i[0] * 8 + i[1] * 4 + i[2] * 2 + i[3]) as f64);
        let p = t.permute(&[2, 3, 0, 1]).unwrap();
        assert_eq!(p[[1, 0, 0, 1]], t[[0, 1, 1, 0]]);
        assert_eq!(p[[0, 0, 1, 1]], t[[1, 1, 0, 0]]);
    }

    #[test]
    fn norm_uses_inverse_metric() {
        let g = Tensor::from_matrix(&DMatrix::from_diagonal_element(3, 3, 2.0), [Down, Down]);
        let gi = inverse(&g);
        // |g|^2 = g^{ab} g^{cd} g_ac g_bd = n
        assert_relative_eq!(g.norm2(&gi), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn contraction_is_linear() {
        let t = Tensor::from_fn(3, vec![Up, Down, Down], |i| (i[0] + 2 * i[1] + 3 * i[2]) as f64);
        let u = Tensor::from_fn(3, vec![Up, Down, Down], |i| ((i[0] * i[1]) as f64).cos());
        let lhs = t.scale(2.0).add(&u).contract(0, 2).unwrap();
        let rhs = t.contract(0, 2).unwrap().scale(2.0).add(&u.contract(0, 2).unwrap());
        assert!(lhs.rel_diff(&rhs) < 1e-15);
    }
}
