//! Dense row-major tensors, flat gradient vectors and finite differences.
//!
//! Every reduction in this module accumulates strictly left to right so that
//! two runs over the same inputs are bit-identical.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense n-dimensional array stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from external data, rejecting shape mismatches and
    /// non-finite elements.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let tensor = Self::from_parts(shape, data)?;
        if let Some(pos) = tensor.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {pos} is {}", tensor.data[pos])));
        }
        Ok(tensor)
    }

    /// Builds a tensor checking only that the shape covers the data.
    pub fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) && !data.is_empty() {
            return Err(Error::Dimension(format!("shape {shape:?} has a zero dimension")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!("shape {shape:?} needs {expected} elements, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![T::zero(); len] }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::from_parts(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension, i.e. the number of examples in a batch tensor.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per leading-dimension slice.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.row_len();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::from_parts(shape, self.data)
    }

    /// Gathers the given rows (repeats allowed) into a new tensor.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let n = self.rows();
        let w = self.row_len();
        let mut data = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            if r >= n {
                return Err(Error::Dimension(format!("row {r} out of range for {n} rows")));
            }
            data.extend_from_slice(self.row(r));
        }
        let mut shape = self.shape.clone();
        if shape.is_empty() {
            return Err(Error::Dimension("cannot select rows of a rank-0 tensor".into()));
        }
        shape[0] = rows.len();
        Ok(Self { shape, data })
    }

    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        tensor_matmul(self, rhs)
    }
}

/// Rank-2 matrix product with a fixed `k = 0..K` accumulation order per
/// output element.
pub fn tensor_matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Dimension(format!("matmul needs rank-2 operands, got {:?} and {:?}", a.shape, b.shape)));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::Dimension(format!("matmul inner dimensions differ: {:?} x {:?}", a.shape, b.shape)));
    }
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let mut acc = T::zero();
            for (p, &av) in arow.iter().enumerate() {
                acc += av * b.data[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Ok(Tensor { shape: vec![m, n], data: out })
}

/// Identifies one model's flat parameter ordering.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutId(pub u64);

impl LayoutId {
    /// FNV-1a over a textual layout description.
    pub fn from_description(desc: &str) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in desc.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        LayoutId(h)
    }

    pub fn of_shape(shape: &[usize]) -> Self {
        Self::from_description(&format!("free{shape:?}"))
    }
}

impl fmt::Debug for LayoutId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LayoutId({:016x})", self.0)
    }
}

/// Supported norm orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    Inf,
}

impl Norm {
    pub fn from_order(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(Norm::L1)
        } else if p == 2.0 {
            Ok(Norm::L2)
        } else if p.is_infinite() && p > 0.0 {
            Ok(Norm::Inf)
        } else {
            Err(Error::Invalid(format!("norm order {p} unsupported; use 1, 2 or inf")))
        }
    }
}

/// Flat gradient aligned with a model's parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector<T: Scalar> {
    values: Vec<T>,
    layout: LayoutId,
}

impl<T: Scalar> GradientVector<T> {
    pub fn new(values: Vec<T>, layout: LayoutId) -> Self {
        Self { values, layout }
    }

    pub fn zeros(len: usize, layout: LayoutId) -> Self {
        Self { values: vec![T::zero(); len], layout }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn layout(&self) -> LayoutId {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self, p: Norm) -> Result<T> {
        grad_norm(self, p)
    }

    fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Layout { expected: self.layout, actual: other.layout });
        }
        if self.len() != other.len() {
            return Err(Error::Dimension(format!("gradient lengths differ: {} vs {}", self.len(), other.len())));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_aligned(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect();
        Ok(Self { values, layout: self.layout })
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_aligned(other)?;
        let mut acc = T::zero();
        for (&a, &b) in self.values.iter().zip(&other.values) {
            acc += a * b;
        }
        Ok(acc)
    }

    /// Cosine similarity; zero when either vector vanishes.
    pub fn cosine(&self, other: &Self) -> Result<T> {
        let dot = self.dot(other)?;
        let na = self.norm(Norm::L2)?;
        let nb = other.norm(Norm::L2)?;
        if na == T::zero() || nb == T::zero() {
            return Ok(T::zero());
        }
        Ok(dot / (na * nb))
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: T, other: &Self) -> Result<()> {
        self.check_aligned(other)?;
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: T) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }
}

/// p-norm of a gradient for p in {1, 2, inf}.
pub fn grad_norm<T: Scalar>(g: &GradientVector<T>, p: Norm) -> Result<T> {
    if let Some(pos) = g.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {pos}")));
    }
    let out = match p {
        Norm::L1 => g.values.iter().fold(T::zero(), |acc, v| acc + v.abs()),
        Norm::Inf => g.values.iter().fold(T::zero(), |acc, v| acc.max(v.abs())),
        Norm::L2 => {
            // scaled sum of squares avoids overflow for large entries
            let scale = g.values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
            if scale == T::zero() {
                T::zero()
            } else {
                let ss = g.values.iter().fold(T::zero(), |acc, &v| {
                    let r = v / scale;
                    acc + r * r
                });
                scale * ss.sqrt()
            }
        }
    };
    Ok(out)
}

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
pub fn finite_diff_gradient<T, F>(f: F, x: &Tensor<T>, h: T) -> Result<GradientVector<T>>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<T>,
{
    if !(h > T::zero()) {
        return Err(Error::Invalid("finite-difference step must be positive".into()));
    }
    let mut probe = x.clone();
    let two_h = h + h;
    let mut values = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let up = f(&probe)?;
        probe.data[i] = orig - h;
        let down = f(&probe)?;
        probe.data[i] = orig;
        values.push((up - down) / two_h);
    }
    Ok(GradientVector::new(values, LayoutId::of_shape(x.shape())))
}

/// `‖a − b‖₂ / max(‖b‖₂, floor)`, the comparison used for gradient checks.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T], floor: T) -> T {
    let mut diff = T::zero();
    let mut base = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        base += y * y;
    }
    diff.sqrt() / base.sqrt().max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul_is_noop() {
        let a = Tensor::<f64>::identity(2);
        let b = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap(), b);
    }

    #[test]
    fn row_times_column() {
        let a = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::<f64>::zeros(vec![2, 3]);
        let b = Tensor::<f64>::zeros(vec![2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = crate::rng::StreamRng::new(7, 0);
        let a: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let ta = Tensor::matrix(5, 4, a.clone()).unwrap();
        let tb = Tensor::matrix(4, 3, b.clone()).unwrap();
        let c = ta.matmul(&tb).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a[i * 4 + k] * b[k * 3 + j];
                }
                assert_eq!(c.data()[i * 3 + j], s);
            }
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        assert!(matches!(Tensor::new(vec![2], vec![1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(Tensor::new(vec![3], vec![1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn norms() {
        let l = LayoutId(1);
        let g = GradientVector::new(vec![3.0, 4.0], l);
        assert_eq!(g.norm(Norm::L2).unwrap(), 5.0);
        assert_eq!(GradientVector::new(vec![0.0; 5], l).norm(Norm::Inf).unwrap(), 0.0);
        assert_eq!(GradientVector::new(vec![0.0; 5], l).norm(Norm::L1).unwrap(), 0.0);
        assert_eq!(GradientVector::new(vec![0.0; 5], l).norm(Norm::L2).unwrap(), 0.0);
        assert_eq!(GradientVector::new(vec![1.0, -2.0, 3.0], l).norm(Norm::L1).unwrap(), 6.0);
        assert_eq!(GradientVector::new(vec![1.0, -7.0, 3.0], l).norm(Norm::Inf).unwrap(), 7.0);
        let bad = GradientVector::new(vec![1.0, f64::INFINITY], l);
        assert!(matches!(bad.norm(Norm::L2), Err(Error::NonFinite(_))));
        assert!(Norm::from_order(3.0).is_err());
    }

    #[test]
    fn finite_differences_of_simple_functions() {
        let x = Tensor::vector(vec![3.0]);
        let g = finite_diff_gradient(|t: &Tensor<f64>| Ok(t.data()[0] * t.data()[0]), &x, 1e-5).unwrap();
        assert!((g.values()[0] - 6.0).abs() < 1e-6);

        let x = Tensor::vector(vec![0.3, -1.0, 8.0, 2.5]);
        let g = finite_diff_gradient(|t: &Tensor<f64>| Ok(t.data().iter().sum()), &x, 1e-4).unwrap();
        for v in g.values() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let a = GradientVector::new(vec![1.0], LayoutId(1));
        let b = GradientVector::new(vec![1.0], LayoutId(2));
        assert!(matches!(a.sub(&b), Err(Error::Layout { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let a = Tensor::<f32>::identity(3);
        let c = a.matmul(&a).unwrap();
        assert_eq!(c, a);
        let g = GradientVector::new(vec![3.0f32, 4.0], LayoutId(0));
        assert_eq!(g.norm(Norm::L2).unwrap(), 5.0f32);
    }
}
