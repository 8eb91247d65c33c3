//! Dense row-major `f32` arrays and the network primitives.
//!
//! All reductions run in a fixed ascending index order, single-threaded, so
//! results are bit-for-bit reproducible.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Fixed epsilon for every layer normalization in the crate.
pub const LAYERNORM_EPS: f32 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() || shape.contains(&0) {
            return Err(Error::BadShape {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[&[f32]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let data: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(&[rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    /// Number of rows when viewed as `[rows, last_dim]`.
    pub fn rows(&self) -> usize {
        self.data.len() / self.last_dim()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.last_dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let d = self.last_dim();
        &mut self.data[i * d..(i + 1) * d]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::BadShape {
                shape: shape.to_vec(),
                len: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabsf(a - b))
            .fold(0.0, f32::max)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Adds a length-`last_dim` vector to every row.
    pub fn add_row_vector(&mut self, v: &Tensor) {
        let d = self.last_dim();
        debug_assert_eq!(v.len(), d);
        for row in self.data.chunks_exact_mut(d) {
            for (a, b) in row.iter_mut().zip(&v.data) {
                *a += b;
            }
        }
    }

    fn matrix_dims(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [m, n] => Some((*m, *n)),
            _ => None,
        }
    }
}

fn mismatch(a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        left: a.shape.clone(),
        right: b.shape.clone(),
    }
}

/// `a[m×k] · b[k×n]`, accumulating over `k` in ascending order.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let ((m, k), (k2, n)) = match (a.matrix_dims(), b.matrix_dims()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(mismatch(a, b)),
    };
    if k != k2 {
        return Err(mismatch(a, b));
    }
    let mut out = vec![0.0f32; m * n];
    matmul_into(&a.data, &b.data, &mut out, m, k, n);
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `out[m×n] += a[m×k] · b[k×n]` on raw row-major slices.
pub(crate) fn matmul_into(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×n] += aᵀ · g` for `a[m×k]`, `g[m×n]`.
pub(crate) fn matmul_tn_into(a: &[f32], g: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

/// `out[m×k] += g · bᵀ` for `g[m×n]`, `b[k×n]`.
pub(crate) fn matmul_nt_into(g: &[f32], b: &[f32], out: &mut [f32], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = 0.0f32;
            for (&gv, &bv) in g_row.iter().zip(b_row) {
                acc += gv * bv;
            }
            out[i * k + p] += acc;
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = libm::expf(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(a: &Tensor) -> Tensor {
    let mut out = a.clone();
    let d = out.last_dim();
    for row in out.data.chunks_exact_mut(d) {
        softmax_in_place(row);
    }
    out
}

/// Layer normalization over the last axis with population variance.
pub fn layernorm(a: &Tensor, gain: &Tensor, bias: &Tensor, eps: f32) -> Result<Tensor> {
    let d = a.last_dim();
    if gain.len() != d {
        return Err(mismatch(a, gain));
    }
    if bias.len() != d {
        return Err(mismatch(a, bias));
    }
    let mut out = a.clone();
    for row in out.data.chunks_exact_mut(d) {
        let (mean, rstd) = row_stats(row, eps);
        for ((v, g), b) in row.iter_mut().zip(&gain.data).zip(&bias.data) {
            *v = (*v - mean) * rstd * g + b;
        }
    }
    Ok(out)
}

/// Mean and reciprocal standard deviation of one row.
pub(crate) fn row_stats(row: &[f32], eps: f32) -> (f32, f32) {
    let d = row.len() as f32;
    let mut sum = 0.0f32;
    for &v in row {
        sum += v;
    }
    let mean = sum / d;
    let mut var = 0.0f32;
    for &v in row {
        let c = v - mean;
        var += c * c;
    }
    var /= d;
    (mean, 1.0 / libm::sqrtf(var + eps))
}

const SQRT_2_OVER_PI: f32 = 0.797_884_6;
const GELU_CUBIC: f32 = 0.044_715;

pub(crate) fn gelu_scalar(x: f32) -> f32 {
    let t = libm::tanhf(SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x));
    0.5 * x * (1.0 + t)
}

/// Derivative of the tanh-approximated GELU.
pub(crate) fn gelu_grad_scalar(x: f32) -> f32 {
    let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = libm::tanhf(inner);
    let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Elementwise tanh-approximation GELU.
pub fn gelu(a: &Tensor) -> Tensor {
    a.map(gelu_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t2(rows: &[&[f32]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_cases() {
        let a = t2(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.5]]);
        assert_eq!(matmul(&Tensor::identity(3), &a).unwrap(), a);

        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t2(&[&[5.0], &[6.0]]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[17.0, 39.0]);

        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 5]);
        match matmul(&a, &b) {
            Err(Error::ShapeMismatch { left, right }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![4, 5]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn transposed_products_match_plain_matmul() {
        let a = t2(&[&[1.0, -2.0, 0.5], &[3.0, 4.0, -1.0]]); // 2x3
        let g = t2(&[&[0.5, 1.0], &[-1.5, 2.0]]); // 2x2
        // aᵀ g: 3x2
        let mut tn = vec![0.0; 6];
        matmul_tn_into(a.data(), g.data(), &mut tn, 2, 3, 2);
        let at = t2(&[&[1.0, 3.0], &[-2.0, 4.0], &[0.5, -1.0]]);
        assert_eq!(tn, matmul(&at, &g).unwrap().into_data());
        // g aᵀ... use b = a (2x3), g' (2x3) · bᵀ → 2x2
        let mut nt = vec![0.0; 4];
        matmul_nt_into(a.data(), a.data(), &mut nt, 2, 3, 2);
        assert_eq!(nt, matmul(&a, &at).unwrap().into_data());
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&t2(&[&[0.0, 0.0], &[1000.0, 1000.0]]));
        assert_eq!(s.data(), &[0.5, 0.5, 0.5, 0.5]);
        let s = softmax_rows(&t2(&[&[0.0, libm::logf(3.0)]]));
        assert!((s.data()[0] - 0.25).abs() < 1e-6);
        assert!((s.data()[1] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn layernorm_cases() {
        let one = Tensor::filled(&[3], 1.0);
        let zero = Tensor::zeros(&[3]);
        let out = layernorm(&Tensor::filled(&[2, 3], 0.75), &one, &zero, LAYERNORM_EPS).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let one2 = Tensor::filled(&[2], 1.0);
        let zero2 = Tensor::zeros(&[2]);
        let out = layernorm(&t2(&[&[-1.0, 1.0]]), &one2, &zero2, 0.0).unwrap();
        assert_eq!(out.data(), &[-1.0, 1.0]);

        let bias = Tensor::new(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let out = layernorm(&t2(&[&[1.0, 5.0, -2.0]]), &zero, &bias, LAYERNORM_EPS).unwrap();
        assert_eq!(out.data(), bias.data());

        assert!(layernorm(&Tensor::zeros(&[2, 4]), &one, &zero, LAYERNORM_EPS).is_err());
    }

    #[test]
    fn gelu_cases() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-4);
        // 0.5 * (1 + tanh(sqrt(2/pi) * 1.044715)) evaluated in f64
        let x = 1.0f64;
        let reference = 0.5 * x * (1.0 + ((2.0 / core::f64::consts::PI).sqrt() * (x + 0.044715)).tanh());
        assert!((gelu_scalar(1.0) as f64 - reference).abs() < 1e-6);
        assert!((gelu_scalar(1.0) - 0.8412).abs() < 1e-4);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0f64, -1.0, -0.2, 0.0, 0.3, 1.5, 4.0] {
            let f = |x: f64| {
                0.5 * x * (1.0 + ((2.0 / core::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
            };
            let h = 1e-5;
            let fd = (f(x + h) - f(x - h)) / (2.0 * h);
            assert!((gelu_grad_scalar(x as f32) as f64 - fd).abs() < 1e-5, "x={x}");
        }
    }

    #[test]
    fn bad_shapes_rejected() {
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(&[0], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-50.0f32..50.0, 1..40)) {
            let n = v.len();
            let s = softmax_rows(&Tensor::new(&[1, n], v).unwrap());
            let sum: f32 = s.data().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn layernorm_rows_are_centered(v in proptest::collection::vec(-10.0f32..10.0, 2..64)) {
            let n = v.len();
            prop_assume!(v.iter().any(|&x| (x - v[0]).abs() > 1e-3));
            let out = layernorm(
                &Tensor::new(&[1, n], v).unwrap(),
                &Tensor::filled(&[n], 1.0),
                &Tensor::zeros(&[n]),
                LAYERNORM_EPS,
            ).unwrap();
            let mean: f32 = out.data().iter().sum::<f32>() / n as f32;
            prop_assert!(mean.abs() <= 1e-5);
        }
    }
}
