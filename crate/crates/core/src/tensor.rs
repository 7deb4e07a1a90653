//! Dense row-major float64 tensors.
//!
//! Tensors are plain values: cloning copies the data and sharing read-only
//! references across threads is safe. Gradient tracking happens on a
//! [`crate::tape::Tape`]; a tensor optionally remembers the tape node it was
//! registered as via `tape_id`.

use crate::error::{Error, Result};
use crate::tape::NodeId;

/// Dense n-dimensional array of 64-bit floats in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    /// Gradient of the most recent backward pass, same length as `data`.
    pub grad: Option<Vec<f64>>,
    /// Node this tensor was registered as on a tape, if any.
    pub tape_id: Option<NodeId>,
}

impl Tensor {
    /// Builds a tensor from a shape and flat row-major data.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!(
                "tensor shape must have positive extents, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dimension(format!(
                "shape {:?} implies {} elements but data has {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data, grad: None, tape_id: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel], grad: None, tape_id: None }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![1], data: vec![x], grad: None, tape_id: None }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data, grad: None, tape_id: None }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::from_vec(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows when viewed as a matrix ([n] counts as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Number of columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let c = self.cols();
        self.data[row * c + col] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Raw row-major matrix product, `a [m x k] * b [k x n] -> [m x n]`.
pub fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Standard matrix product of two 2-D tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(Error::dimension(format!(
            "matmul expects 2-D operands, got shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::dimension(format!(
            "matmul inner dimensions disagree: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Tensor::from_vec(vec![m, n], matmul_raw(a.data(), b.data(), m, k, n))
}

/// Numerically stable softmax over a slice (max subtraction).
pub fn softmax_slice(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::dimension("softmax of an empty vector".to_string()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("softmax input contains a non-finite entry".to_string()));
    }
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Softmax of a 1-D tensor.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 1 {
        return Err(Error::dimension(format!(
            "softmax expects a 1-D tensor, got shape {:?}",
            x.shape()
        )));
    }
    Ok(Tensor::vector(softmax_slice(x.data())?))
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        let err = Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn matmul_identity_leaves_matrix_unchanged() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = Tensor::matrix(2, 2, vec![3.0, -1.5, 0.25, 7.0]).unwrap();
        let out = matmul(&eye, &a).unwrap();
        assert_eq!(out.data(), a.data());
    }

    #[test]
    fn matmul_hand_example() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
        let out = matmul(&a, &b).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_reports_both_shapes_on_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![4, 2]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "message was: {msg}");
    }

    #[test]
    fn softmax_of_constant_vector_is_uniform() {
        let x = Tensor::vector(vec![7.3; 4]);
        let y = softmax(&x).unwrap();
        for &v in y.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_hand_example() {
        let y = softmax(&Tensor::vector(vec![0.0, 3.0f64.ln()])).unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-12);
        assert!((y.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_empty_and_nan() {
        assert!(matches!(softmax(&Tensor::vector(vec![])), Err(Error::Dimension(_))));
        assert!(matches!(
            softmax(&Tensor::vector(vec![1.0, f64::NAN])),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn argmax_selects_the_largest_entry() {
        assert_eq!(argmax(&[0.1, 2.0, -1.0]), 1);
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let mut xs = vec![0.0; 10];
        xs[3] = 2.0;
        xs[7] = 2.0;
        assert_eq!(argmax(&xs), 3);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            xs in proptest::collection::vec(-30.0f64..30.0, 1..40),
            k in -50.0f64..50.0,
        ) {
            let y = softmax_slice(&xs).unwrap();
            let total: f64 = y.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(y.iter().all(|&v| v > 0.0));

            let shifted: Vec<f64> = xs.iter().map(|v| v + k).collect();
            let ys = softmax_slice(&shifted).unwrap();
            for (a, b) in y.iter().zip(ys.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
