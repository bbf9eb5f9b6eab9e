//! Dense row-major `f64` tensors and the two elementwise primitives the
//! pathway block is assembled from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense N-dimensional array of `f64` in row-major order (last axis fastest).
///
/// Parameters carry a same-shape gradient buffer in `grad`; activations leave it
/// empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::LengthMismatch { shape, len: data.len() });
        }
        Ok(Tensor { shape, data, grad: None })
    }

    /// Panics on a zero extent; use [`Tensor::from_vec`] for fallible construction.
    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = check_shape(&shape).expect("tensor extents must be positive");
        Tensor { shape, data: vec![value; n], grad: None }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value], grad: None }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> f64) -> Self {
        let shape = shape.into();
        let n = check_shape(&shape).expect("tensor extents must be positive");
        Tensor { shape, data: (0..n).map(&mut f).collect(), grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[flat_index(&self.shape, index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let i = flat_index(&self.shape, index);
        self.data[i] = value;
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != self.data.len() {
            return Err(Error::LengthMismatch { shape, len: self.data.len() });
        }
        if let Some(g) = &self.grad {
            debug_assert_eq!(g.len(), n);
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        ensure_same_shape(self, other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        ensure_same_shape(self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient as a tensor, zeros if none has been accumulated.
    pub fn grad_tensor(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.grad.clone().unwrap_or_else(|| vec![0.0; self.data.len()]),
            grad: None,
        }
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        let n = self.data.len();
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; n]),
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn accumulate_grad(&mut self, g: &Tensor) -> Result<()> {
        ensure_same_shape(self, g)?;
        for (acc, v) in self.grad_mut().iter_mut().zip(&g.data) {
            *acc += v;
        }
        Ok(())
    }
}

pub(crate) fn ensure_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch { lhs: a.shape.clone(), rhs: b.shape.clone() });
    }
    Ok(())
}

/// Horner evaluation of a multi-index over `shape`.
pub fn flat_index(shape: &[usize], index: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), index.len());
    shape.iter().zip(index).fold(0, |acc, (&e, &i)| {
        debug_assert!(i < e, "index {i} out of range for extent {e}");
        acc * e + i
    })
}

pub fn unflatten(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut index = vec![0; shape.len()];
    for (slot, &e) in index.iter_mut().zip(shape).rev() {
        *slot = flat % e;
        flat /= e;
    }
    index
}

pub fn elementwise_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    ensure_same_shape(a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
        grad: None,
    })
}

/// Both operands receive the upstream gradient unchanged.
pub fn elementwise_add_backward(grad_out: &Tensor) -> (Tensor, Tensor) {
    let g = Tensor { shape: grad_out.shape.clone(), data: grad_out.data.clone(), grad: None };
    (g.clone(), g)
}

/// Per-axis strides of `b` laid over `a`'s index space, zero on broadcast axes.
///
/// `b` may omit leading axes of `a`; each remaining extent must equal `a`'s
/// or be 1.
fn broadcast_strides(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let err = || Error::NotBroadcastable { lhs: a.to_vec(), rhs: b.to_vec() };
    if b.len() > a.len() {
        return Err(err());
    }
    let offset = a.len() - b.len();
    let mut strides = vec![0; a.len()];
    let mut stride = 1;
    for k in (0..b.len()).rev() {
        let (ea, eb) = (a[offset + k], b[k]);
        if eb == ea {
            strides[offset + k] = if eb == 1 { 0 } else { stride };
        } else if eb != 1 {
            return Err(err());
        }
        stride *= eb;
    }
    Ok(strides)
}

/// Visits `(flat_a, flat_b)` pairs in row-major order of `a`.
fn for_each_broadcast(a: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let n: usize = a.iter().product();
    // Fast path: b only varies over a prefix of axes and is constant over the rest.
    let inner_const = strides.iter().rev().take_while(|&&s| s == 0).count();
    let inner: usize = a[a.len() - inner_const..].iter().product();
    let outer_axes = a.len() - inner_const;
    let mut idx = vec![0usize; outer_axes];
    let mut bpos = 0usize;
    let mut flat = 0usize;
    while flat < n {
        for _ in 0..inner {
            f(flat, bpos);
            flat += 1;
        }
        // advance the outer multi-index
        for k in (0..outer_axes).rev() {
            idx[k] += 1;
            bpos += strides[k];
            if idx[k] < a[k] {
                break;
            }
            bpos -= strides[k] * a[k];
            idx[k] = 0;
        }
    }
}

/// `a ⊙ broadcast(b)`.
pub fn elementwise_mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let strides = broadcast_strides(&a.shape, &b.shape)?;
    let mut out = vec![0.0; a.numel()];
    for_each_broadcast(&a.shape, &strides, |i, j| out[i] = a.data[i] * b.data[j]);
    Ok(Tensor { shape: a.shape.clone(), data: out, grad: None })
}

/// Returns `(grad_a, grad_b)`; `grad_b` is summed over the broadcast axes.
pub fn elementwise_mul_backward(a: &Tensor, b: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    ensure_same_shape(a, grad_out)?;
    let strides = broadcast_strides(&a.shape, &b.shape)?;
    let mut ga = vec![0.0; a.numel()];
    let mut gb = vec![0.0; b.numel()];
    for_each_broadcast(&a.shape, &strides, |i, j| {
        ga[i] = grad_out.data[i] * b.data[j];
        gb[j] += grad_out.data[i] * a.data[i];
    });
    Ok((
        Tensor { shape: a.shape.clone(), data: ga, grad: None },
        Tensor { shape: b.shape.clone(), data: gb, grad: None },
    ))
}
