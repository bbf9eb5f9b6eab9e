//! Global average pooling over the spatial axes, or over time and space.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn dims5(shape: &[usize]) -> Result<[usize; 5]> {
    <[usize; 5]>::try_from(shape).map_err(|_| Error::config(format!("expected N×C×T×H×W, got {shape:?}")))
}

/// `N×C×T×H×W → N×C×T`, mean over `H, W`.
pub fn gap_spatial(u: &Tensor) -> Result<Tensor> {
    let [n, c, t, h, w] = dims5(u.shape())?;
    let hw = h * w;
    let data = u.data().chunks_exact(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
    Tensor::from_vec([n, c, t], data)
}

pub fn gap_spatial_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let [n, c, t, h, w] = dims5(input_shape)?;
    if grad_out.shape() != [n, c, t] {
        return Err(Error::ShapeMismatch { lhs: vec![n, c, t], rhs: grad_out.shape().to_vec() });
    }
    let hw = h * w;
    let scale = 1.0 / hw as f64;
    let data = grad_out.data().iter().flat_map(|&g| std::iter::repeat_n(g * scale, hw)).collect();
    Tensor::from_vec(input_shape.to_vec(), data)
}

/// `N×C×T×H×W → N×C`, mean over `T, H, W`.
pub fn gap_spatiotemporal(u: &Tensor) -> Result<Tensor> {
    let [n, c, t, h, w] = dims5(u.shape())?;
    let thw = t * h * w;
    let data = u.data().chunks_exact(thw).map(|p| p.iter().sum::<f64>() / thw as f64).collect();
    Tensor::from_vec([n, c], data)
}

pub fn gap_spatiotemporal_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let [n, c, t, h, w] = dims5(input_shape)?;
    if grad_out.shape() != [n, c] {
        return Err(Error::ShapeMismatch { lhs: vec![n, c], rhs: grad_out.shape().to_vec() });
    }
    let thw = t * h * w;
    let scale = 1.0 / thw as f64;
    let data = grad_out.data().iter().flat_map(|&g| std::iter::repeat_n(g * scale, thw)).collect();
    Tensor::from_vec(input_shape.to_vec(), data)
}
