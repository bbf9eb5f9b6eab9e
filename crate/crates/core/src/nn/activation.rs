use crate::error::Result;
use crate::tensor::{ensure_same_shape, Tensor};

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes the upstream gradient where `x > 0`, zero elsewhere.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    ensure_same_shape(x, grad_out)?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape().to_vec(), data)
}
