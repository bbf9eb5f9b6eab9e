use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel affine normalization over every axis except the channel axis 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: Tensor::ones([channels]),
            beta: Tensor::zeros([channels]),
            running_mean: Tensor::zeros([channels]),
            running_var: Tensor::ones([channels]),
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }
}

#[derive(Debug, Clone)]
pub struct BnCache {
    mode: Mode,
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// Splits `x` into `(N, C, inner)` where `inner` is the product of the trailing axes.
fn layout(x: &Tensor, channels: usize) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.len() < 2 || s[1] != channels {
        return Err(Error::config(format!("batch_norm expects N×{channels}×…, got {s:?}")));
    }
    Ok((s[0], s[2..].iter().product()))
}

/// In train mode normalizes with batch statistics and folds them into the
/// running statistics; in eval mode uses the running statistics.
pub fn batch_norm(x: &Tensor, p: &mut BatchNormParams, mode: Mode) -> Result<(Tensor, BnCache)> {
    let c = p.channels();
    let (n, inner) = layout(x, c)?;
    let count = n * inner;
    let xd = x.data();
    let (mean, var) = match mode {
        Mode::Train => {
            if count < 2 {
                return Err(Error::config("batch_norm in train mode needs at least two values per channel"));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    s += xd[(b * c + ch) * inner..][..inner].iter().sum::<f64>();
                }
                let m = s / count as f64;
                let mut v = 0.0;
                for b in 0..n {
                    v += xd[(b * c + ch) * inner..][..inner].iter().map(|x| (x - m) * (x - m)).sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = v / count as f64;
            }
            let unbias = count as f64 / (count - 1) as f64;
            let mom = p.momentum;
            for ch in 0..c {
                let rm = &mut p.running_mean.data_mut()[ch];
                *rm = (1.0 - mom) * *rm + mom * mean[ch];
                let rv = &mut p.running_var.data_mut()[ch];
                *rv = (1.0 - mom) * *rv + mom * var[ch] * unbias;
            }
            (mean, var)
        }
        Mode::Eval => (p.running_mean.data().to_vec(), p.running_var.data().to_vec()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + p.epsilon).sqrt()).collect();
    let mut xhat = vec![0.0; x.numel()];
    let mut y = vec![0.0; x.numel()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * inner;
            let (g, bt) = (p.gamma.data()[ch], p.beta.data()[ch]);
            for i in off..off + inner {
                let h = (xd[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                y[i] = g * h + bt;
            }
        }
    }
    let shape = x.shape().to_vec();
    Ok((
        Tensor::from_vec(shape.clone(), y)?,
        BnCache { mode, xhat: Tensor::from_vec(shape, xhat)?, inv_std },
    ))
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batch_norm_backward(cache: &BnCache, p: &BatchNormParams, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::ShapeMismatch { lhs: cache.xhat.shape().to_vec(), rhs: grad_out.shape().to_vec() });
    }
    let c = p.channels();
    let (n, inner) = layout(grad_out, c)?;
    let count = (n * inner) as f64;
    let gy = grad_out.data();
    let xh = cache.xhat.data();
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * inner;
            for i in off..off + inner {
                gbeta[ch] += gy[i];
                ggamma[ch] += gy[i] * xh[i];
            }
        }
    }
    let mut gx = vec![0.0; gy.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * inner;
            let scale = p.gamma.data()[ch] * cache.inv_std[ch];
            match cache.mode {
                Mode::Eval => {
                    for i in off..off + inner {
                        gx[i] = scale * gy[i];
                    }
                }
                Mode::Train => {
                    let (sb, sg) = (gbeta[ch] / count, ggamma[ch] / count);
                    for i in off..off + inner {
                        gx[i] = scale * (gy[i] - sb - xh[i] * sg);
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(grad_out.shape().to_vec(), gx)?,
        Tensor::from_vec([c], ggamma)?,
        Tensor::from_vec([c], gbeta)?,
    ))
}
