use crate::error::{Error, Result};
use crate::nn::kernels::{axpy, dot, sum};
use crate::tensor::Tensor;

/// `1×1×1` convolution: a per-position linear map across axis 1.
///
/// `x` is `N×Cin×…`, `weight` is `Cout×Cin`, `bias` is `Cout`. Trailing axes
/// are preserved.
pub fn pointwise_conv(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (n, cin, inner, cout) = dims(x, weight)?;
    let xd = x.data();
    let w = weight.data();
    let mut out = vec![0.0; n * cout * inner];
    for b in 0..n {
        for o in 0..cout {
            let dst = &mut out[(b * cout + o) * inner..][..inner];
            if let Some(bias) = bias {
                dst.iter_mut().for_each(|v| *v = bias.data()[o]);
            }
            for i in 0..cin {
                axpy(dst, &xd[(b * cin + i) * inner..][..inner], w[o * cin + i]);
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[1] = cout;
    Tensor::from_vec(shape, out)
}

fn dims(x: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let s = x.shape();
    let ws = weight.shape();
    if s.len() < 2 || ws.len() != 2 || ws[1] != s[1] {
        return Err(Error::config(format!("pointwise_conv: input {s:?} incompatible with weight {ws:?}")));
    }
    Ok((s[0], s[1], s[2..].iter().product(), ws[0]))
}

#[derive(Debug, Clone)]
pub struct PointwiseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn pointwise_conv_backward(x: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<PointwiseGrads> {
    let (n, cin, inner, cout) = dims(x, weight)?;
    let mut expect = x.shape().to_vec();
    expect[1] = cout;
    if grad_out.shape() != expect {
        return Err(Error::ShapeMismatch { lhs: expect, rhs: grad_out.shape().to_vec() });
    }
    let xd = x.data();
    let w = weight.data();
    let gy = grad_out.data();
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; weight.numel()];
    let mut gb = vec![0.0; cout];
    for b in 0..n {
        for o in 0..cout {
            let g = &gy[(b * cout + o) * inner..][..inner];
            gb[o] += sum(g);
            for i in 0..cin {
                let xr = &xd[(b * cin + i) * inner..][..inner];
                gw[o * cin + i] += dot(g, xr);
                axpy(&mut gx[(b * cin + i) * inner..][..inner], g, w[o * cin + i]);
            }
        }
    }
    Ok(PointwiseGrads {
        input: Tensor::from_vec(x.shape().to_vec(), gx)?,
        weight: Tensor::from_vec(weight.shape().to_vec(), gw)?,
        bias: Tensor::from_vec([cout], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_channel_sum() {
        let x = Tensor::from_fn([2, 2, 3], |i| i as f64);
        let eye = Tensor::from_vec([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(pointwise_conv(&x, &eye, None).unwrap(), x);
        let row = Tensor::from_vec([1, 2], vec![1.0, 1.0]).unwrap();
        let y = pointwise_conv(&x, &row, None).unwrap();
        assert_eq!(y.shape(), &[2, 1, 3]);
        assert_eq!(y.data(), &[3.0, 5.0, 7.0, 15.0, 17.0, 19.0]);
    }

    #[test]
    fn time_axis_untouched() {
        let x = Tensor::zeros([2, 4, 7]);
        let w = Tensor::zeros([3, 4]);
        assert_eq!(pointwise_conv(&x, &w, None).unwrap().shape(), &[2, 3, 7]);
        assert!(pointwise_conv(&x, &Tensor::zeros([3, 5]), None).is_err());
    }

    #[test]
    fn gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_fn([2, 3, 4], |_| rng.random_range(-1.0..1.0));
        let w = Tensor::from_fn([5, 3], |_| rng.random_range(-1.0..1.0));
        let b = Tensor::from_fn([5], |_| rng.random_range(-1.0..1.0));
        let gy = Tensor::from_fn([2, 5, 4], |_| rng.random_range(-1.0..1.0));
        let fx = |x: &Tensor| {
            let y = pointwise_conv(x, &w, Some(&b))?;
            Ok((y.dot(&gy)?, pointwise_conv_backward(x, &w, &gy)?.input))
        };
        assert!(check_gradient(fx, &x, 1e-5).unwrap() < 1e-4);
        let fw = |w: &Tensor| {
            let y = pointwise_conv(&x, w, Some(&b))?;
            Ok((y.dot(&gy)?, pointwise_conv_backward(&x, w, &gy)?.weight))
        };
        assert!(check_gradient(fw, &w, 1e-5).unwrap() < 1e-4);
        let fb = |b: &Tensor| {
            let y = pointwise_conv(&x, &w, Some(b))?;
            Ok((y.dot(&gy)?, pointwise_conv_backward(&x, &w, &gy)?.bias))
        };
        assert!(check_gradient(fb, &b, 1e-5).unwrap() < 1e-4);
    }
}
