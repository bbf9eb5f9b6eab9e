use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn dims(z: &Tensor) -> Result<(usize, usize, usize)> {
    let s = z.shape();
    if s.len() < 2 {
        return Err(Error::config(format!("softmax_over_pathways expects N×M×…, got {s:?}")));
    }
    Ok((s[0], s[1], s[2..].iter().product()))
}

/// Softmax along axis 1 (the pathway axis) of an `N×M×C[×T]` tensor,
/// independently for every other index. Max-subtracted for stability.
pub fn softmax_over_pathways(z: &Tensor) -> Result<Tensor> {
    let (n, m, inner) = dims(z)?;
    let zd = z.data();
    let mut out = vec![0.0; z.numel()];
    for b in 0..n {
        let base = b * m * inner;
        for j in 0..inner {
            let at = |k: usize| base + k * inner + j;
            let max = (0..m).map(|k| zd[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..m {
                let e = (zd[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..m {
                out[at(k)] /= total;
            }
        }
    }
    Tensor::from_vec(z.shape().to_vec(), out)
}

/// Gradient w.r.t. the logits given the softmax output `a`.
pub fn softmax_over_pathways_backward(a: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if a.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch { lhs: a.shape().to_vec(), rhs: grad_out.shape().to_vec() });
    }
    let (n, m, inner) = dims(a)?;
    let (ad, gd) = (a.data(), grad_out.data());
    let mut gz = vec![0.0; a.numel()];
    for b in 0..n {
        let base = b * m * inner;
        for j in 0..inner {
            let at = |k: usize| base + k * inner + j;
            let inner_prod: f64 = (0..m).map(|k| ad[at(k)] * gd[at(k)]).sum();
            for k in 0..m {
                gz[at(k)] = ad[at(k)] * (gd[at(k)] - inner_prod);
            }
        }
    }
    Tensor::from_vec(a.shape().to_vec(), gz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use proptest::prelude::*;

    #[test]
    fn uniform_closed_form_and_degenerate() {
        let a = softmax_over_pathways(&Tensor::zeros([1, 4, 3])).unwrap();
        assert!(a.data().iter().all(|&v| v == 0.25));
        let z = Tensor::from_vec([1, 2, 1], vec![0.0, 3f64.ln()]).unwrap();
        let a = softmax_over_pathways(&z).unwrap();
        assert!((a.data()[0] - 0.25).abs() < 1e-15 && (a.data()[1] - 0.75).abs() < 1e-15);
        let a = softmax_over_pathways(&Tensor::from_fn([2, 1, 3, 2], |i| i as f64 * 7.0)).unwrap();
        assert!(a.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn large_logits_stay_finite() {
        let z = Tensor::from_vec([1, 2, 1], vec![1000.0, 1001.0]).unwrap();
        assert!(softmax_over_pathways(&z).unwrap().is_finite());
    }

    #[test]
    fn gradient() {
        let z = Tensor::from_fn([2, 3, 2, 2], |i| ((i * 37) % 11) as f64 / 5.0 - 1.0);
        let gy = Tensor::from_fn([2, 3, 2, 2], |i| ((i * 13) % 7) as f64 / 3.0 - 1.0);
        let err = check_gradient(
            |z| {
                let a = softmax_over_pathways(z)?;
                Ok((a.dot(&gy)?, softmax_over_pathways_backward(&a, &gy)?))
            },
            &z,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    proptest! {
        #[test]
        fn normalized_and_shift_invariant(
            logits in prop::collection::vec(-5.0f64..5.0, 24),
            shift in -50.0f64..50.0,
        ) {
            let z = Tensor::from_vec([2, 4, 3], logits).unwrap();
            let a = softmax_over_pathways(&z).unwrap();
            for b in 0..2 {
                for c in 0..3 {
                    let s: f64 = (0..4).map(|m| a.get(&[b, m, c])).sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                }
            }
            let shifted = softmax_over_pathways(&z.map(|v| v + shift)).unwrap();
            prop_assert!(a.max_abs_diff(&shifted).unwrap() < 1e-9);
        }
    }
}
