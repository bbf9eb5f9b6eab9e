//! Inner loops shared by the convolution and pointwise kernels.
//!
//! Reductions use a fixed four-lane accumulation order so results do not
//! depend on how callers schedule work.

#[inline]
pub(crate) fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
pub(crate) fn axpy_strided(dst: &mut [f64], src: &[f64], stride: usize, a: f64) {
    for (j, d) in dst.iter_mut().enumerate() {
        *d += a * src[j * stride];
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let (x, y) = (&a[4 * c..4 * c + 4], &b[4 * c..4 * c + 4]);
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn dot_strided(a: &[f64], b: &[f64], stride: usize) -> f64 {
    a.iter().enumerate().map(|(j, x)| x * b[j * stride]).sum()
}

#[inline]
pub(crate) fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let x = &a[4 * c..4 * c + 4];
        acc[0] += x[0];
        acc[1] += x[1];
        acc[2] += x[2];
        acc[3] += x[3];
    }
    let tail: f64 = a[4 * chunks..].iter().sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
