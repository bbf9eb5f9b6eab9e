//! Grouped, dilated, strided 3D cross-correlation over `N×C×T×H×W` tensors.

use crate::error::{Error, Result};
use crate::nn::kernels::{axpy, axpy_strided, dot, dot_strided, sum};
use crate::tensor::Tensor;

/// Per-axis triple in `(T, H, W)` order.
pub type Triple = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3dParams {
    /// `Cout × (Cin/groups) × kT × kH × kW`
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: Triple,
    pub dilation: Triple,
    pub padding: Triple,
    pub groups: usize,
}

#[derive(Debug, Clone)]
pub struct Conv3dGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Zero padding `dilation·(k−1)/2` per axis; output extent equals input extent
/// at stride 1 for odd kernels.
pub fn same_padding(kernel: Triple, dilation: Triple) -> Triple {
    [0, 1, 2].map(|a| dilation[a] * (kernel[a] - 1) / 2)
}

pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, dilation: usize, padding: usize) -> Option<usize> {
    let span = dilation * (kernel - 1) + 1;
    let padded = input + 2 * padding;
    (padded >= span && stride > 0).then(|| (padded - span) / stride + 1)
}

impl Conv3dParams {
    pub fn cout(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn cin(&self) -> usize {
        self.weight.shape()[1] * self.groups
    }

    pub fn kernel(&self) -> Triple {
        let s = self.weight.shape();
        [s[2], s[3], s[4]]
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.weight.shape();
        if s.len() != 5 {
            return Err(Error::config(format!("conv weight must be rank 5, got {s:?}")));
        }
        if self.groups == 0 || !s[0].is_multiple_of(self.groups) {
            return Err(Error::config(format!("groups {} must divide Cout {}", self.groups, s[0])));
        }
        if self.stride.contains(&0) || self.dilation.contains(&0) {
            return Err(Error::config("stride and dilation must be positive"));
        }
        if let Some(b) = &self.bias {
            if b.shape() != [s[0]] {
                return Err(Error::ShapeMismatch { lhs: vec![s[0]], rhs: b.shape().to_vec() });
            }
        }
        Ok(())
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(Geometry::new(input, self)?.output_shape())
    }
}

/// Valid output range `[lo, hi)` per kernel tap along one axis.
fn tap_ranges(input: usize, output: usize, kernel: usize, stride: usize, dilation: usize, padding: usize) -> Vec<(usize, usize)> {
    (0..kernel)
        .map(|k| {
            let offset = (k * dilation) as isize - padding as isize;
            let s = stride as isize;
            // o*s + offset in [0, input)
            let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
            let last = input as isize - 1 - offset;
            let hi = if last < 0 { 0 } else { (last / s + 1).min(output as isize) };
            let lo = lo.min(hi);
            (lo as usize, hi as usize)
        })
        .collect()
}

struct Geometry {
    n: usize,
    cin: usize,
    cout: usize,
    cin_g: usize,
    cout_g: usize,
    input: Triple,
    output: Triple,
    kernel: Triple,
    stride: Triple,
    dilation: Triple,
    padding: Triple,
    ranges: [Vec<(usize, usize)>; 3],
}

impl Geometry {
    fn new(x: &[usize], p: &Conv3dParams) -> Result<Self> {
        p.validate()?;
        if x.len() != 5 {
            return Err(Error::config(format!("conv3d input must be N×C×T×H×W, got {x:?}")));
        }
        let ws = p.weight.shape();
        let (cin, cout, groups) = (x[1], ws[0], p.groups);
        if cin % groups != 0 || cin / groups != ws[1] {
            return Err(Error::config(format!(
                "input channels {cin} incompatible with weight {ws:?} and groups {groups}"
            )));
        }
        let kernel = [ws[2], ws[3], ws[4]];
        let input = [x[2], x[3], x[4]];
        let mut output = [0; 3];
        for a in 0..3 {
            output[a] = conv_output_extent(input[a], kernel[a], p.stride[a], p.dilation[a], p.padding[a])
                .ok_or_else(|| {
                    Error::config(format!(
                        "non-positive output extent on axis {a}: input {} kernel {} dilation {} padding {}",
                        input[a], kernel[a], p.dilation[a], p.padding[a]
                    ))
                })?;
        }
        let ranges = [0, 1, 2].map(|a| tap_ranges(input[a], output[a], kernel[a], p.stride[a], p.dilation[a], p.padding[a]));
        Ok(Geometry {
            n: x[0],
            cin,
            cout,
            cin_g: cin / groups,
            cout_g: cout / groups,
            input,
            output,
            kernel,
            stride: p.stride,
            dilation: p.dilation,
            padding: p.padding,
            ranges,
        })
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.n, self.cout, self.output[0], self.output[1], self.output[2]]
    }

    fn in_plane(&self) -> usize {
        self.input.iter().product()
    }

    fn out_plane(&self) -> usize {
        self.output.iter().product()
    }

    fn ktaps(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Input coordinate of output `o` under tap `k` along `axis` (assumes validity).
    #[inline]
    fn src(&self, axis: usize, o: usize, k: usize) -> usize {
        o * self.stride[axis] + k * self.dilation[axis] - self.padding[axis]
    }

    /// Calls `f(out_row_offset, in_row_offset, w_len)` for every valid
    /// `(t, h)` output row under tap `(kt, kh, kw)`. Offsets already include
    /// the W-axis start of the valid range.
    #[inline]
    fn for_each_row(&self, kt: usize, kh: usize, kw: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (tlo, thi) = self.ranges[0][kt];
        let (hlo, hhi) = self.ranges[1][kh];
        let (wlo, whi) = self.ranges[2][kw];
        if tlo >= thi || hlo >= hhi || wlo >= whi {
            return;
        }
        let [_, h_in, w_in] = self.input;
        let [_, h_out, w_out] = self.output;
        let iw0 = self.src(2, wlo, kw);
        for ot in tlo..thi {
            let it = self.src(0, ot, kt);
            for oh in hlo..hhi {
                let ih = self.src(1, oh, kh);
                f((ot * h_out + oh) * w_out + wlo, (it * h_in + ih) * w_in + iw0, whi - wlo);
            }
        }
    }
}

/// Cross-correlation (no kernel flip) with per-axis stride, dilation and zero padding.
pub fn conv3d(x: &Tensor, p: &Conv3dParams) -> Result<Tensor> {
    let g = Geometry::new(x.shape(), p)?;
    let (pin, pout, ktaps) = (g.in_plane(), g.out_plane(), g.ktaps());
    let [_, kh_n, kw_n] = g.kernel;
    let sw = g.stride[2];
    let mut out = vec![0.0; g.n * g.cout * pout];
    let w = p.weight.data();
    let xd = x.data();
    for n in 0..g.n {
        for oc in 0..g.cout {
            let group = oc / g.cout_g;
            let plane = &mut out[(n * g.cout + oc) * pout..][..pout];
            if let Some(b) = &p.bias {
                plane.iter_mut().for_each(|v| *v = b.data()[oc]);
            }
            for icg in 0..g.cin_g {
                let ic = group * g.cin_g + icg;
                let src = &xd[(n * g.cin + ic) * pin..][..pin];
                let wk = &w[(oc * g.cin_g + icg) * ktaps..][..ktaps];
                for kt in 0..g.kernel[0] {
                    for kh in 0..kh_n {
                        for kw in 0..kw_n {
                            let wv = wk[(kt * kh_n + kh) * kw_n + kw];
                            g.for_each_row(kt, kh, kw, |o, i, len| {
                                if sw == 1 {
                                    axpy(&mut plane[o..o + len], &src[i..i + len], wv);
                                } else {
                                    axpy_strided(&mut plane[o..o + len], &src[i..], sw, wv);
                                }
                            });
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(g.output_shape(), out)
}

/// Gradients w.r.t. input, weight and (if present) bias.
pub fn conv3d_backward(x: &Tensor, p: &Conv3dParams, grad_out: &Tensor) -> Result<Conv3dGrads> {
    let g = Geometry::new(x.shape(), p)?;
    if grad_out.shape() != g.output_shape() {
        return Err(Error::ShapeMismatch { lhs: g.output_shape(), rhs: grad_out.shape().to_vec() });
    }
    let (pin, pout, ktaps) = (g.in_plane(), g.out_plane(), g.ktaps());
    let [_, kh_n, kw_n] = g.kernel;
    let sw = g.stride[2];
    let w = p.weight.data();
    let xd = x.data();
    let gy = grad_out.data();

    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; p.weight.numel()];
    for n in 0..g.n {
        for ic in 0..g.cin {
            let group = ic / g.cin_g;
            let icg = ic % g.cin_g;
            let gx_plane = &mut gx[(n * g.cin + ic) * pin..][..pin];
            let x_plane = &xd[(n * g.cin + ic) * pin..][..pin];
            for ocg in 0..g.cout_g {
                let oc = group * g.cout_g + ocg;
                let gy_plane = &gy[(n * g.cout + oc) * pout..][..pout];
                let wbase = (oc * g.cin_g + icg) * ktaps;
                for kt in 0..g.kernel[0] {
                    for kh in 0..kh_n {
                        for kw in 0..kw_n {
                            let tap = (kt * kh_n + kh) * kw_n + kw;
                            let wv = w[wbase + tap];
                            let mut acc = 0.0;
                            g.for_each_row(kt, kh, kw, |o, i, len| {
                                let gyr = &gy_plane[o..o + len];
                                if sw == 1 {
                                    axpy(&mut gx_plane[i..i + len], gyr, wv);
                                    acc += dot(gyr, &x_plane[i..i + len]);
                                } else {
                                    for (j, gv) in gyr.iter().enumerate() {
                                        gx_plane[i + j * sw] += wv * gv;
                                    }
                                    acc += dot_strided(gyr, &x_plane[i..], sw);
                                }
                            });
                            gw[wbase + tap] += acc;
                        }
                    }
                }
            }
        }
    }
    let gb = p.bias.as_ref().map(|b| {
        let mut out = vec![0.0; g.cout];
        for n in 0..g.n {
            for (oc, slot) in out.iter_mut().enumerate() {
                *slot += sum(&gy[(n * g.cout + oc) * pout..][..pout]);
            }
        }
        Tensor::from_vec(b.shape().to_vec(), out).expect("bias shape")
    });
    Ok(Conv3dGrads {
        input: Tensor::from_vec(x.shape().to_vec(), gx)?,
        weight: Tensor::from_vec(p.weight.shape().to_vec(), gw)?,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(weight: Tensor, stride: Triple, dilation: Triple, padding: Triple, groups: usize) -> Conv3dParams {
        Conv3dParams { weight, bias: None, stride, dilation, padding, groups }
    }

    /// Direct seven-deep loop over (n, oc, ot, oh, ow, icg, taps).
    fn naive(x: &Tensor, p: &Conv3dParams) -> Tensor {
        let xs = x.shape();
        let ws = p.weight.shape();
        let out_shape = p.output_shape(xs).unwrap();
        let mut out = Tensor::zeros(out_shape.clone());
        let cout_g = ws[0] / p.groups;
        for n in 0..xs[0] {
            for oc in 0..ws[0] {
                let g = oc / cout_g;
                for ot in 0..out_shape[2] {
                    for oh in 0..out_shape[3] {
                        for ow in 0..out_shape[4] {
                            let mut acc = p.bias.as_ref().map_or(0.0, |b| b.data()[oc]);
                            for icg in 0..ws[1] {
                                for kt in 0..ws[2] {
                                    for kh in 0..ws[3] {
                                        for kw in 0..ws[4] {
                                            let it = (ot * p.stride[0] + kt * p.dilation[0]) as isize - p.padding[0] as isize;
                                            let ih = (oh * p.stride[1] + kh * p.dilation[1]) as isize - p.padding[1] as isize;
                                            let iw = (ow * p.stride[2] + kw * p.dilation[2]) as isize - p.padding[2] as isize;
                                            if it < 0 || ih < 0 || iw < 0 || it >= xs[2] as isize || ih >= xs[3] as isize || iw >= xs[4] as isize {
                                                continue;
                                            }
                                            acc += p.weight.get(&[oc, icg, kt, kh, kw])
                                                * x.get(&[n, g * ws[1] + icg, it as usize, ih as usize, iw as usize]);
                                        }
                                    }
                                }
                            }
                            out.set(&[n, oc, ot, oh, ow], acc);
                        }
                    }
                }
            }
        }
        out
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 1, 3, 4, 5], &mut rng);
        let p = params(Tensor::ones([1, 1, 1, 1, 1]), [1; 3], [1; 3], [0; 3], 1);
        assert_eq!(conv3d(&x, &p).unwrap(), x);
    }

    #[test]
    fn all_ones_cube_sums_to_27() {
        let x = Tensor::ones([1, 1, 3, 3, 3]);
        let p = params(Tensor::ones([1, 1, 3, 3, 3]), [1; 3], [1; 3], [0; 3], 1);
        let y = conv3d(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(y.data(), &[27.0]);
    }

    #[test]
    fn dilated_taps_along_time() {
        let x = Tensor::from_vec([1, 1, 5, 1, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let p = params(Tensor::ones([1, 1, 3, 1, 1]), [1; 3], [2, 1, 1], [0; 3], 1);
        assert_eq!(conv3d(&x, &p).unwrap().data(), &[9.0]);
    }

    #[test]
    fn grouped_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[1, 2, 5, 5, 5], &mut rng);
        let mut p = params(random(&[4, 1, 3, 3, 3], &mut rng), [1; 3], [1; 3], [1; 3], 2);
        p.bias = Some(random(&[4], &mut rng));
        let diff = conv3d(&x, &p).unwrap().max_abs_diff(&naive(&x, &p)).unwrap();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn randomized_grid_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..60 {
            let groups = [1, 2][case % 2];
            let stride = [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)];
            let dilation = [0, 0, 0].map(|_| [1, 2, 4][rng.random_range(0..3)]);
            let padding = [0, 0, 0].map(|_| rng.random_range(0..=2));
            let k = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
            let ext = [0, 0, 0].map(|_| rng.random_range(1..=6));
            let x = random(&[2, 2 * groups, ext[0], ext[1], ext[2]], &mut rng);
            let p = params(random(&[2 * groups, 2, k[0], k[1], k[2]], &mut rng), stride, dilation, padding, groups);
            match p.output_shape(x.shape()) {
                Ok(_) => {
                    let diff = conv3d(&x, &p).unwrap().max_abs_diff(&naive(&x, &p)).unwrap();
                    assert!(diff < 1e-12, "case {case}: {diff}");
                }
                Err(_) => assert!(conv3d(&x, &p).is_err()),
            }
        }
    }

    #[test]
    fn rejects_channel_and_extent_errors() {
        let x = Tensor::zeros([1, 3, 4, 4, 4]);
        let p = params(Tensor::zeros([4, 2, 3, 3, 3]), [1; 3], [1; 3], [1; 3], 2);
        assert!(conv3d(&x, &p).is_err());
        let x = Tensor::zeros([1, 1, 2, 4, 4]);
        let p = params(Tensor::zeros([1, 1, 3, 3, 3]), [1; 3], [1; 3], [0; 3], 1);
        assert!(conv3d(&x, &p).is_err());
        let p = params(Tensor::zeros([3, 1, 1, 1, 1]), [1; 3], [1; 3], [0; 3], 2);
        assert!(p.validate().is_err());
    }

    #[test]
    fn backward_matches_naive_adjoint() {
        // <conv(x), gy> is bilinear, so its gradients are the adjoint applications.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[2, 4, 4, 5, 3], &mut rng);
        let mut p = params(random(&[2, 2, 3, 2, 3], &mut rng), [2, 1, 2], [1, 2, 1], [1, 2, 0], 2);
        p.bias = Some(random(&[2], &mut rng));
        let y = conv3d(&x, &p).unwrap();
        let gy = random(y.shape(), &mut rng);
        let grads = conv3d_backward(&x, &p, &gy).unwrap();
        let eps = 1e-6;
        for i in [0, 7, 31, 95, x.numel() - 1] {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let fd = (naive(&xp, &p).dot(&gy).unwrap() - naive(&x, &p).dot(&gy).unwrap()) / eps;
            assert!((fd - grads.input.data()[i]).abs() < 1e-6);
        }
        for i in 0..p.weight.numel() {
            let mut pp = p.clone();
            pp.weight.data_mut()[i] += eps;
            let fd = (naive(&x, &pp).dot(&gy).unwrap() - naive(&x, &p).dot(&gy).unwrap()) / eps;
            assert!((fd - grads.weight.data()[i]).abs() < 1e-6);
        }
        let gb = grads.bias.unwrap();
        for oc in 0..2 {
            let expect: f64 = (0..gy.numel()).filter(|&f| crate::tensor::unflatten(gy.shape(), f)[1] == oc).map(|f| gy.data()[f]).sum();
            assert!((gb.data()[oc] - expect).abs() < 1e-12);
        }
    }
}
