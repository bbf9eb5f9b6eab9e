//! Independent reference implementations used as test oracles. Everything here
//! is written with plain nested loops over flat buffers and shares no code with
//! the library beyond the `Tensor` container.

#![allow(dead_code)]

use btsnet_core::nn::{BatchNormParams, Conv3dParams, Mode};
use btsnet_core::{FuseType, NetworkConfig, Tensor, TspConfig, TspParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Output extent with the usual floor rule, or `None` if the window never fits.
pub fn out_extent(n: usize, k: usize, s: usize, d: usize, p: usize) -> Option<usize> {
    let span = d * (k - 1) + 1;
    (n + 2 * p >= span).then(|| (n + 2 * p - span) / s + 1)
}

/// Textbook grouped 3D cross-correlation.
pub fn naive_conv3d(x: &Tensor, p: &Conv3dParams) -> Tensor {
    let xs = x.shape();
    let ws = p.weight.shape();
    let (n, cin, ti, hi, wi) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let (cout, cin_g, kt, kh, kw) = (ws[0], ws[1], ws[2], ws[3], ws[4]);
    let g = p.groups;
    assert_eq!(cin_g * g, cin);
    let cout_g = cout / g;
    let to = out_extent(ti, kt, p.stride[0], p.dilation[0], p.padding[0]).unwrap();
    let ho = out_extent(hi, kh, p.stride[1], p.dilation[1], p.padding[1]).unwrap();
    let wo = out_extent(wi, kw, p.stride[2], p.dilation[2], p.padding[2]).unwrap();
    let xd = x.data();
    let wd = p.weight.data();
    let mut out = vec![0.0; n * cout * to * ho * wo];
    for b in 0..n {
        for co in 0..cout {
            let grp = co / cout_g;
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = p.bias.as_ref().map_or(0.0, |bias| bias.data()[co]);
                        for ci in 0..cin_g {
                            let c = grp * cin_g + ci;
                            for a in 0..kt {
                                let it = (ot * p.stride[0] + a * p.dilation[0]) as isize - p.padding[0] as isize;
                                if it < 0 || it >= ti as isize {
                                    continue;
                                }
                                for bb in 0..kh {
                                    let ih = (oh * p.stride[1] + bb * p.dilation[1]) as isize - p.padding[1] as isize;
                                    if ih < 0 || ih >= hi as isize {
                                        continue;
                                    }
                                    for cc in 0..kw {
                                        let iw = (ow * p.stride[2] + cc * p.dilation[2]) as isize - p.padding[2] as isize;
                                        if iw < 0 || iw >= wi as isize {
                                            continue;
                                        }
                                        let xv = xd[(((b * cin + c) * ti + it as usize) * hi + ih as usize) * wi + iw as usize];
                                        let wv = wd[(((co * cin_g + ci) * kt + a) * kh + bb) * kw + cc];
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        out[(((b * cout + co) * to + ot) * ho + oh) * wo + ow] = acc;
                    }
                }
            }
        }
    }
    Tensor::from_vec(vec![n, cout, to, ho, wo], out).unwrap()
}

/// Per-channel normalization of an `N×C×…` tensor with batch or running statistics.
pub fn naive_bn(x: &Tensor, p: &BatchNormParams, mode: Mode) -> Tensor {
    let s = x.shape();
    let (n, c) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    let mut out = x.data().to_vec();
    for ch in 0..c {
        let vals: Vec<f64> = (0..n).flat_map(|b| (0..inner).map(move |i| (b, i))).map(|(b, i)| x.data()[(b * c + ch) * inner + i]).collect();
        let (mean, var) = match mode {
            Mode::Train => {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                (m, vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64)
            }
            Mode::Eval => (p.running_mean.data()[ch], p.running_var.data()[ch]),
        };
        let scale = p.gamma.data()[ch] / (var + p.epsilon).sqrt();
        for b in 0..n {
            for i in 0..inner {
                let k = (b * c + ch) * inner + i;
                out[k] = (x.data()[k] - mean) * scale + p.beta.data()[ch];
            }
        }
    }
    Tensor::from_vec(s.to_vec(), out).unwrap()
}

pub fn naive_relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// `out[b, o, …] = Σ_i w[o, i] · x[b, i, …]`.
pub fn naive_pointwise(x: &Tensor, w: &Tensor) -> Tensor {
    let s = x.shape();
    let (n, cin) = (s[0], s[1]);
    let cout = w.shape()[0];
    let inner: usize = s[2..].iter().product();
    let mut out = vec![0.0; n * cout * inner];
    for b in 0..n {
        for o in 0..cout {
            for i in 0..inner {
                let mut acc = 0.0;
                for ci in 0..cin {
                    acc += w.data()[o * cin + ci] * x.data()[(b * cin + ci) * inner + i];
                }
                out[(b * cout + o) * inner + i] = acc;
            }
        }
    }
    let mut shape = s.to_vec();
    shape[1] = cout;
    Tensor::from_vec(shape, out).unwrap()
}

/// Straight-line TSP forward: returns `(V, A)` with `A` laid out `N×M×C×T` (TC) or `N×M×C` (C).
pub fn naive_tsp(x: &Tensor, cfg: &TspConfig, params: &TspParams, mode: Mode) -> (Tensor, Tensor) {
    let m_count = cfg.pathways;
    let u: Vec<Tensor> = (0..m_count)
        .map(|m| naive_relu(&naive_bn(&naive_conv3d(x, &params.pathway_convs[m]), &params.pathway_bns[m], mode)))
        .collect();
    let s = u[0].shape().to_vec();
    let (n, c, t, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    let at = |b: usize, ch: usize, tt: usize, hh: usize, ww: usize| (((b * c + ch) * t + tt) * h + hh) * w + ww;
    let total: Vec<f64> = (0..u[0].numel()).map(|i| u.iter().map(|p| p.data()[i]).sum()).collect();

    let cols = match cfg.fuse_type {
        FuseType::TC => t,
        FuseType::C => 1,
    };
    let mut pooled = vec![0.0; n * c * cols];
    for b in 0..n {
        for ch in 0..c {
            for tt in 0..t {
                let col = if cols == 1 { 0 } else { tt };
                for hh in 0..h {
                    for ww in 0..w {
                        pooled[(b * c + ch) * cols + col] += total[at(b, ch, tt, hh, ww)];
                    }
                }
            }
            let per = (h * w * (t / cols)) as f64;
            for col in 0..cols {
                pooled[(b * c + ch) * cols + col] /= per;
            }
        }
    }
    let pooled = Tensor::from_vec(vec![n, c, cols], pooled).unwrap();
    let z = naive_relu(&naive_bn(&naive_pointwise(&pooled, &params.fuse_compress), &params.fuse_bn, mode));
    let logits = naive_pointwise(&z, &params.fuse_expand);

    // softmax across the M groups of C rows
    let mut attn = vec![0.0; n * m_count * c * cols];
    for b in 0..n {
        for ch in 0..c {
            for col in 0..cols {
                let vals: Vec<f64> = (0..m_count).map(|m| logits.data()[(b * m_count * c + m * c + ch) * cols + col]).collect();
                let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = vals.iter().map(|v| (v - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for m in 0..m_count {
                    attn[((b * m_count + m) * c + ch) * cols + col] = e[m] / z;
                }
            }
        }
    }

    let mut v = vec![0.0; u[0].numel()];
    for b in 0..n {
        for ch in 0..c {
            for tt in 0..t {
                let col = if cols == 1 { 0 } else { tt };
                for hh in 0..h {
                    for ww in 0..w {
                        let k = at(b, ch, tt, hh, ww);
                        v[k] = (0..m_count).map(|m| attn[((b * m_count + m) * c + ch) * cols + col] * u[m].data()[k]).sum();
                    }
                }
            }
        }
    }
    let attn_shape = match cfg.fuse_type {
        FuseType::TC => vec![n, m_count, c, t],
        FuseType::C => vec![n, m_count, c],
    };
    (Tensor::from_vec(s, v).unwrap(), Tensor::from_vec(attn_shape, attn).unwrap())
}

/// Trainable parameter total derived from the architecture description alone.
pub fn enumerate_params(cfg: &NetworkConfig) -> usize {
    let blocks = match cfg.depth {
        26 => [2, 2, 2, 2],
        50 => [3, 4, 6, 3],
        101 => [3, 4, 23, 3],
        _ => panic!("depth"),
    };
    let bn = |c: usize| 2 * c;
    let mut total = cfg.in_channels * cfg.stem_width * 27 + bn(cfg.stem_width);
    let mut cin = cfg.stem_width;
    for s in 0..4 {
        let width = cfg.widths[s];
        let cout = width * cfg.expansion;
        for b in 0..blocks[s] {
            total += cin * width + bn(width);
            let grouped = width * (width / cfg.cardinality) * 27;
            if s < 3 {
                let d = (width / cfg.reduction).max(cfg.min_hidden);
                total += cfg.pathways * (grouped + bn(width));
                total += d * width + bn(d) + cfg.pathways * width * d;
            } else {
                total += grouped + bn(width);
            }
            total += width * cout + bn(cout);
            let strided = s > 0 && b == 0;
            if cin != cout || strided {
                total += cin * cout + bn(cout);
            }
            cin = cout;
        }
    }
    total + cin * cfg.num_classes + cfg.num_classes
}
