//! The temporal-spatial pathway block.
//!
//! * split: `M` dilated `3×3×3` convolutions (conv → BN → ReLU), one per pathway;
//! * fuse: sum the pathways, pool (over `H, W` for [`FuseType::TC`], over
//!   `T, H, W` for [`FuseType::C`]), compress to `d` channels (pointwise
//!   conv → BN → ReLU), expand to `M·C` logits;
//! * select: softmax across pathways, then the attention-weighted sum.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    self, batch_norm, batch_norm_backward, conv3d, conv3d_backward, gap_spatial, gap_spatial_backward,
    gap_spatiotemporal, gap_spatiotemporal_backward, pointwise_conv, pointwise_conv_backward, relu, relu_backward,
    same_padding, softmax_over_pathways, softmax_over_pathways_backward, BatchNormParams, BnCache, Conv3dParams,
    Mode, Triple,
};
use crate::tensor::{elementwise_add, elementwise_mul, elementwise_mul_backward, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RfOption {
    /// Cube dilations `(i, i, i)` for pathway `i = 1..=M`.
    O1,
    /// A fixed table mixing spatial-only, temporal-only and cubic dilations.
    O2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuseType {
    /// Temporal-channel attention: one weight per pathway, channel and timestep.
    #[serde(rename = "tc")]
    TC,
    /// Channel-wise attention: one weight per pathway and channel.
    #[serde(rename = "c")]
    C,
}

impl fmt::Display for RfOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RfOption::O1 => "o1",
            RfOption::O2 => "o2",
        })
    }
}

impl FromStr for RfOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "o1" => Ok(RfOption::O1),
            "o2" => Ok(RfOption::O2),
            _ => Err(Error::config(format!("unknown rf option {s:?}"))),
        }
    }
}

impl fmt::Display for FuseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FuseType::TC => "tc",
            FuseType::C => "c",
        })
    }
}

impl FromStr for FuseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tc" => Ok(FuseType::TC),
            "c" => Ok(FuseType::C),
            _ => Err(Error::config(format!("unknown fuse type {s:?}"))),
        }
    }
}

/// Dilation triples `(dT, dH, dW)` for `m` pathways.
pub fn build_dilation_set(m: usize, rf_option: RfOption) -> Result<Vec<Triple>> {
    if m == 0 {
        return Err(Error::config("pathway count must be at least 1"));
    }
    match rf_option {
        RfOption::O1 => Ok((1..=m).map(|i| [i, i, i]).collect()),
        RfOption::O2 => match m {
            1 => Ok(vec![[1, 1, 1]]),
            2 => Ok(vec![[1, 1, 1], [4, 4, 4]]),
            3 => Ok(vec![[1, 1, 1], [1, 4, 4], [4, 1, 1]]),
            4 => Ok(vec![[1, 1, 1], [4, 4, 4], [1, 4, 4], [4, 1, 1]]),
            _ => Err(Error::config(format!("rf option o2 has no dilation table for M={m} (supported: 1..=4)"))),
        },
    }
}

pub const DEFAULT_REDUCTION: usize = 16;
pub const DEFAULT_MIN_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TspConfig {
    pub pathways: usize,
    pub rf_option: RfOption,
    pub fuse_type: FuseType,
    pub dilations: Vec<Triple>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
    pub reduction: usize,
    pub min_hidden: usize,
    pub kernel: Triple,
    pub stride: Triple,
}

impl TspConfig {
    pub fn new(in_channels: usize, out_channels: usize, pathways: usize, rf_option: RfOption, fuse_type: FuseType) -> Result<Self> {
        let cfg = TspConfig {
            pathways,
            rf_option,
            fuse_type,
            dilations: build_dilation_set(pathways, rf_option)?,
            in_channels,
            out_channels,
            groups: 1,
            reduction: DEFAULT_REDUCTION,
            min_hidden: DEFAULT_MIN_HIDDEN,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_groups(mut self, groups: usize) -> Result<Self> {
        self.groups = groups;
        self.validate()?;
        Ok(self)
    }

    pub fn with_stride(mut self, stride: Triple) -> Result<Self> {
        self.stride = stride;
        self.validate()?;
        Ok(self)
    }

    pub fn with_hidden_rule(mut self, reduction: usize, min_hidden: usize) -> Result<Self> {
        self.reduction = reduction;
        self.min_hidden = min_hidden;
        self.validate()?;
        Ok(self)
    }

    /// `d = max(C / r, L)`.
    pub fn hidden_width(&self) -> usize {
        (self.out_channels / self.reduction).max(self.min_hidden)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pathways == 0 || self.dilations.len() != self.pathways {
            return Err(Error::config(format!(
                "expected {} dilation triples, got {}",
                self.pathways,
                self.dilations.len()
            )));
        }
        if self.dilations.iter().flatten().any(|&d| d == 0) {
            return Err(Error::config("dilations must be positive"));
        }
        if self.kernel.iter().any(|&k| k % 2 == 0) {
            return Err(Error::config("pathway kernels must be odd so all pathways share a shape"));
        }
        if self.stride.contains(&0) {
            return Err(Error::config("stride must be positive"));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.groups == 0 {
            return Err(Error::config("channel and group counts must be positive"));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::config(format!(
                "groups {} must divide in_channels {} and out_channels {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        if self.reduction == 0 || self.hidden_width() == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TspParams {
    pub pathway_convs: Vec<Conv3dParams>,
    pub pathway_bns: Vec<BatchNormParams>,
    /// `d × C`
    pub fuse_compress: Tensor,
    pub fuse_bn: BatchNormParams,
    /// `(M·C) × d`
    pub fuse_expand: Tensor,
}

impl TspParams {
    pub fn accumulate(&mut self, grads: &TspGrads) -> Result<()> {
        for m in 0..self.pathway_convs.len() {
            self.pathway_convs[m].weight.accumulate_grad(&grads.pathway_weights[m])?;
            self.pathway_bns[m].gamma.accumulate_grad(&grads.pathway_gammas[m])?;
            self.pathway_bns[m].beta.accumulate_grad(&grads.pathway_betas[m])?;
        }
        self.fuse_compress.accumulate_grad(&grads.fuse_compress)?;
        self.fuse_bn.gamma.accumulate_grad(&grads.fuse_gamma)?;
        self.fuse_bn.beta.accumulate_grad(&grads.fuse_beta)?;
        self.fuse_expand.accumulate_grad(&grads.fuse_expand)?;
        Ok(())
    }
}

pub fn init_tsp_params(cfg: &TspConfig, seed: u64) -> Result<TspParams> {
    init_tsp_params_with(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Convolution and fuse weights are He-normal with their own fan-in; BN starts at identity.
pub fn init_tsp_params_with<R: Rng + ?Sized>(cfg: &TspConfig, rng: &mut R) -> Result<TspParams> {
    cfg.validate()?;
    let cin_g = cfg.in_channels / cfg.groups;
    let [kt, kh, kw] = cfg.kernel;
    let fan_in = cin_g * kt * kh * kw;
    let pathway_convs = cfg
        .dilations
        .iter()
        .map(|&dilation| Conv3dParams {
            weight: nn::init::he_normal([cfg.out_channels, cin_g, kt, kh, kw], fan_in, rng),
            bias: None,
            stride: cfg.stride,
            dilation,
            padding: same_padding(cfg.kernel, dilation),
            groups: cfg.groups,
        })
        .collect();
    let d = cfg.hidden_width();
    let c = cfg.out_channels;
    let fuse_compress = nn::init::he_normal([d, c], c, rng);
    let fuse_expand = nn::init::he_normal([cfg.pathways * c, d], d, rng);
    Ok(TspParams {
        pathway_convs,
        pathway_bns: (0..cfg.pathways).map(|_| BatchNormParams::new(c)).collect(),
        fuse_compress,
        fuse_bn: BatchNormParams::new(d),
        fuse_expand,
    })
}

/// Softmax weights over pathways: `N×M×C×T` for [`FuseType::TC`], `N×M×C` for [`FuseType::C`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub fuse_type: FuseType,
    pub weights: Tensor,
}

impl AttentionMap {
    pub fn pathways(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn batch(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.weights.shape()[2]
    }

    /// Number of attention timesteps (1 for channel-wise attention).
    pub fn timesteps(&self) -> usize {
        self.weights.shape().get(3).copied().unwrap_or(1)
    }

    pub fn weight(&self, n: usize, m: usize, c: usize, t: usize) -> f64 {
        let (mm, cc, tt) = (self.pathways(), self.channels(), self.timesteps());
        self.weights.data()[((n * mm + m) * cc + c) * tt + t]
    }

    /// Largest deviation of `Σ_m attn` from 1 over all other indices.
    pub fn normalization_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..self.batch() {
            for c in 0..self.channels() {
                for t in 0..self.timesteps() {
                    let s: f64 = (0..self.pathways()).map(|m| self.weight(n, m, c, t)).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
struct PathwayCache {
    conv_out: Tensor,
    bn: BnCache,
    pre_relu: Tensor,
    out: Tensor,
}

/// Everything the backward pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct TspCache {
    input: Tensor,
    pathways: Vec<PathwayCache>,
    sum_shape: Vec<usize>,
    pooled: Tensor,
    compressed: Tensor,
    fuse_bn: BnCache,
    fuse_pre_relu: Tensor,
    hidden: Tensor,
    attn: Tensor,
    /// Per-pathway attention slices reshaped for broadcasting against `U_m`.
    attn_slices: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct TspGrads {
    pub pathway_weights: Vec<Tensor>,
    pub pathway_gammas: Vec<Tensor>,
    pub pathway_betas: Vec<Tensor>,
    pub fuse_compress: Tensor,
    pub fuse_gamma: Tensor,
    pub fuse_beta: Tensor,
    pub fuse_expand: Tensor,
}

/// Copies pathway `m` out of an `N×M×rest` tensor as `N×rest`.
fn take_pathway(a: &Tensor, m: usize) -> Tensor {
    let s = a.shape();
    let (n, mm) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    let mut out = Vec::with_capacity(n * inner);
    for b in 0..n {
        out.extend_from_slice(&a.data()[(b * mm + m) * inner..][..inner]);
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&s[2..]);
    Tensor::from_vec(shape, out).expect("pathway slice shape")
}

fn put_pathway(dst: &mut Tensor, m: usize, src: &[f64]) {
    let s = dst.shape().to_vec();
    let (n, mm) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    for b in 0..n {
        dst.data_mut()[(b * mm + m) * inner..][..inner].copy_from_slice(&src[b * inner..][..inner]);
    }
}

/// Forward pass. Train mode uses batch statistics and updates the running
/// statistics of every BN inside the block.
pub fn tsp_forward(x: &Tensor, cfg: &TspConfig, params: &mut TspParams, mode: Mode) -> Result<(Tensor, AttentionMap, TspCache)> {
    let m_count = cfg.pathways;
    if params.pathway_convs.len() != m_count || params.pathway_bns.len() != m_count {
        return Err(Error::config("parameter pathway count does not match config"));
    }
    let c = cfg.out_channels;

    // split
    let mut pathways = Vec::with_capacity(m_count);
    for (conv, bn) in params.pathway_convs.iter().zip(params.pathway_bns.iter_mut()) {
        let conv_out = conv3d(x, conv)?;
        let (pre_relu, bn_cache) = batch_norm(&conv_out, bn, mode)?;
        let out = relu(&pre_relu);
        pathways.push(PathwayCache { conv_out, bn: bn_cache, pre_relu, out });
    }
    let shape = pathways[0].out.shape().to_vec();
    if let Some(bad) = pathways.iter().find(|p| p.out.shape() != shape.as_slice()) {
        return Err(Error::ShapeMismatch { lhs: shape, rhs: bad.out.shape().to_vec() });
    }
    let (n, t) = (shape[0], shape[2]);

    // fuse
    let mut sum = pathways[0].out.clone();
    for p in &pathways[1..] {
        sum = elementwise_add(&sum, &p.out)?;
    }
    let pooled = match cfg.fuse_type {
        FuseType::TC => gap_spatial(&sum)?,
        FuseType::C => gap_spatiotemporal(&sum)?,
    };
    let compressed = pointwise_conv(&pooled, &params.fuse_compress, None)?;
    let (fuse_pre_relu, fuse_bn) = batch_norm(&compressed, &mut params.fuse_bn, mode)?;
    let hidden = relu(&fuse_pre_relu);
    let logits = pointwise_conv(&hidden, &params.fuse_expand, None)?;
    let attn_shape = match cfg.fuse_type {
        FuseType::TC => vec![n, m_count, c, t],
        FuseType::C => vec![n, m_count, c],
    };
    let logits = logits.reshape(attn_shape)?;

    // select
    let attn = softmax_over_pathways(&logits)?;
    let broadcast_shape = match cfg.fuse_type {
        FuseType::TC => vec![n, c, t, 1, 1],
        FuseType::C => vec![n, c, 1, 1, 1],
    };
    let attn_slices = (0..m_count)
        .map(|m| take_pathway(&attn, m).reshape(broadcast_shape.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut v = elementwise_mul(&pathways[0].out, &attn_slices[0])?;
    for m in 1..m_count {
        v = elementwise_add(&v, &elementwise_mul(&pathways[m].out, &attn_slices[m])?)?;
    }
    let map = AttentionMap { fuse_type: cfg.fuse_type, weights: attn.clone() };
    let cache = TspCache {
        input: x.clone(),
        pathways,
        sum_shape: shape,
        pooled,
        compressed,
        fuse_bn,
        fuse_pre_relu,
        hidden,
        attn,
        attn_slices,
    };
    Ok((v, map, cache))
}

/// Returns the input gradient and the parameter gradients for upstream `grad_out = ∂L/∂V`.
pub fn tsp_backward(cfg: &TspConfig, params: &TspParams, cache: &TspCache, grad_out: &Tensor) -> Result<(Tensor, TspGrads)> {
    let m_count = cfg.pathways;
    if grad_out.shape() != cache.sum_shape.as_slice() {
        return Err(Error::ShapeMismatch { lhs: cache.sum_shape.clone(), rhs: grad_out.shape().to_vec() });
    }

    // select: V = Σ_m A_m ⊙ U_m
    let mut grad_paths = Vec::with_capacity(m_count);
    let mut grad_attn = Tensor::zeros(cache.attn.shape().to_vec());
    for m in 0..m_count {
        let (gu, ga) = elementwise_mul_backward(&cache.pathways[m].out, &cache.attn_slices[m], grad_out)?;
        put_pathway(&mut grad_attn, m, ga.data());
        grad_paths.push(gu);
    }
    let grad_logits = softmax_over_pathways_backward(&cache.attn, &grad_attn)?;
    let grad_logits = grad_logits.reshape(
        std::iter::once(cache.hidden.shape()[0])
            .chain(std::iter::once(m_count * cfg.out_channels))
            .chain(cache.hidden.shape()[2..].iter().copied())
            .collect::<Vec<_>>(),
    )?;

    // fuse
    let expand = pointwise_conv_backward(&cache.hidden, &params.fuse_expand, &grad_logits)?;
    let grad_pre = relu_backward(&cache.fuse_pre_relu, &expand.input)?;
    let (grad_compressed, fuse_gamma, fuse_beta) = batch_norm_backward(&cache.fuse_bn, &params.fuse_bn, &grad_pre)?;
    let compress = pointwise_conv_backward(&cache.pooled, &params.fuse_compress, &grad_compressed)?;
    let grad_sum = match cfg.fuse_type {
        FuseType::TC => gap_spatial_backward(&cache.sum_shape, &compress.input)?,
        FuseType::C => gap_spatiotemporal_backward(&cache.sum_shape, &compress.input)?,
    };
    debug_assert_eq!(cache.compressed.shape(), grad_compressed.shape());

    // split
    let mut grad_input = Tensor::zeros(cache.input.shape().to_vec());
    let mut grads = TspGrads {
        pathway_weights: Vec::with_capacity(m_count),
        pathway_gammas: Vec::with_capacity(m_count),
        pathway_betas: Vec::with_capacity(m_count),
        fuse_compress: compress.weight,
        fuse_gamma,
        fuse_beta,
        fuse_expand: expand.weight,
    };
    for (m, direct) in grad_paths.into_iter().enumerate() {
        let p = &cache.pathways[m];
        let g_out = elementwise_add(&direct, &grad_sum)?;
        let g_pre = relu_backward(&p.pre_relu, &g_out)?;
        let (g_conv, gamma, beta) = batch_norm_backward(&p.bn, &params.pathway_bns[m], &g_pre)?;
        let conv = conv3d_backward(&cache.input, &params.pathway_convs[m], &g_conv)?;
        debug_assert_eq!(p.conv_out.shape(), g_conv.shape());
        grad_input = elementwise_add(&grad_input, &conv.input)?;
        grads.pathway_weights.push(conv.weight);
        grads.pathway_gammas.push(gamma);
        grads.pathway_betas.push(beta);
    }
    Ok((grad_input, grads))
}

/// A TSP block that keeps its last forward cache for the backward pass.
#[derive(Debug, Clone)]
pub struct TspBlock {
    pub cfg: TspConfig,
    pub params: TspParams,
    cache: Option<TspCache>,
}

impl TspBlock {
    pub fn new(cfg: TspConfig, params: TspParams) -> Self {
        TspBlock { cfg, params, cache: None }
    }

    pub fn init<R: Rng + ?Sized>(cfg: TspConfig, rng: &mut R) -> Result<Self> {
        let params = init_tsp_params_with(&cfg, rng)?;
        Ok(Self::new(cfg, params))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, AttentionMap)> {
        let (v, attn, cache) = tsp_forward(x, &self.cfg, &mut self.params, mode)?;
        self.cache = Some(cache);
        Ok((v, attn))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| Error::config("backward called before forward"))?;
        let (gx, grads) = tsp_backward(&self.cfg, &self.params, &cache, grad_out)?;
        self.params.accumulate(&grads)?;
        Ok(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dilation_sets() {
        assert_eq!(build_dilation_set(3, RfOption::O1).unwrap(), vec![[1, 1, 1], [2, 2, 2], [3, 3, 3]]);
        assert_eq!(
            build_dilation_set(4, RfOption::O2).unwrap(),
            vec![[1, 1, 1], [4, 4, 4], [1, 4, 4], [4, 1, 1]]
        );
        for rf in [RfOption::O1, RfOption::O2] {
            assert_eq!(build_dilation_set(1, rf).unwrap(), vec![[1, 1, 1]]);
        }
        assert!(build_dilation_set(5, RfOption::O2).is_err());
        assert!(build_dilation_set(0, RfOption::O1).is_err());
        assert_eq!(build_dilation_set(6, RfOption::O1).unwrap().len(), 6);
    }

    #[test]
    fn hidden_width_rule() {
        let cfg = TspConfig::new(8, 256, 2, RfOption::O1, FuseType::TC).unwrap();
        assert_eq!(cfg.hidden_width(), 32);
        let cfg = cfg.with_hidden_rule(4, 8).unwrap();
        assert_eq!(cfg.hidden_width(), 64);
        let small = TspConfig::new(4, 4, 2, RfOption::O1, FuseType::C).unwrap().with_hidden_rule(16, 3).unwrap();
        assert_eq!(small.hidden_width(), 3);
    }

    #[test]
    fn config_validation() {
        assert!(TspConfig::new(6, 8, 2, RfOption::O1, FuseType::TC).unwrap().with_groups(4).is_err());
        let mut cfg = TspConfig::new(4, 4, 2, RfOption::O1, FuseType::TC).unwrap();
        cfg.dilations.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_bn_identity() {
        let cfg = TspConfig::new(4, 8, 3, RfOption::O1, FuseType::TC).unwrap();
        let a = init_tsp_params(&cfg, 11).unwrap();
        let b = init_tsp_params(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_tsp_params(&cfg, 12).unwrap());
        for bn in a.pathway_bns.iter().chain(std::iter::once(&a.fuse_bn)) {
            assert!(bn.gamma.data().iter().all(|&g| g == 1.0));
            assert!(bn.beta.data().iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.pathway_convs[2].padding, [3, 3, 3]);
        assert_eq!(a.fuse_expand.shape(), &[24, 32]);
    }

    #[test]
    fn single_pathway_passes_through() {
        let cfg = TspConfig::new(2, 3, 1, RfOption::O1, FuseType::TC).unwrap().with_hidden_rule(16, 4).unwrap();
        let mut params = init_tsp_params(&cfg, 5).unwrap();
        let x = Tensor::from_fn([2, 2, 3, 4, 4], |i| ((i * 31) % 17) as f64 / 8.0 - 1.0);
        let (v, attn, _) = tsp_forward(&x, &cfg, &mut params.clone(), Mode::Train).unwrap();
        assert!(attn.weights.data().iter().all(|&a| a == 1.0));
        let conv = conv3d(&x, &params.pathway_convs[0]).unwrap();
        let (bn, _) = batch_norm(&conv, &mut params.pathway_bns[0], Mode::Train).unwrap();
        assert_eq!(v, relu(&bn));
    }

    #[test]
    fn strided_block_downsamples() {
        let cfg = TspConfig::new(2, 4, 2, RfOption::O2, FuseType::TC)
            .unwrap()
            .with_stride([2, 2, 2])
            .unwrap()
            .with_hidden_rule(16, 4)
            .unwrap();
        let mut params = init_tsp_params(&cfg, 1).unwrap();
        let x = Tensor::from_fn([2, 2, 4, 6, 6], |i| (i % 7) as f64 / 7.0);
        let (v, attn, _) = tsp_forward(&x, &cfg, &mut params, Mode::Train).unwrap();
        assert_eq!(v.shape(), &[2, 4, 2, 3, 3]);
        assert_eq!(attn.weights.shape(), &[2, 2, 4, 2]);
    }
}
