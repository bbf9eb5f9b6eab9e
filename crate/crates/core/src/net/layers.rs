//! Cached forward/backward wrappers around the stateless ops.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    self, batch_norm, batch_norm_backward, conv3d, conv3d_backward, pointwise_conv, pointwise_conv_backward, relu,
    relu_backward, BatchNormParams, BnCache, Conv3dParams, Mode, Triple,
};
use crate::tensor::Tensor;

/// Callback used to walk named tensors; the flag is `true` for trainable parameters.
pub type Visitor<'a> = dyn FnMut(&str, &Tensor, bool) + 'a;
pub type VisitorMut<'a> = dyn FnMut(&str, &mut Tensor, bool) + 'a;

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn visit_bn(prefix: &str, bn: &BatchNormParams, f: &mut Visitor<'_>) {
    f(&join(prefix, "gamma"), &bn.gamma, true);
    f(&join(prefix, "beta"), &bn.beta, true);
    f(&join(prefix, "running_mean"), &bn.running_mean, false);
    f(&join(prefix, "running_var"), &bn.running_var, false);
}

pub(crate) fn visit_bn_mut(prefix: &str, bn: &mut BatchNormParams, f: &mut VisitorMut<'_>) {
    f(&join(prefix, "gamma"), &mut bn.gamma, true);
    f(&join(prefix, "beta"), &mut bn.beta, true);
    f(&join(prefix, "running_mean"), &mut bn.running_mean, false);
    f(&join(prefix, "running_var"), &mut bn.running_var, false);
}

#[derive(Debug, Clone)]
struct ConvBnCache {
    input: Tensor,
    bn: BnCache,
    pre_act: Tensor,
}

/// 3D convolution → BN → optional ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: Conv3dParams,
    pub bn: BatchNormParams,
    pub relu: bool,
    cache: Option<ConvBnCache>,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        kernel: Triple,
        stride: Triple,
        padding: Triple,
        groups: usize,
        relu: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if groups == 0 || !cin.is_multiple_of(groups) || !cout.is_multiple_of(groups) {
            return Err(Error::config(format!("groups {groups} must divide {cin} and {cout}")));
        }
        let fan_in = cin / groups * kernel.iter().product::<usize>();
        let conv = Conv3dParams {
            weight: nn::init::he_normal([cout, cin / groups, kernel[0], kernel[1], kernel[2]], fan_in, rng),
            bias: None,
            stride,
            dilation: [1; 3],
            padding,
            groups,
        };
        conv.validate()?;
        Ok(ConvBn { conv, bn: BatchNormParams::new(cout), relu, cache: None })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = conv3d(x, &self.conv)?;
        let (pre_act, bn) = batch_norm(&y, &mut self.bn, mode)?;
        let out = if self.relu { relu(&pre_act) } else { pre_act.clone() };
        self.cache = Some(ConvBnCache { input: x.clone(), bn, pre_act });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| Error::config("backward called before forward"))?;
        let g = if self.relu { relu_backward(&cache.pre_act, grad_out)? } else { grad_out.clone() };
        let (g, gamma, beta) = batch_norm_backward(&cache.bn, &self.bn, &g)?;
        let grads = conv3d_backward(&cache.input, &self.conv, &g)?;
        self.conv.weight.accumulate_grad(&grads.weight)?;
        self.bn.gamma.accumulate_grad(&gamma)?;
        self.bn.beta.accumulate_grad(&beta)?;
        Ok(grads.input)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        f(&join(prefix, "conv.weight"), &self.conv.weight, true);
        visit_bn(&join(prefix, "bn"), &self.bn, f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        f(&join(prefix, "conv.weight"), &mut self.conv.weight, true);
        visit_bn_mut(&join(prefix, "bn"), &mut self.bn, f);
    }
}

#[derive(Debug, Clone)]
struct PointwiseBnCache {
    input: Tensor,
    bn: BnCache,
    pre_act: Tensor,
}

/// Pointwise convolution → BN → optional ReLU.
#[derive(Debug, Clone)]
pub struct PointwiseBn {
    /// `Cout × Cin`
    pub weight: Tensor,
    pub bn: BatchNormParams,
    pub relu: bool,
    cache: Option<PointwiseBnCache>,
}

impl PointwiseBn {
    pub fn init<R: Rng + ?Sized>(cin: usize, cout: usize, relu: bool, rng: &mut R) -> Self {
        PointwiseBn { weight: nn::init::he_normal([cout, cin], cin, rng), bn: BatchNormParams::new(cout), relu, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = pointwise_conv(x, &self.weight, None)?;
        let (pre_act, bn) = batch_norm(&y, &mut self.bn, mode)?;
        let out = if self.relu { relu(&pre_act) } else { pre_act.clone() };
        self.cache = Some(PointwiseBnCache { input: x.clone(), bn, pre_act });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| Error::config("backward called before forward"))?;
        let g = if self.relu { relu_backward(&cache.pre_act, grad_out)? } else { grad_out.clone() };
        let (g, gamma, beta) = batch_norm_backward(&cache.bn, &self.bn, &g)?;
        let grads = pointwise_conv_backward(&cache.input, &self.weight, &g)?;
        self.weight.accumulate_grad(&grads.weight)?;
        self.bn.gamma.accumulate_grad(&gamma)?;
        self.bn.beta.accumulate_grad(&beta)?;
        Ok(grads.input)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        f(&join(prefix, "weight"), &self.weight, true);
        visit_bn(&join(prefix, "bn"), &self.bn, f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        f(&join(prefix, "weight"), &mut self.weight, true);
        visit_bn_mut(&join(prefix, "bn"), &mut self.bn, f);
    }
}

/// Fully connected classifier over `N×C` features.
#[derive(Debug, Clone)]
pub struct Linear {
    /// `classes × C`
    pub weight: Tensor,
    pub bias: Tensor,
    cache: Option<Tensor>,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(cin: usize, cout: usize, std: f64, rng: &mut R) -> Self {
        Linear { weight: nn::init::normal([cout, cin], std, rng), bias: Tensor::zeros([cout]), cache: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = pointwise_conv(x, &self.weight, Some(&self.bias))?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.cache.take().ok_or_else(|| Error::config("backward called before forward"))?;
        let grads = pointwise_conv_backward(&input, &self.weight, grad_out)?;
        self.weight.accumulate_grad(&grads.weight)?;
        self.bias.accumulate_grad(&grads.bias)?;
        Ok(grads.input)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        f(&join(prefix, "weight"), &self.weight, true);
        f(&join(prefix, "bias"), &self.bias, true);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        f(&join(prefix, "weight"), &mut self.weight, true);
        f(&join(prefix, "bias"), &mut self.bias, true);
    }
}
