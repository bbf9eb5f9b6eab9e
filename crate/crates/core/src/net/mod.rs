//! ResNeXt-style bottleneck network with TSP blocks in place of the 3×3×3
//! convolution of stages 1–3. Stage 4 keeps a plain grouped convolution.

mod checkpoint;
mod layers;

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, ManifestEntry, MANIFEST_FILE};
pub use layers::{ConvBn, Linear, PointwiseBn, Visitor, VisitorMut};

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gap_spatiotemporal, gap_spatiotemporal_backward, relu, relu_backward, Mode, Triple};
use crate::tensor::{elementwise_add, Tensor};
use crate::tsp::{AttentionMap, FuseType, RfOption, TspBlock, TspConfig, DEFAULT_MIN_HIDDEN, DEFAULT_REDUCTION};
use layers::join;

/// Bottleneck blocks per stage for the supported depths.
pub fn stage_blocks(depth: usize) -> Result<[usize; 4]> {
    match depth {
        26 => Ok([2, 2, 2, 2]),
        50 => Ok([3, 4, 6, 3]),
        101 => Ok([3, 4, 23, 3]),
        _ => Err(Error::config(format!("unsupported depth {depth} (expected 26, 50 or 101)"))),
    }
}

pub const TINY_WIDTHS: [usize; 4] = [8, 16, 32, 64];
pub const TINY_CARDINALITY: usize = 2;
pub const TINY_MIN_HIDDEN: usize = 8;
const CLASSIFIER_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub depth: usize,
    pub cardinality: usize,
    pub num_classes: usize,
    pub pathways: usize,
    pub rf_option: RfOption,
    pub fuse_type: FuseType,
    /// Inner (grouped-conv) width of each stage; stage output is `expansion` times wider.
    pub widths: [usize; 4],
    pub expansion: usize,
    pub stem_width: usize,
    pub stem_stride: Triple,
    pub reduction: usize,
    pub min_hidden: usize,
    pub in_channels: usize,
    /// `(T, H, W)` of the input clips.
    pub clip: Triple,
}

impl NetworkConfig {
    /// Full-width preset: inner widths `{64, 128, 256, 512} · cardinality / 16`.
    pub fn standard(depth: usize, cardinality: usize, pathways: usize, rf_option: RfOption, fuse_type: FuseType) -> Result<Self> {
        if cardinality == 0 || !cardinality.is_multiple_of(16) && 16 % cardinality != 0 {
            return Err(Error::config(format!("unsupported cardinality {cardinality}")));
        }
        let widths = [64, 128, 256, 512].map(|w| w * cardinality / 16);
        let cfg = NetworkConfig {
            depth,
            cardinality,
            num_classes: 400,
            pathways,
            rf_option,
            fuse_type,
            widths,
            expansion: 4,
            stem_width: widths[0],
            stem_stride: [1, 2, 2],
            reduction: DEFAULT_REDUCTION,
            min_hidden: DEFAULT_MIN_HIDDEN,
            in_channels: 3,
            clip: [16, 112, 112],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Test-scale preset: inner widths `[8, 16, 32, 64]`, cardinality 2, `L = 8`.
    pub fn tiny(depth: usize, pathways: usize, rf_option: RfOption, fuse_type: FuseType) -> Result<Self> {
        let cfg = NetworkConfig {
            depth,
            cardinality: TINY_CARDINALITY,
            num_classes: 4,
            pathways,
            rf_option,
            fuse_type,
            widths: TINY_WIDTHS,
            expansion: 4,
            stem_width: TINY_WIDTHS[0],
            stem_stride: [1, 2, 2],
            reduction: DEFAULT_REDUCTION,
            min_hidden: TINY_MIN_HIDDEN,
            in_channels: 1,
            clip: [16, 32, 32],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn with_input(mut self, in_channels: usize, clip: Triple) -> Self {
        self.in_channels = in_channels;
        self.clip = clip;
        self
    }

    pub fn stage_blocks(&self) -> Result<[usize; 4]> {
        stage_blocks(self.depth)
    }

    pub fn validate(&self) -> Result<()> {
        self.stage_blocks()?;
        for &w in &self.widths {
            if self.cardinality == 0 || w % self.cardinality != 0 {
                return Err(Error::config(format!("cardinality {} does not divide stage width {w}", self.cardinality)));
            }
        }
        if self.num_classes == 0 || self.in_channels == 0 || self.stem_width == 0 || self.expansion == 0 {
            return Err(Error::config("class, channel and width counts must be positive"));
        }
        if self.clip.contains(&0) || self.stem_stride.contains(&0) {
            return Err(Error::config("clip extents and stem stride must be positive"));
        }
        crate::tsp::build_dilation_set(self.pathways, self.rf_option)?;
        Ok(())
    }
}

/// The 3×3×3 stage of a bottleneck.
#[derive(Debug, Clone)]
pub enum Spatial {
    Tsp(TspBlock),
    Plain(ConvBn),
}

#[derive(Debug, Clone)]
pub struct Bottleneck {
    pub reduce: PointwiseBn,
    pub spatial: Spatial,
    pub expand: PointwiseBn,
    /// Strided pointwise projection + BN when the residual changes shape.
    pub projection: Option<ConvBn>,
    pre_act: Option<Tensor>,
}

impl Bottleneck {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<AttentionMap>)> {
        let h = self.reduce.forward(x, mode)?;
        let (h, attn) = match &mut self.spatial {
            Spatial::Tsp(block) => {
                let (v, a) = block.forward(&h, mode)?;
                (v, Some(a))
            }
            Spatial::Plain(conv) => (conv.forward(&h, mode)?, None),
        };
        let h = self.expand.forward(&h, mode)?;
        let shortcut = match &mut self.projection {
            Some(p) => p.forward(x, mode)?,
            None => x.clone(),
        };
        let sum = elementwise_add(&h, &shortcut)?;
        let out = relu(&sum);
        self.pre_act = Some(sum);
        Ok((out, attn))
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let pre = self.pre_act.take().ok_or_else(|| Error::config("backward called before forward"))?;
        let g = relu_backward(&pre, grad_out)?;
        let gh = self.expand.backward(&g)?;
        let gh = match &mut self.spatial {
            Spatial::Tsp(block) => block.backward(&gh)?,
            Spatial::Plain(conv) => conv.backward(&gh)?,
        };
        let gx_main = self.reduce.backward(&gh)?;
        let gx_short = match &mut self.projection {
            Some(p) => p.backward(&g)?,
            None => g,
        };
        elementwise_add(&gx_main, &gx_short)
    }

    pub fn is_tsp(&self) -> bool {
        matches!(self.spatial, Spatial::Tsp(_))
    }

    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.reduce.visit(&join(prefix, "reduce"), f);
        match &self.spatial {
            Spatial::Tsp(block) => {
                let p = &block.params;
                let pre = join(prefix, "tsp");
                for (m, (conv, bn)) in p.pathway_convs.iter().zip(&p.pathway_bns).enumerate() {
                    f(&join(&pre, &format!("path{m}.conv.weight")), &conv.weight, true);
                    layers::visit_bn(&join(&pre, &format!("path{m}.bn")), bn, f);
                }
                f(&join(&pre, "fuse.compress.weight"), &p.fuse_compress, true);
                layers::visit_bn(&join(&pre, "fuse.bn"), &p.fuse_bn, f);
                f(&join(&pre, "fuse.expand.weight"), &p.fuse_expand, true);
            }
            Spatial::Plain(conv) => conv.visit(&join(prefix, "conv3"), f),
        }
        self.expand.visit(&join(prefix, "expand"), f);
        if let Some(p) = &self.projection {
            p.visit(&join(prefix, "projection"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_>) {
        self.reduce.visit_mut(&join(prefix, "reduce"), f);
        match &mut self.spatial {
            Spatial::Tsp(block) => {
                let p = &mut block.params;
                let pre = join(prefix, "tsp");
                for (m, (conv, bn)) in p.pathway_convs.iter_mut().zip(&mut p.pathway_bns).enumerate() {
                    f(&join(&pre, &format!("path{m}.conv.weight")), &mut conv.weight, true);
                    layers::visit_bn_mut(&join(&pre, &format!("path{m}.bn")), bn, f);
                }
                f(&join(&pre, "fuse.compress.weight"), &mut p.fuse_compress, true);
                layers::visit_bn_mut(&join(&pre, "fuse.bn"), &mut p.fuse_bn, f);
                f(&join(&pre, "fuse.expand.weight"), &mut p.fuse_expand, true);
            }
            Spatial::Plain(conv) => conv.visit_mut(&join(prefix, "conv3"), f),
        }
        self.expand.visit_mut(&join(prefix, "expand"), f);
        if let Some(p) = &mut self.projection {
            p.visit_mut(&join(prefix, "projection"), f);
        }
    }
}

/// Attention produced by one TSP block during a forward pass.
#[derive(Debug, Clone)]
pub struct BlockAttention {
    /// Index among TSP blocks in forward order (`block0`, `block1`, ...).
    pub block_id: usize,
    pub name: String,
    pub dilations: Vec<Triple>,
    pub map: AttentionMap,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub attention: Vec<BlockAttention>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub cfg: NetworkConfig,
    pub stem: ConvBn,
    pub stages: Vec<Vec<Bottleneck>>,
    pub classifier: Linear,
    pooled_input_shape: Option<Vec<usize>>,
}

pub fn build_network(cfg: &NetworkConfig, seed: u64) -> Result<Network> {
    Network::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(seed))
}

impl Network {
    pub fn new<R: Rng + ?Sized>(cfg: NetworkConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let stem = ConvBn::init(cfg.in_channels, cfg.stem_width, [3, 3, 3], cfg.stem_stride, [1, 1, 1], 1, true, rng)?;
        let blocks = cfg.stage_blocks()?;
        let mut cin = cfg.stem_width;
        let mut stages = Vec::with_capacity(4);
        for (s, &count) in blocks.iter().enumerate() {
            let width = cfg.widths[s];
            let cout = width * cfg.expansion;
            let mut stage = Vec::with_capacity(count);
            for b in 0..count {
                let stride = if s > 0 && b == 0 { [2, 2, 2] } else { [1, 1, 1] };
                let reduce = PointwiseBn::init(cin, width, true, rng);
                let spatial = if s < 3 {
                    let tsp = TspConfig::new(width, width, cfg.pathways, cfg.rf_option, cfg.fuse_type)?
                        .with_groups(cfg.cardinality)?
                        .with_stride(stride)?
                        .with_hidden_rule(cfg.reduction, cfg.min_hidden)?;
                    Spatial::Tsp(TspBlock::init(tsp, rng)?)
                } else {
                    Spatial::Plain(ConvBn::init(width, width, [3, 3, 3], stride, [1, 1, 1], cfg.cardinality, true, rng)?)
                };
                let expand = PointwiseBn::init(width, cout, false, rng);
                let projection = if cin != cout || stride != [1, 1, 1] {
                    Some(ConvBn::init(cin, cout, [1, 1, 1], stride, [0, 0, 0], 1, false, rng)?)
                } else {
                    None
                };
                stage.push(Bottleneck { reduce, spatial, expand, projection, pre_act: None });
                cin = cout;
            }
            stages.push(stage);
        }
        let classifier = Linear::init(cin, cfg.num_classes, CLASSIFIER_STD, rng);
        Ok(Network { cfg, stem, stages, classifier, pooled_input_shape: None })
    }

    pub fn forward(&mut self, clips: &Tensor, mode: Mode) -> Result<ForwardOutput> {
        let s = clips.shape();
        let expect = [self.cfg.in_channels, self.cfg.clip[0], self.cfg.clip[1], self.cfg.clip[2]];
        if s.len() != 5 || s[1..] != expect {
            return Err(Error::ShapeMismatch { lhs: [&[s.first().copied().unwrap_or(0)][..], &expect].concat(), rhs: s.to_vec() });
        }
        let mut h = self.stem.forward(clips, mode)?;
        let mut attention = Vec::new();
        for (si, stage) in self.stages.iter_mut().enumerate() {
            for (bi, block) in stage.iter_mut().enumerate() {
                let (out, attn) = block.forward(&h, mode)?;
                if let (Some(map), Spatial::Tsp(tsp)) = (attn, &block.spatial) {
                    attention.push(BlockAttention {
                        block_id: attention.len(),
                        name: format!("stage{}.block{bi}", si + 1),
                        dilations: tsp.cfg.dilations.clone(),
                        map,
                    });
                }
                h = out;
            }
        }
        let pooled = gap_spatiotemporal(&h)?;
        self.pooled_input_shape = Some(h.shape().to_vec());
        let logits = self.classifier.forward(&pooled)?;
        Ok(ForwardOutput { logits, attention })
    }

    /// Backpropagates `∂L/∂logits`, accumulating into every parameter's gradient.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Tensor> {
        let shape = self.pooled_input_shape.take().ok_or_else(|| Error::config("backward called before forward"))?;
        let g = self.classifier.backward(grad_logits)?;
        let mut g = gap_spatiotemporal_backward(&shape, &g)?;
        for stage in self.stages.iter_mut().rev() {
            for block in stage.iter_mut().rev() {
                g = block.backward(&g)?;
            }
        }
        self.stem.backward(&g)
    }

    /// Walks every named tensor in a fixed order; the flag marks trainable parameters.
    pub fn visit(&self, f: &mut Visitor<'_>) {
        self.stem.visit("stem", f);
        for (si, stage) in self.stages.iter().enumerate() {
            for (bi, block) in stage.iter().enumerate() {
                block.visit(&format!("stage{}.block{bi}", si + 1), f);
            }
        }
        self.classifier.visit("classifier", f);
    }

    pub fn visit_mut(&mut self, f: &mut VisitorMut<'_>) {
        self.stem.visit_mut("stem", f);
        for (si, stage) in self.stages.iter_mut().enumerate() {
            for (bi, block) in stage.iter_mut().enumerate() {
                block.visit_mut(&format!("stage{}.block{bi}", si + 1), f);
            }
        }
        self.classifier.visit_mut("classifier", f);
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, t, trainable| {
            if trainable {
                t.zero_grad();
            }
        });
    }

    pub fn tsp_block_count(&self) -> usize {
        self.stages.iter().flatten().filter(|b| b.is_tsp()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: usize,
    /// `(layer name, trainable element count)` in visit order.
    pub per_layer: Vec<(String, usize)>,
}

/// Trainable element counts (weights, biases, BN affine, fuse weights, classifier).
/// Running statistics are excluded.
pub fn count_params(net: &Network) -> ParamCount {
    let mut order = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    net.visit(&mut |name, t, trainable| {
        if !trainable {
            return;
        }
        let layer = name.rsplit_once('.').map_or(name, |(l, _)| l).to_string();
        if !counts.contains_key(&layer) {
            order.push(layer.clone());
        }
        *counts.entry(layer).or_default() += t.numel();
    });
    let per_layer: Vec<(String, usize)> = order.into_iter().map(|l| {
        let c = counts[&l];
        (l, c)
    }).collect();
    ParamCount { total: per_layer.iter().map(|(_, c)| c).sum(), per_layer }
}
