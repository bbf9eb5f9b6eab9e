//! Receptive-field calculus for stacks of dilated 3D convolutions.
//!
//! Padding never enters the accounting: the receptive field is the span of
//! input positions an output depends on, not which outputs exist.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv3d_backward, Conv3dParams, Triple};
use crate::tensor::Tensor;

pub const AXES: [&str; 3] = ["t", "h", "w"];

fn ones() -> Triple {
    [1, 1, 1]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kernel: Triple,
    #[serde(default = "ones")]
    pub stride: Triple,
    #[serde(default = "ones")]
    pub dilation: Triple,
    #[serde(default)]
    pub padding: Triple,
    /// Temporal subsampling applied to the input of this layer, SlowFast style.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_sampling_rate: Option<usize>,
}

impl LayerSpec {
    pub fn new(kernel: Triple, stride: Triple, dilation: Triple) -> Self {
        LayerSpec { kernel, stride, dilation, padding: [0; 3], input_sampling_rate: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.contains(&0) || self.stride.contains(&0) || self.dilation.contains(&0) {
            return Err(Error::config(format!("layer {self:?}: kernel, stride and dilation must be >= 1")));
        }
        if self.input_sampling_rate == Some(0) {
            return Err(Error::config("input sampling rate must be >= 1"));
        }
        Ok(())
    }

    /// Per-axis input subsampling factor; only the temporal axis is subsampled.
    fn sampling(&self) -> Triple {
        [self.input_sampling_rate.unwrap_or(1), 1, 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RfState {
    /// Span in units of the stack's own input.
    pub rf: Triple,
    /// Distance between adjacent taps, in original-frame units.
    pub jump: Triple,
    /// Span in original-frame units (differs from `rf` once the input is subsampled).
    pub rf_original: Triple,
}

/// The receptive field after each layer of the stack.
pub fn rf_trace(stack: &[LayerSpec]) -> Result<Vec<RfState>> {
    let mut rf = [1usize; 3];
    let mut jump_local = [1usize; 3];
    let mut rf_orig = [1usize; 3];
    let mut jump = [1usize; 3];
    let mut trace = Vec::with_capacity(stack.len());
    for (i, layer) in stack.iter().enumerate() {
        layer.validate()?;
        let q = layer.sampling();
        for a in 0..3 {
            if i > 0 {
                // subsampling between layers acts like a k=1 layer with stride q
                jump_local[a] *= q[a];
            }
            jump[a] *= q[a];
            let reach = (layer.kernel[a] - 1) * layer.dilation[a];
            rf[a] += reach * jump_local[a];
            rf_orig[a] += reach * jump[a];
            jump_local[a] *= layer.stride[a];
            jump[a] *= layer.stride[a];
        }
        trace.push(RfState { rf, jump, rf_original: rf_orig });
    }
    Ok(trace)
}

/// `(rf, jump)` of the whole stack; see [`RfState`] for units.
pub fn analytic_rf(stack: &[LayerSpec]) -> Result<RfState> {
    if stack.is_empty() {
        return Err(Error::config("receptive field of an empty stack"));
    }
    Ok(*rf_trace(stack)?.last().expect("nonempty"))
}

/// Receptive field measured as the bounding box of the nonzero input gradient
/// of one central output, through a stack of all-positive constant kernels.
///
/// Sampling rates are realised as a `1×1×1` layer with temporal stride `q`, so
/// the result is in original-frame units.
pub fn empirical_rf(stack: &[LayerSpec], probe_size: Triple) -> Result<Triple> {
    let analytic = analytic_rf(stack)?;
    for a in 0..3 {
        if probe_size[a] <= analytic.rf_original[a] {
            return Err(Error::config(format!(
                "probe extent {} on axis {} must exceed the receptive field {}",
                probe_size[a], AXES[a], analytic.rf_original[a]
            )));
        }
    }
    let mut layers = Vec::new();
    for spec in stack {
        if let Some(q) = spec.input_sampling_rate.filter(|&q| q > 1) {
            layers.push(Conv3dParams {
                weight: Tensor::ones([1, 1, 1, 1, 1]),
                bias: None,
                stride: [q, 1, 1],
                dilation: [1; 3],
                padding: [0; 3],
                groups: 1,
            });
        }
        layers.push(Conv3dParams {
            weight: Tensor::ones([1, 1, spec.kernel[0], spec.kernel[1], spec.kernel[2]]),
            bias: None,
            stride: spec.stride,
            dilation: spec.dilation,
            padding: [0; 3],
            groups: 1,
        });
    }
    let mut inputs = vec![Tensor::ones([1, 1, probe_size[0], probe_size[1], probe_size[2]])];
    for layer in &layers {
        let y = crate::nn::conv3d(inputs.last().expect("input"), layer)?;
        inputs.push(y);
    }
    let out = inputs.pop().expect("output");
    let os = out.shape();
    let center = [os[2] / 2, os[3] / 2, os[4] / 2];
    let mut grad = Tensor::zeros(os.to_vec());
    grad.set(&[0, 0, center[0], center[1], center[2]], 1.0);
    for (layer, input) in layers.iter().zip(&inputs).rev() {
        grad = conv3d_backward(input, layer, &grad)?.input;
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let gs = grad.shape().to_vec();
    for (flat, &g) in grad.data().iter().enumerate() {
        if g != 0.0 {
            let idx = crate::tensor::unflatten(&gs, flat);
            for a in 0..3 {
                lo[a] = lo[a].min(idx[a + 2]);
                hi[a] = hi[a].max(idx[a + 2]);
            }
        }
    }
    if lo[0] == usize::MAX {
        return Err(Error::config("probe produced no gradient support"));
    }
    Ok([0, 1, 2].map(|a| hi[a] - lo[a] + 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RfRow {
    pub axis: &'static str,
    pub layer_index: usize,
    pub rf: usize,
    pub jump: usize,
    pub rf_original_frames: usize,
}

pub fn rf_rows(stack: &[LayerSpec]) -> Result<Vec<RfRow>> {
    let trace = rf_trace(stack)?;
    let mut rows = Vec::new();
    for (a, axis) in AXES.iter().enumerate() {
        for (i, st) in trace.iter().enumerate() {
            rows.push(RfRow { axis, layer_index: i, rf: st.rf[a], jump: st.jump[a], rf_original_frames: st.rf_original[a] });
        }
    }
    Ok(rows)
}

/// Layer-by-layer receptive fields of two stacks side by side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathwayComparison {
    pub a: Vec<RfRow>,
    pub b: Vec<RfRow>,
}

pub fn compare_pathways(a: &[LayerSpec], b: &[LayerSpec]) -> Result<PathwayComparison> {
    Ok(PathwayComparison { a: rf_rows(a)?, b: rf_rows(b)? })
}

pub const RF_CSV_HEADER: &str = "axis,layer_index,rf,jump,rf_original_frames";

pub fn write_rf_csv<W: Write>(mut w: W, rows: &[RfRow]) -> Result<()> {
    writeln!(w, "{RF_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.axis, r.layer_index, r.rf, r.jump, r.rf_original_frames)?;
    }
    Ok(())
}

/// Same columns as [`write_rf_csv`] with a leading `stack` column (`a` or `b`).
pub fn write_comparison_csv<W: Write>(mut w: W, cmp: &PathwayComparison) -> Result<()> {
    writeln!(w, "stack,{RF_CSV_HEADER}")?;
    for (tag, rows) in [("a", &cmp.a), ("b", &cmp.b)] {
        for r in rows {
            writeln!(w, "{tag},{},{},{},{},{}", r.axis, r.layer_index, r.rf, r.jump, r.rf_original_frames)?;
        }
    }
    Ok(())
}

pub fn parse_stack(json: &str) -> Result<Vec<LayerSpec>> {
    let stack: Vec<LayerSpec> = serde_json::from_str(json)?;
    for l in &stack {
        l.validate()?;
    }
    Ok(stack)
}
