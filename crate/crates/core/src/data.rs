//! Synthetic moving-square clips: four classes from {slow, fast} × {horizontal, vertical}.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_labels, load_tensor, save_labels, save_tensor};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speed {
    Slow,
    Fast,
}

/// Label `2·speed + direction`: 0 slow-horizontal, 1 slow-vertical, 2 fast-horizontal, 3 fast-vertical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionClass {
    pub speed: Speed,
    pub direction: Direction,
}

impl MotionClass {
    pub fn from_label(label: usize) -> Result<Self> {
        if label >= NUM_CLASSES {
            return Err(Error::config(format!("label {label} out of range")));
        }
        let speed = if label / 2 == 0 { Speed::Slow } else { Speed::Fast };
        let direction = if label.is_multiple_of(2) { Direction::Horizontal } else { Direction::Vertical };
        Ok(MotionClass { speed, direction })
    }

    pub fn label(self) -> usize {
        2 * (self.speed == Speed::Fast) as usize + (self.direction == Direction::Vertical) as usize
    }

    pub fn is_fast(label: usize) -> bool {
        label / 2 == 1
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.speed {
            Speed::Slow => "slow",
            Speed::Fast => "fast",
        };
        let d = match self.direction {
            Direction::Horizontal => "horizontal",
            Direction::Vertical => "vertical",
        };
        write!(f, "{s}-{d}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    /// Pixels per frame.
    pub slow_speed: usize,
    pub fast_speed: usize,
    pub square: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        SyntheticTaskSpec { t: 16, h: 32, w: 32, slow_speed: 1, fast_speed: 3, square: 5, noise_std: 0.05, seed: 0 }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::config("clip extents must be positive"));
        }
        if self.square == 0 || self.square > self.h || self.square > self.w {
            return Err(Error::config(format!("square {} does not fit a {}×{} frame", self.square, self.h, self.w)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("noise stddev must be finite and non-negative"));
        }
        Ok(())
    }
}

/// `N×C×T×H×W` clips in `[0, 1]` with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipBatch {
    pub clips: Tensor,
    pub labels: Vec<usize>,
}

impl ClipBatch {
    pub fn new(clips: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if clips.rank() != 5 || clips.shape()[0] != labels.len() {
            return Err(Error::config(format!("{} labels for clips of shape {:?}", labels.len(), clips.shape())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::config(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(ClipBatch { clips, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(C, T, H, W)` of one clip.
    pub fn clip_shape(&self) -> [usize; 4] {
        let s = self.clips.shape();
        [s[1], s[2], s[3], s[4]]
    }

    /// Gathers the listed clips, in order, into a new batch.
    pub fn select(&self, indices: &[usize]) -> ClipBatch {
        let per: usize = self.clip_shape().iter().product();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.clips.data()[i * per..][..per]);
        }
        let mut shape = self.clips.shape().to_vec();
        shape[0] = indices.len();
        ClipBatch {
            clips: Tensor::from_vec(shape, data).expect("selection shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>, split: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        save_tensor(dir.join(format!("{split}.btsc")), &self.clips)?;
        save_labels(dir.join(format!("{split}.labels")), &self.labels)
    }

    pub fn load(dir: impl AsRef<Path>, split: &str, num_classes: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let clips = load_tensor(dir.join(format!("{split}.btsc")))?;
        let labels = load_labels(dir.join(format!("{split}.labels")))?;
        ClipBatch::new(clips, labels, num_classes)
    }
}

/// Top-left corner of the square at frame `t` (wrapping on the torus).
fn position(start: (usize, usize), class: MotionClass, speed: usize, t: usize, h: usize, w: usize) -> (usize, usize) {
    let step = speed * t;
    match class.direction {
        Direction::Horizontal => (start.0, (start.1 + step) % w),
        Direction::Vertical => ((start.0 + step) % h, start.1),
    }
}

/// Renders one noise-free single-channel clip `T×H×W`.
pub fn render_clip(spec: &SyntheticTaskSpec, class: MotionClass, start: (usize, usize)) -> Vec<f64> {
    let (t_n, h, w) = (spec.t, spec.h, spec.w);
    let speed = match class.speed {
        Speed::Slow => spec.slow_speed,
        Speed::Fast => spec.fast_speed,
    };
    let mut frames = vec![0.0; t_n * h * w];
    for t in 0..t_n {
        let (r0, c0) = position(start, class, speed, t, h, w);
        for dr in 0..spec.square {
            for dc in 0..spec.square {
                let (r, c) = ((r0 + dr) % h, (c0 + dc) % w);
                frames[(t * h + r) * w + c] = 1.0;
            }
        }
    }
    frames
}

/// Clip `i` of a split gets label `i % 4` and its own RNG stream, so the batch
/// is a pure function of `(spec.seed, split, n_per_class)`.
pub fn generate_split(spec: &SyntheticTaskSpec, n_per_class: usize, split: u64) -> Result<ClipBatch> {
    spec.validate()?;
    if n_per_class == 0 {
        return Err(Error::config("n_per_class must be at least 1"));
    }
    let n = n_per_class * NUM_CLASSES;
    let per = spec.t * spec.h * spec.w;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::config(e.to_string()))?;
    let mut data = Vec::with_capacity(n * per);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % NUM_CLASSES;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream((split << 32) | i as u64);
        let start = (rng.random_range(0..spec.h), rng.random_range(0..spec.w));
        let clip = render_clip(spec, MotionClass::from_label(label)?, start);
        data.extend(clip.into_iter().map(|v| {
            let v = if spec.noise_std > 0.0 { v + noise.sample(&mut rng) } else { v };
            v.clamp(0.0, 1.0)
        }));
        labels.push(label);
    }
    ClipBatch::new(Tensor::from_vec([n, 1, spec.t, spec.h, spec.w], data)?, labels, NUM_CLASSES)
}

pub fn generate_clips(spec: &SyntheticTaskSpec, n_per_class: usize) -> Result<ClipBatch> {
    generate_split(spec, n_per_class, 0)
}

pub const TRAIN_SPLIT: u64 = 0;
pub const VAL_SPLIT: u64 = 1;
