//! Central finite-difference gradient checking.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Denominator floor for the per-element relative error, so that two
/// (near-)zero gradients compare as equal.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Which coordinates of `x` get a finite-difference probe.
#[derive(Debug, Clone)]
pub enum Coords {
    All,
    /// A seeded random subset of at most `count` coordinates.
    Sample { count: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub eps: f64,
    pub coords: Coords,
}

impl GradCheck {
    pub fn new(eps: f64) -> Self {
        GradCheck { eps, coords: Coords::All }
    }

    pub fn sampled(mut self, count: usize, seed: u64) -> Self {
        self.coords = Coords::Sample { count, seed };
        self
    }

    /// `f` returns the scalar value and its analytic gradient w.r.t. its argument.
    /// Only the value is used at the perturbed points.
    pub fn run<F>(&self, mut f: F, x: &Tensor) -> Result<f64>
    where
        F: FnMut(&Tensor) -> Result<(f64, Tensor)>,
    {
        if !(self.eps > 0.0 && self.eps <= 1e-2) {
            return Err(Error::config(format!("eps must lie in (0, 1e-2], got {}", self.eps)));
        }
        let (f0, analytic) = f(x)?;
        if !f0.is_finite() {
            return Err(Error::NonFinite(format!("f(x) = {f0}")));
        }
        if analytic.shape() != x.shape() {
            return Err(Error::ShapeMismatch { lhs: x.shape().to_vec(), rhs: analytic.shape().to_vec() });
        }
        let coords: Vec<usize> = match self.coords {
            Coords::All => (0..x.numel()).collect(),
            Coords::Sample { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = index::sample(&mut rng, x.numel(), count.min(x.numel())).into_vec();
                picked.sort_unstable();
                picked
            }
        };
        let mut probe = x.clone();
        let mut worst = 0.0f64;
        for i in coords {
            let orig = x.data()[i];
            probe.data_mut()[i] = orig + self.eps;
            let (plus, _) = f(&probe)?;
            probe.data_mut()[i] = orig - self.eps;
            let (minus, _) = f(&probe)?;
            probe.data_mut()[i] = orig;
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(Error::NonFinite(format!("perturbed value at coordinate {i}")));
            }
            let numeric = (plus - minus) / (2.0 * self.eps);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
        Ok(worst)
    }
}

/// Max relative error between the analytic gradient and a central
/// finite difference over every coordinate of `x`.
pub fn check_gradient<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<(f64, Tensor)>,
{
    GradCheck::new(eps).run(f, x)
}
