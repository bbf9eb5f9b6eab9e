//! Blockwise temporal-spatial pathway (TSP) networks for video classification.
//!
//! The crate covers the whole stack at desk scale: a dense `f64` tensor with
//! hand-written backward passes, the 3D primitives, the split/fuse/select
//! pathway block, the bottleneck network assembly, receptive-field analysis,
//! and a synthetic moving-shapes training harness.

pub mod data;
pub mod error;
pub mod export;
pub mod gradcheck;
pub mod io;
pub mod net;
pub mod nn;
pub mod rf;
pub mod tensor;
pub mod train;
pub mod tsp;

pub use data::{ClipBatch, SyntheticTaskSpec};
pub use error::{Error, Result};
pub use gradcheck::{check_gradient, GradCheck};
pub use net::{build_network, count_params, Network, NetworkConfig};
pub use nn::Mode;
pub use rf::{analytic_rf, empirical_rf, LayerSpec};
pub use tensor::{elementwise_add, elementwise_mul, Tensor};
pub use tsp::{build_dilation_set, tsp_forward, AttentionMap, FuseType, RfOption, TspConfig, TspParams};
