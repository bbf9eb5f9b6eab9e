//! Checkpoint directory: `manifest.json` plus one `BTSC` tensor file per named tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Network, NetworkConfig};
use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: NetworkConfig,
    pub tensors: Vec<ManifestEntry>,
}

/// Values are stored as `f32`, so a reload is exact only up to single precision.
pub fn save_checkpoint(net: &Network, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut failure = None;
    net.visit(&mut |name, t, trainable| {
        if failure.is_some() {
            return;
        }
        let file = format!("{name}.btsc");
        if let Err(e) = save_tensor(dir.join(&file), t) {
            failure = Some(e);
            return;
        }
        entries.push(ManifestEntry { name: name.to_string(), shape: t.shape().to_vec(), file, trainable });
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let manifest = Manifest { config: net.cfg.clone(), tensors: entries };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Network> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let mut net = Network::new(manifest.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut loaded: BTreeMap<String, Tensor> = BTreeMap::new();
    for e in &manifest.tensors {
        let t = load_tensor(dir.join(&e.file))?;
        if t.shape() != e.shape.as_slice() {
            return Err(Error::Format(format!("{}: manifest shape {:?} but file holds {:?}", e.name, e.shape, t.shape())));
        }
        loaded.insert(e.name.clone(), t);
    }
    let mut problem = None;
    net.visit_mut(&mut |name, slot, _| match loaded.remove(name) {
        Some(t) if t.shape() == slot.shape() => *slot = t,
        Some(t) => {
            problem.get_or_insert_with(|| format!("{name}: expected {:?}, found {:?}", slot.shape(), t.shape()));
        }
        None => {
            problem.get_or_insert_with(|| format!("{name}: missing from checkpoint"));
        }
    });
    if let Some(msg) = problem {
        return Err(Error::Format(msg));
    }
    if let Some(extra) = loaded.keys().next() {
        return Err(Error::Format(format!("unexpected tensor {extra} in checkpoint")));
    }
    Ok(net)
}
