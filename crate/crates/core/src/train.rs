//! Cross-entropy training with SGD + momentum, and top-1 evaluation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ClipBatch;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::nn::Mode;
use crate::tensor::Tensor;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy over the batch, its gradient w.r.t. the logits,
/// and the per-sample losses.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, Vec<f64>)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::config(format!("logits {s:?} do not match {} labels", labels.len())));
    }
    let (n, k) = (s[0], s[1]);
    let mut grad = vec![0.0; n * k];
    let mut losses = Vec::with_capacity(n);
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::config(format!("label {label} out of range for {k} classes")));
        }
        let row = &logits.data()[i * k..][..k];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + total.ln();
        losses.push(log_z - row[label]);
        for j in 0..k {
            let p = (row[j] - log_z).exp();
            grad[i * k + j] = (p - (j == label) as usize as f64) / n as f64;
        }
    }
    let mean = losses.iter().sum::<f64>() / n as f64;
    Ok((mean, Tensor::from_vec([n, k], grad)?, losses))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after the first epoch whose validation accuracy reaches this value.
    #[serde(default)]
    pub stop_at_val_accuracy: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 30,
            batch_size: 8,
            seed: 0,
            stop_at_val_accuracy: None,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("momentum must lie in [0, 1) and weight decay must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }
}

/// `v ← μ·v + (g + λ·w)`, `w ← w − lr·v`, applied to every trainable tensor.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd { lr, momentum, weight_decay, velocity: Vec::new() }
    }

    pub fn step(&mut self, net: &mut Network) {
        let mut slot = 0;
        let (lr, mu, wd) = (self.lr, self.momentum, self.weight_decay);
        let velocity = &mut self.velocity;
        net.visit_mut(&mut |_, t, trainable| {
            if !trainable {
                return;
            }
            if velocity.len() <= slot {
                velocity.push(vec![0.0; t.numel()]);
            }
            let grad = t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]);
            let v = &mut velocity[slot];
            for ((w, g), vi) in t.data_mut().iter_mut().zip(&grad).zip(v.iter_mut()) {
                *vi = mu * *vi + g + wd * *w;
                *w -= lr * *vi;
            }
            slot += 1;
        });
    }
}

/// One optimizer step on `batch`; returns the batch loss before the update.
pub fn train_step(net: &mut Network, batch: &ClipBatch, sgd: &mut Sgd) -> Result<f64> {
    net.zero_grad();
    let out = net.forward(&batch.clips, Mode::Train)?;
    let (loss, grad, _) = softmax_cross_entropy(&out.logits, &batch.labels)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss {loss}")));
    }
    net.backward(&grad)?;
    sgd.step(net);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_accuracy,val_loss,val_accuracy";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.17}")).unwrap_or_default();
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.17},{:.17},{},{}",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            );
        }
        out
    }

    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.epochs.iter().filter_map(|e| e.val_accuracy).reduce(f64::max)
    }
}

/// Trains in place. Batches are drawn from a seeded per-epoch shuffle; `on_epoch`
/// sees each record as soon as it is complete.
pub fn train(
    net: &mut Network,
    data: &ClipBatch,
    val: Option<&ClipBatch>,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    opts.validate()?;
    if data.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sgd = Sgd::new(opts.lr, opts.momentum, opts.weight_decay);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(opts.batch_size) {
            let batch = data.select(chunk);
            net.zero_grad();
            let out = net.forward(&batch.clips, Mode::Train)?;
            let (loss, grad, _) = softmax_cross_entropy(&out.logits, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss {loss} in epoch {epoch}")));
            }
            let k = out.logits.shape()[1];
            correct += batch
                .labels
                .iter()
                .enumerate()
                .filter(|&(i, &l)| argmax(&out.logits.data()[i * k..][..k]) == l)
                .count();
            net.backward(&grad)?;
            sgd.step(net);
            loss_sum += loss * chunk.len() as f64;
            log.step_losses.push(loss);
        }
        let (val_loss, val_accuracy) = match val {
            Some(v) => {
                let r = evaluate(net, v, opts.batch_size.max(16))?;
                (Some(r.mean_loss), Some(r.accuracy))
            }
            None => (None, None),
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            val_loss,
            val_accuracy,
        };
        on_epoch(&record);
        log.epochs.push(record);
        if let (Some(target), Some(acc)) = (opts.stop_at_val_accuracy, val_accuracy) {
            if acc >= target {
                break;
            }
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub mean_loss: f64,
    pub count: usize,
}

/// Scores precomputed logits. Classes with no samples report accuracy 0.
pub fn score_logits(logits: &Tensor, labels: &[usize]) -> Result<EvalReport> {
    if labels.is_empty() {
        return Err(Error::config("cannot evaluate an empty set"));
    }
    let (_, _, losses) = softmax_cross_entropy(logits, labels)?;
    let k = logits.shape()[1];
    let mut hits = vec![0usize; k];
    let mut totals = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        totals[l] += 1;
        if argmax(&logits.data()[i * k..][..k]) == l {
            hits[l] += 1;
        }
    }
    Ok(EvalReport {
        accuracy: hits.iter().sum::<usize>() as f64 / labels.len() as f64,
        per_class_accuracy: hits.iter().zip(&totals).map(|(&h, &t)| if t == 0 { 0.0 } else { h as f64 / t as f64 }).collect(),
        mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        count: labels.len(),
    })
}

/// Eval-mode logits for the whole set, computed `batch_size` clips at a time.
pub fn predict(net: &mut Network, data: &ClipBatch, batch_size: usize) -> Result<Tensor> {
    if data.is_empty() {
        return Err(Error::config("cannot evaluate an empty set"));
    }
    let k = net.cfg.num_classes;
    let mut all = Vec::with_capacity(data.len() * k);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let out = net.forward(&data.select(chunk).clips, Mode::Eval)?;
        all.extend_from_slice(out.logits.data());
    }
    Tensor::from_vec([data.len(), k], all)
}

pub fn evaluate(net: &mut Network, data: &ClipBatch, batch_size: usize) -> Result<EvalReport> {
    let logits = predict(net, data, batch_size)?;
    score_logits(&logits, &data.labels)
}
