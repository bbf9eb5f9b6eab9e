//! Attention export (JSON + flat CSV + per-timestep pathway summary) and the
//! fast-vs-slow discrimination statistic computed from it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::ClipBatch;
use crate::error::{Error, Result};
use crate::net::{BlockAttention, Network};
use crate::nn::{Mode, Triple};
use crate::tsp::FuseType;

pub const ATTENTION_JSON: &str = "attention.json";
pub const ATTENTION_CSV: &str = "attention.csv";
pub const SUMMARY_CSV: &str = "attention_summary.csv";

#[derive(Debug, Clone, Serialize)]
pub struct AttentionRecord {
    pub block_id: usize,
    pub name: String,
    pub sample: usize,
    pub label: usize,
    pub fuse_type: FuseType,
    #[serde(rename = "M")]
    pub pathways: usize,
    /// `[M, C, T]` for fuse TC, `[M, C]` for fuse C.
    pub shape: Vec<usize>,
    pub dilations: Vec<Triple>,
    /// Nested `M × C × T` (or `M × C`) weights.
    pub weights: serde_json::Value,
}

/// Channel-averaged attention of one pathway at one timestep, renormalized over pathways.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub block_id: usize,
    pub sample: usize,
    pub label: usize,
    pub t: usize,
    pub m: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockInfo {
    pub block_id: usize,
    pub name: String,
    pub dilations: Vec<Triple>,
}

#[derive(Debug, Clone)]
pub struct AttentionExport {
    pub blocks: Vec<BlockInfo>,
    pub records: Vec<AttentionRecord>,
    pub summary: Vec<SummaryRow>,
}

fn nested(block: &BlockAttention, n: usize) -> serde_json::Value {
    let map = &block.map;
    let (mm, cc, tt) = (map.pathways(), map.channels(), map.timesteps());
    let rows = (0..mm)
        .map(|m| {
            let chans = (0..cc)
                .map(|c| match map.fuse_type {
                    FuseType::TC => serde_json::Value::from((0..tt).map(|t| map.weight(n, m, c, t)).collect::<Vec<_>>()),
                    FuseType::C => serde_json::Value::from(map.weight(n, m, c, 0)),
                })
                .collect::<Vec<_>>();
            serde_json::Value::from(chans)
        })
        .collect::<Vec<_>>();
    serde_json::Value::from(rows)
}

/// Eval-mode attention for every clip in `data`. Pure function of the weights and the data.
pub fn collect_attention(net: &mut Network, data: &ClipBatch, batch_size: usize) -> Result<AttentionExport> {
    if data.is_empty() {
        return Err(Error::config("no clips to export"));
    }
    let mut records = Vec::new();
    let mut summary = Vec::new();
    let mut blocks = Vec::new();
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let out = net.forward(&data.select(chunk).clips, Mode::Eval)?;
        if blocks.is_empty() {
            blocks = out
                .attention
                .iter()
                .map(|b| BlockInfo { block_id: b.block_id, name: b.name.clone(), dilations: b.dilations.clone() })
                .collect();
        }
        for (local, &sample) in chunk.iter().enumerate() {
            let label = data.labels[sample];
            for block in &out.attention {
                let map = &block.map;
                let (mm, cc, tt) = (map.pathways(), map.channels(), map.timesteps());
                let shape = match map.fuse_type {
                    FuseType::TC => vec![mm, cc, tt],
                    FuseType::C => vec![mm, cc],
                };
                records.push(AttentionRecord {
                    block_id: block.block_id,
                    name: block.name.clone(),
                    sample,
                    label,
                    fuse_type: map.fuse_type,
                    pathways: mm,
                    shape,
                    dilations: block.dilations.clone(),
                    weights: nested(block, local),
                });
                for t in 0..tt {
                    let means: Vec<f64> =
                        (0..mm).map(|m| (0..cc).map(|c| map.weight(local, m, c, t)).sum::<f64>() / cc as f64).collect();
                    let total: f64 = means.iter().sum();
                    for (m, w) in means.into_iter().enumerate() {
                        summary.push(SummaryRow { block_id: block.block_id, sample, label, t, m, weight: w / total });
                    }
                }
            }
        }
    }
    Ok(AttentionExport { blocks, records, summary })
}

impl AttentionExport {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;

        let mut json = BufWriter::new(File::create(dir.join(ATTENTION_JSON))?);
        serde_json::to_writer(&mut json, &self.records)?;
        json.flush()?;

        let mut csv = BufWriter::new(File::create(dir.join(ATTENTION_CSV))?);
        writeln!(csv, "block_id,sample,m,c,t,weight")?;
        for r in &self.records {
            let rows = r.weights.as_array().expect("nested weights");
            for (m, chans) in rows.iter().enumerate() {
                for (c, v) in chans.as_array().expect("channel list").iter().enumerate() {
                    match v {
                        serde_json::Value::Array(ts) => {
                            for (t, w) in ts.iter().enumerate() {
                                writeln!(csv, "{},{},{m},{c},{t},{}", r.block_id, r.sample, w.as_f64().unwrap_or(f64::NAN))?;
                            }
                        }
                        w => writeln!(csv, "{},{},{m},{c},,{}", r.block_id, r.sample, w.as_f64().unwrap_or(f64::NAN))?,
                    }
                }
            }
        }
        csv.flush()?;

        let mut sum = BufWriter::new(File::create(dir.join(SUMMARY_CSV))?);
        writeln!(sum, "block_id,sample,label,t,m,weight")?;
        for s in &self.summary {
            writeln!(sum, "{},{},{},{},{},{}", s.block_id, s.sample, s.label, s.t, s.m, s.weight)?;
        }
        sum.flush()?;
        Ok(())
    }
}

pub fn export_attention(net: &mut Network, data: &ClipBatch, dir: impl AsRef<Path>) -> Result<AttentionExport> {
    let export = collect_attention(net, data, 16)?;
    export.write(dir)?;
    Ok(export)
}

/// The pathway with the largest temporal dilation; ties go to the smallest
/// spatial dilation, then to the lowest index.
pub fn largest_temporal_pathway(dilations: &[Triple]) -> usize {
    let mut best = 0;
    for (m, d) in dilations.iter().enumerate() {
        let b = dilations[best];
        if d[0] > b[0] || (d[0] == b[0] && d[1] * d[2] < b[1] * b[2]) {
            best = m;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelchTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::config("each group needs at least two samples"));
    }
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { f64::INFINITY.copysign(ma - mb) };
        return Ok(WelchTest { mean_a: ma, mean_b: mb, t, df: na + nb - 2.0, p_value: p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::config(e.to_string()))?;
    let p_value = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(WelchTest { mean_a: ma, mean_b: mb, t, df, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminationReport {
    pub pathway: usize,
    pub dilation: Triple,
    /// Per-clip mean over blocks and timesteps, fast clips vs slow clips.
    pub overall: WelchTest,
    pub per_block: Vec<(usize, WelchTest)>,
}

impl DiscriminationReport {
    pub fn direction(&self) -> &'static str {
        if self.overall.mean_a > self.overall.mean_b {
            "fast > slow"
        } else if self.overall.mean_a < self.overall.mean_b {
            "fast < slow"
        } else {
            "fast = slow"
        }
    }
}

/// Compares the summary weight of the largest-temporal-dilation pathway between
/// clips for which `is_fast(label)` holds and the rest.
pub fn pathway_discrimination(export: &AttentionExport, is_fast: impl Fn(usize) -> bool) -> Result<DiscriminationReport> {
    let first = export.blocks.first().ok_or_else(|| Error::config("export has no TSP blocks"))?;
    let pathway = largest_temporal_pathway(&first.dilations);
    let n_samples = export.summary.iter().map(|r| r.sample + 1).max().unwrap_or(0);
    let n_blocks = export.blocks.len();
    let mut sums = vec![vec![0.0; n_blocks + 1]; n_samples];
    let mut counts = vec![vec![0usize; n_blocks + 1]; n_samples];
    let mut labels = vec![0; n_samples];
    for r in export.summary.iter().filter(|r| r.m == pathway) {
        labels[r.sample] = r.label;
        for slot in [r.block_id, n_blocks] {
            sums[r.sample][slot] += r.weight;
            counts[r.sample][slot] += 1;
        }
    }
    let split = |slot: usize| {
        let (mut fast, mut slow) = (Vec::new(), Vec::new());
        for s in 0..n_samples {
            let v = sums[s][slot] / counts[s][slot].max(1) as f64;
            if is_fast(labels[s]) {
                fast.push(v);
            } else {
                slow.push(v);
            }
        }
        (fast, slow)
    };
    let (fast, slow) = split(n_blocks);
    let overall = welch_t_test(&fast, &slow)?;
    let per_block = (0..n_blocks)
        .map(|b| {
            let (f, s) = split(b);
            welch_t_test(&f, &s).map(|w| (b, w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscriminationReport { pathway, dilation: first.dilations[pathway], overall, per_block })
}
