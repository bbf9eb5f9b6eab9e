use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use btsnet_core::data::{generate_split, ClipBatch, MotionClass, SyntheticTaskSpec, NUM_CLASSES, TRAIN_SPLIT, VAL_SPLIT};
use btsnet_core::export::{export_attention, pathway_discrimination};
use btsnet_core::net::{load_checkpoint, save_checkpoint};
use btsnet_core::rf::{compare_pathways, parse_stack, rf_rows, write_comparison_csv, write_rf_csv};
use btsnet_core::train::{evaluate, train, TrainOptions};
use btsnet_core::{build_network, count_params, FuseType, NetworkConfig, RfOption};
use clap::{Args, Parser, Subcommand};

mod reference;

#[derive(Parser)]
#[command(name = "btsnet", version, about = "Blockwise temporal-spatial pathway networks at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic moving-square dataset (train and val splits).
    Gen(GenArgs),
    /// Train a network and write a checkpoint plus train_log.csv.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Export per-block attention maps and the pathway discrimination report.
    ExportAttn(ExportArgs),
    /// Layer-by-layer receptive fields of a JSON layer stack.
    Rf(RfArgs),
    /// Count trainable parameters of a configuration.
    CountParams(CountArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    t: usize,
    #[arg(long, default_value_t = 32)]
    hw: usize,
    #[arg(long)]
    n_per_class: usize,
    /// Validation clips per class; defaults to half of --n-per-class.
    #[arg(long)]
    val_per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ArchArgs {
    #[arg(long, default_value_t = 26)]
    depth: usize,
    /// Ignored with --tiny, which fixes cardinality at 2.
    #[arg(long, default_value_t = 16)]
    cardinality: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = RfOption::O2)]
    rf: RfOption,
    #[arg(long, default_value_t = FuseType::TC)]
    fuse: FuseType,
    /// Use the small test-scale widths.
    #[arg(long)]
    tiny: bool,
}

impl ArchArgs {
    fn config(&self) -> Result<NetworkConfig> {
        Ok(if self.tiny {
            NetworkConfig::tiny(self.depth, self.m, self.rf, self.fuse)?
        } else {
            NetworkConfig::standard(self.depth, self.cardinality, self.m, self.rf, self.fuse)?
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    arch: ArchArgs,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    /// Stop once validation accuracy reaches this fraction.
    #[arg(long)]
    stop_at: Option<f64>,
    #[arg(long)]
    ckpt: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
}

#[derive(Args)]
struct RfArgs {
    #[arg(long)]
    stack: PathBuf,
    /// Second stack to report side by side.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    arch: ArchArgs,
    /// Print one line per layer as well.
    #[arg(long)]
    per_layer: bool,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::ExportAttn(a) => run_export(a),
        Command::Rf(a) => run_rf(a),
        Command::CountParams(a) => run_count(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = SyntheticTaskSpec { t: a.t, h: a.hw, w: a.hw, seed: a.seed, ..Default::default() };
    let val_per_class = a.val_per_class.unwrap_or((a.n_per_class / 2).max(1));
    let train = generate_split(&spec, a.n_per_class, TRAIN_SPLIT)?;
    let val = generate_split(&spec, val_per_class, VAL_SPLIT)?;
    train.save(&a.out, "train")?;
    val.save(&a.out, "val")?;
    println!("wrote {} train and {} val clips of shape {:?} to {}", train.len(), val.len(), train.clip_shape(), a.out.display());
    Ok(())
}

fn load_split(dir: &Path, split: &str) -> Result<ClipBatch> {
    ClipBatch::load(dir, split, NUM_CLASSES).with_context(|| format!("loading split {split:?} from {}", dir.display()))
}

fn run_train(a: TrainArgs) -> Result<()> {
    let data = load_split(&a.data, "train")?;
    let val = if a.data.join("val.btsc").exists() { Some(load_split(&a.data, "val")?) } else { None };
    let [c, t, h, w] = data.clip_shape();
    let cfg = a.arch.config()?.with_classes(NUM_CLASSES).with_input(c, [t, h, w]);
    let mut net = build_network(&cfg, a.seed)?;
    let opts = TrainOptions {
        lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        stop_at_val_accuracy: a.stop_at,
    };
    let log = train(&mut net, &data, val.as_ref(), &opts, |r| {
        let val = match (r.val_loss, r.val_accuracy) {
            (Some(l), Some(acc)) => format!(" val_loss {l:.4} val_acc {acc:.3}"),
            _ => String::new(),
        };
        println!("epoch {:>3} train_loss {:.4} train_acc {:.3}{val}", r.epoch, r.train_loss, r.train_accuracy);
    })?;
    save_checkpoint(&net, &a.ckpt)?;
    fs::write(a.ckpt.join("train_log.csv"), log.to_csv())?;
    println!("checkpoint written to {}", a.ckpt.display());
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let mut net = load_checkpoint(&a.ckpt)?;
    let data = load_split(&a.data, &a.split)?;
    let r = evaluate(&mut net, &data, 16)?;
    println!("accuracy {:.4} mean_loss {:.4} over {} clips", r.accuracy, r.mean_loss, r.count);
    for (label, acc) in r.per_class_accuracy.iter().enumerate() {
        println!("  {:<16} {acc:.4}", MotionClass::from_label(label)?.to_string());
    }
    Ok(())
}

fn run_export(a: ExportArgs) -> Result<()> {
    let mut net = load_checkpoint(&a.ckpt)?;
    let data = load_split(&a.data, &a.split)?;
    let export = export_attention(&mut net, &data, &a.out)?;
    println!("{} blocks × {} clips exported to {}", export.blocks.len(), data.len(), a.out.display());
    if export.blocks.is_empty() || export.blocks[0].dilations.len() < 2 {
        println!("single pathway: no discrimination report");
        return Ok(());
    }
    let report = pathway_discrimination(&export, MotionClass::is_fast)?;
    let o = &report.overall;
    println!(
        "pathway {} dilation {:?}: fast {:.6} slow {:.6} t {:.3} df {:.1} p {:.3e} ({})",
        report.pathway, report.dilation, o.mean_a, o.mean_b, o.t, o.df, o.p_value, report.direction()
    );
    for (b, w) in &report.per_block {
        println!("  {:<16} fast {:.6} slow {:.6} p {:.3e}", export.blocks[*b].name, w.mean_a, w.mean_b, w.p_value);
    }
    fs::write(a.out.join("discrimination.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn run_rf(a: RfArgs) -> Result<()> {
    let read = |p: &Path| -> Result<_> {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let stack = parse_stack(&text)?;
        if stack.is_empty() {
            bail!("{} holds an empty layer stack", p.display());
        }
        Ok(stack)
    };
    let stack = read(&a.stack)?;
    let mut out = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    match &a.compare {
        Some(other) => write_comparison_csv(&mut out, &compare_pathways(&stack, &read(other)?)?)?,
        None => write_rf_csv(&mut out, &rf_rows(&stack)?)?,
    }
    out.flush()?;
    let last = btsnet_core::analytic_rf(&stack)?;
    println!("rf {:?} jump {:?} rf_original_frames {:?}", last.rf, last.jump, last.rf_original);
    Ok(())
}

fn run_count(a: CountArgs) -> Result<()> {
    let cfg = a.arch.config()?;
    let net = build_network(&cfg, 0)?;
    let count = count_params(&net);
    if a.per_layer {
        for (name, n) in &count.per_layer {
            println!("{name:<40} {n}");
        }
    }
    println!(
        "depth {} cardinality {} M {} rf {} fuse {}: {} trainable parameters ({:.2}M)",
        cfg.depth,
        cfg.cardinality,
        cfg.pathways,
        cfg.rf_option,
        cfg.fuse_type,
        count.total,
        count.total as f64 / 1e6
    );
    if !a.arch.tiny {
        if let Some(r) = reference::published_millions(cfg.depth, cfg.cardinality) {
            let ours = count.total as f64 / 1e6;
            println!("reference C{}-{}: {r:.1}M (difference {:+.2}M, {:+.1}%)", cfg.cardinality, cfg.depth, ours - r, 100.0 * (ours - r) / r);
        }
    }
    Ok(())
}
