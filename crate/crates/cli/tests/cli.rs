use std::path::Path;
use std::process::{Command, Output};

fn btsnet(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_btsnet")).args(args).output().expect("spawn btsnet");
    assert!(
        out.status.success(),
        "btsnet {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_train_eval_export_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("ckpt");
    let attn = dir.path().join("attn");
    btsnet(&["gen", "--out", p(&data), "--t", "4", "--hw", "8", "--n-per-class", "2", "--val-per-class", "2", "--seed", "3"]);
    for f in ["train.btsc", "train.labels", "val.btsc", "val.labels"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let train_args = [
        "train", "--data", p(&data), "--depth", "26", "--cardinality", "16", "--m", "2", "--rf", "o2", "--fuse", "tc",
        "--epochs", "2", "--lr", "0.05", "--batch", "4", "--seed", "1", "--ckpt", p(&ckpt), "--tiny",
    ];
    let out = btsnet(&train_args);
    assert!(stdout(&out).contains("epoch   1"));
    let log = std::fs::read_to_string(ckpt.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch,train_loss,train_accuracy,val_loss,val_accuracy"));

    let eval = stdout(&btsnet(&["eval", "--data", p(&data), "--ckpt", p(&ckpt)]));
    assert!(eval.starts_with("accuracy "), "{eval}");
    assert!(eval.contains("fast-vertical"));

    let export = stdout(&btsnet(&["export-attn", "--data", p(&data), "--ckpt", p(&ckpt), "--out", p(&attn)]));
    assert!(export.contains("pathway 1"), "{export}");
    for f in ["attention.json", "attention.csv", "attention_summary.csv", "discrimination.json"] {
        assert!(attn.join(f).exists(), "{f}");
    }

    // same seeds, same bytes
    let ckpt2 = dir.path().join("ckpt2");
    let mut again = train_args.to_vec();
    let i = again.iter().position(|a| *a == "--ckpt").unwrap();
    again[i + 1] = p(&ckpt2);
    btsnet(&again);
    assert_eq!(log, std::fs::read_to_string(ckpt2.join("train_log.csv")).unwrap());
    assert_eq!(std::fs::read(ckpt.join("manifest.json")).unwrap(), std::fs::read(ckpt2.join("manifest.json")).unwrap());
}

#[test]
fn rf_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, r#"[{"kernel":[3,3,3]},{"kernel":[3,3,3],"dilation":[4,1,1]}]"#).unwrap();
    std::fs::write(&b, r#"[{"kernel":[3,3,3],"input_sampling_rate":4}]"#).unwrap();
    let out = dir.path().join("rf.csv");
    let text = stdout(&btsnet(&["rf", "--stack", p(&a), "--out", p(&out)]));
    assert!(text.contains("rf [11, 5, 5]"), "{text}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "axis,layer_index,rf,jump,rf_original_frames");
    assert_eq!(csv.lines().count(), 7);

    btsnet(&["rf", "--stack", p(&a), "--compare", p(&b), "--out", p(&out)]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.lines().any(|l| l == "b,t,0,3,4,9"), "{csv}");
}

#[test]
fn count_params_reports_reference() {
    let text = stdout(&btsnet(&["count-params", "--depth", "26", "--cardinality", "16", "--m", "4", "--rf", "o2", "--fuse", "tc"]));
    assert!(text.contains("trainable parameters"));
    assert!(text.contains("reference C16-26: 10.2M"), "{text}");
    let tiny = stdout(&btsnet(&["count-params", "--depth", "50", "--m", "2", "--rf", "o1", "--fuse", "c", "--tiny", "--per-layer"]));
    assert!(tiny.contains("stage1.block0.tsp.fuse.expand"));
    assert!(!tiny.contains("reference"));
}

#[test]
fn bad_arguments_fail() {
    let run = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_btsnet")).args(args).output().unwrap();
    assert!(!run(&["count-params", "--m", "5", "--rf", "o2"]).status.success());
    assert!(!run(&["count-params", "--fuse", "xyz"]).status.success());
    assert!(!run(&["eval", "--data", "/nonexistent", "--ckpt", "/nonexistent"]).status.success());
}
