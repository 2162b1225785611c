use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gstpro::io;

const TINY: &str = "window = 5
hidden_h = 4
hidden_z = 4
fc_hidden = 8
fc_layers = 1
embed_dim = 2
steps_per_unit = 1
epochs = 2
batch_size = 16
seed = 7
score_window = 50
";

fn gstpro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gstpro")).args(args).output().expect("spawn gstpro")
}

fn ok(args: &[&str]) {
    let out = gstpro(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_reports_perfect_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let (scores, labels, report) = (dir.path().join("s.csv"), dir.path().join("l.csv"), dir.path().join("r.txt"));
    fs::write(&scores, "timestamp,score\n0,0.9\n1,0.1\n").unwrap();
    fs::write(&labels, "timestamp,label\n0,1\n1,0\n").unwrap();
    ok(&["eval", "--scores", s(&scores), "--labels", s(&labels), "--out", s(&report)]);
    let r = io::parse_report(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.roc_auc, 1.0);
    assert_eq!(r.prc_auc, 1.0);
    assert_eq!((r.positives, r.negatives), (1, 1));
}

#[test]
fn eval_rejects_misaligned_files() {
    let dir = tempfile::tempdir().unwrap();
    let (scores, labels) = (dir.path().join("s.csv"), dir.path().join("l.csv"));
    fs::write(&scores, "timestamp,score\n0,0.9\n1,0.1\n").unwrap();
    fs::write(&labels, "timestamp,label\n5,1\n6,0\n").unwrap();
    let out = gstpro(&["eval", "--scores", s(&scores), "--labels", s(&labels), "--out", s(&dir.path().join("r"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("timestamps"));
}

#[test]
fn zero_rate_mask_leaves_series_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--channels", "3", "--train-len", "60", "--test-len", "40", "--segments", "1", "--out", s(d)]);
    let masked = d.join("masked.csv");
    ok(&["mask", "--in", s(&d.join("train.csv")), "--rate", "0", "--seed", "4", "--out", s(&masked)]);
    assert_eq!(fs::read(d.join("train.csv")).unwrap(), fs::read(&masked).unwrap());
    assert!(d.join("masked.mask.csv").exists());
}

#[test]
fn masking_drops_roughly_the_requested_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--channels", "4", "--train-len", "500", "--test-len", "40", "--segments", "1", "--out", s(d)]);
    let masked = d.join("m.csv");
    ok(&["mask", "--in", s(&d.join("train.csv")), "--rate", "0.3", "--seed", "4", "--out", s(&masked)]);
    let ds = io::load_csv(&masked).unwrap();
    let missing = 2000 - ds.mask().count_observed();
    assert!((500..=700).contains(&missing), "{missing}");
}

#[test]
fn train_and_score_run_without_labels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--channels", "3", "--train-len", "120", "--test-len", "60", "--segments", "1", "--out", s(d)]);
    fs::write(d.join("tiny.cfg"), TINY).unwrap();
    let model = d.join("model.bin");
    ok(&["train", "--config", s(&d.join("tiny.cfg")), "--train", s(&d.join("train.csv")), "--out", s(&model)]);
    let hist = fs::read_to_string(d.join("model.bin.history.csv")).unwrap();
    assert!(hist.starts_with("epoch,train_loss,val_loss,stopped"));
    fs::remove_file(d.join("labels.csv")).unwrap();
    let (scores, channels) = (d.join("scores.csv"), d.join("channels.csv"));
    ok(&[
        "score",
        "--model",
        s(&model),
        "--train",
        s(&d.join("train.csv")),
        "--test",
        s(&d.join("test.csv")),
        "--config",
        s(&d.join("tiny.cfg")),
        "--out",
        s(&scores),
        "--channels-out",
        s(&channels),
    ]);
    let (start, sc) = io::read_scores(fs::File::open(&scores).unwrap()).unwrap();
    assert_eq!((start, sc.len()), (120, 60));
    assert!(sc.iter().all(|v| v.is_finite()));
    assert_eq!(fs::read_to_string(&channels).unwrap().lines().count(), 61);
}

#[test]
fn unknown_config_key_is_reported_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs = 2\nlearning_rate = 0.1\n").unwrap();
    let out = gstpro(&["train", "--config", s(&cfg), "--train", "x.csv", "--out", "m.bin"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("learning_rate"), "{err}");
}

#[test]
fn help_lists_config_keys() {
    let out = gstpro(&["train", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["score_window", "pca_components", "steps_per_unit"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn missing_file_is_an_error_not_a_panic() {
    let out = gstpro(&["mask", "--in", "/nonexistent/x.csv", "--rate", "0.1", "--seed", "1", "--out", "/tmp/y.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
