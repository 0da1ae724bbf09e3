use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use avnet::image_io::read_rgb;

fn avnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avnet")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: &str = "\
model.dense_block_layers=1,1,1,1
model.growth_rate=2
model.stem_channels=4
model.decoder_channels=8,6,4,4
model.input_size=32
synth.size=32
batch_size=2
train_samples_per_fold=4
eval_every=1
";

fn synth_dir(root: &Path, name: &str, count: usize) -> std::path::PathBuf {
    let cfg = root.join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let dir = root.join(name);
    let o = avnet(&["synth", "--config", p(&cfg), "--out", p(&dir), "--count", &count.to_string()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn synth_writes_three_pngs_per_sample_deterministically() {
    let t = tempfile::tempdir().unwrap();
    let a = synth_dir(t.path(), "a", 4);
    let b = synth_dir(t.path(), "b", 4);
    let files = sorted_files(&a);
    assert_eq!(files.len(), 12);
    assert!(files.contains(&"synth0003_octa.png".to_string()));
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_2_with_line() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("bad.cfg");
    fs::write(&cfg, "seed=1\nmodel.depth=9\n").unwrap();
    let o = avnet(&["synth", "--config", p(&cfg), "--out", p(&t.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    fs::write(&cfg, "batch_size=0\n").unwrap();
    let o = avnet(&["synth", "--config", p(&cfg), "--out", p(&t.path().join("x"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_inputs_exit_3() {
    let t = tempfile::tempdir().unwrap();
    let o = avnet(&["train", "--data", p(&t.path().join("nope")), "--out", p(t.path())]);
    assert_eq!(code(&o), 3);
    let o = avnet(&["synth", "--config", p(&t.path().join("missing.cfg")), "--out", p(t.path())]);
    assert_eq!(code(&o), 3);
}

#[test]
fn train_predict_eval_round() {
    let t = tempfile::tempdir().unwrap();
    let data = synth_dir(t.path(), "data", 4);
    let cfg = t.path().join("tiny.cfg");
    let out = t.path().join("run");
    let o = avnet(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&out), "--k-folds", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(sorted_files(&out), ["fold1.avnw", "fold2.avnw", "report.csv"]);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("artery,") && lines[2].starts_with("vein,") && lines[3].starts_with("average,"));
    assert!(stdout(&o).contains("average"));

    let out2 = t.path().join("run2");
    let o = avnet(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&out2), "--k-folds", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv, fs::read_to_string(out2.join("report.csv")).unwrap());
    assert_eq!(fs::read(out.join("fold1.avnw")).unwrap(), fs::read(out2.join("fold1.avnw")).unwrap());

    let weights = out.join("fold1.avnw");
    let (oct, octa) = (data.join("synth0000_oct.png"), data.join("synth0000_octa.png"));
    let map = t.path().join("map.png");
    let map2 = t.path().join("map2.png");
    for dst in [&map, &map2] {
        let o = avnet(&["predict", "--weights", p(&weights), "--oct", p(&oct), "--octa", p(&octa), "--out", p(dst)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(&map).unwrap(), fs::read(&map2).unwrap());
    let img = read_rgb(&map).unwrap();
    assert_eq!((img.width, img.height), (32, 32));
    for px in img.pixels.chunks(3) {
        assert!([[255, 0, 0], [0, 255, 0], [0, 0, 255]].contains(&[px[0], px[1], px[2]]), "{px:?}");
    }

    let o = avnet(&["eval", "--weights", p(&weights), "--data", p(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("±"));

    // a 64x64 pair against the 32x32 model
    let big = synth_big(t.path());
    let o = avnet(&[
        "predict",
        "--weights",
        p(&weights),
        "--oct",
        p(&big.join("synth0000_oct.png")),
        "--octa",
        p(&big.join("synth0000_octa.png")),
        "--out",
        p(&t.path().join("bad.png")),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("32x32"), "{}", stderr(&o));
    let o = avnet(&["eval", "--weights", p(&weights), "--data", p(&big)]);
    assert_eq!(code(&o), 3);
}

fn synth_big(root: &Path) -> std::path::PathBuf {
    let dir = root.join("big");
    let o = avnet(&["synth", "--out", p(&dir), "--count", "1", "--size", "64"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

#[test]
fn train_dry_run_counts_steps() {
    let t = tempfile::tempdir().unwrap();
    let data = synth_dir(t.path(), "data", 10);
    let o = avnet(&["train", "--data", p(&data), "--dry-run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 5);
    assert!(s.lines().all(|l| l.ends_with("test 2 samples, 3000 draws, 375 steps")), "{s}");
}

#[test]
fn eval_pass_through_is_perfect() {
    let t = tempfile::tempdir().unwrap();
    let data = synth_dir(t.path(), "data", 2);
    let o = avnet(&["eval", "--pass-through", "--data", p(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = stdout(&o);
    for row in ["artery", "vein", "average"] {
        let line = s.lines().find(|l| l.starts_with(row)).unwrap();
        assert_eq!(line.matches("100.000 ± 0.000").count(), 3, "{s}");
    }

    let one = synth_dir(t.path(), "one", 1);
    let o = avnet(&["eval", "--pass-through", "--data", p(&one)]);
    let s = stdout(&o);
    assert!(s.contains("100.000") && !s.contains('±'), "{s}");
}

#[test]
fn gradcheck_exit_codes() {
    let o = avnet(&["gradcheck", "--seed", "5", "--model-samples", "8"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let s = stdout(&o);
    for op in ["conv2d", "batch_norm2d", "relu", "softmax_channels", "dice_loss", "focal_loss", "avnet_tiny"] {
        assert!(s.contains(op), "{op} missing");
    }
    let again = avnet(&["gradcheck", "--seed", "5", "--model-samples", "8"]);
    assert_eq!(stdout(&again), s);

    let o = avnet(&["gradcheck", "--model-samples", "8", "--corrupt-op", "relu"]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("relu"), "{}", stderr(&o));
}
