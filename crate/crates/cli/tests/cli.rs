use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn volstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volstm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(out: &Path, seed: &str, grid: &str) -> Output {
    volstm(&[
        "generate", "--mode", "spatiotemporal", "--subjects", "10", "--seed", seed, "--out", p(out), "--grid", grid,
        "--t-min", "10", "--t-max", "14",
    ])
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&f).unwrap()))
        .collect()
}

fn train_tiny(data: &Path, out: &Path) -> Output {
    volstm(&[
        "train", "--data", p(data), "--out", p(out), "--desk-scale", "--epochs", "2", "--batch", "4",
        "--crop-length", "6", "--validate-every", "1", "--hidden", "2", "--seed", "5",
    ])
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(generate(&a, "7", "6,6,6").status.success());
    assert!(generate(&b, "7", "6,6,6").status.success());
    let files = dir_bytes(&a);
    assert_eq!(files.len(), 11);
    assert_eq!(files, dir_bytes(&b));
}

#[test]
fn generate_rejects_bad_cohorts_and_occupied_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let one = volstm(&["generate", "--subjects", "1", "--out", p(&out)]);
    assert_eq!(one.status.code(), Some(2));
    assert!(generate(&out, "1", "6,6,6").status.success());
    let again = generate(&out, "1", "6,6,6");
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let forced = volstm(&["generate", "--subjects", "4", "--out", p(&out), "--grid", "6,6,6", "--force"]);
    assert!(forced.status.success());
}

#[test]
fn zero_crop_length_is_a_usage_error() {
    let out = volstm(&["train", "--data", "x", "--out", "y", "--crop-length", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn short_series_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    assert!(generate(&data, "3", "6,6,6").status.success());
    let out = volstm(&["train", "--data", p(&data), "--out", p(&tmp.path().join("r")), "--crop-length", "30"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sub-0001") && err.contains("sub-0010"), "{err}");
}

#[test]
fn train_replay_and_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    assert!(generate(&data, "9", "6,6,6").status.success());
    let run = tmp.path().join("run");
    let first = train_tiny(&data, &run);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    for name in ["run.json", "summary.toml", "fold-0.log", "fold-4.log", "fold-4.st4d", "fold-4.json"] {
        assert!(run.join(name).is_file(), "missing {name}");
    }
    let log = fs::read_to_string(run.join("fold-0.log")).unwrap();
    assert!(log.starts_with("epoch=1 loss="), "{log}");

    let replay = tmp.path().join("replay");
    let second = volstm(&[
        "train", "--replay", p(&run.join("run.json")), "--out", p(&replay), "--workers", "2",
    ]);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    let without_manifest = |d: &Path| {
        let mut files = dir_bytes(d);
        files.retain(|(name, _)| name != "run.json");
        files
    };
    assert_eq!(without_manifest(&run), without_manifest(&replay));

    let ckpt = run.join("fold-0.st4d");
    let eval = |out: &Path| {
        volstm(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(out)])
    };
    let (e1, e2) = (tmp.path().join("e1.toml"), tmp.path().join("e2.toml"));
    assert!(eval(&e1).status.success());
    assert!(eval(&e2).status.success());
    let text = fs::read_to_string(&e1).unwrap();
    assert_eq!(text, fs::read_to_string(&e2).unwrap());
    assert!(text.contains("accuracy") && text.contains("sub-0010"));

    let other = tmp.path().join("other");
    assert!(generate(&other, "9", "8,6,6").status.success());
    let mismatch = volstm(&["eval", "--checkpoint", p(&ckpt), "--data", p(&other)]);
    assert_eq!(mismatch.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("checkpoint expects"));
}

#[test]
fn replay_conflicts_with_overrides() {
    let out = volstm(&["train", "--replay", "run.json", "--epochs", "3", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_single_component() {
    let ok = volstm(&["gradcheck", "--component", "conv3d"]);
    assert!(ok.status.success());
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("conv3d") && text.contains("all passed"), "{text}");
    let unknown = volstm(&["gradcheck", "--component", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
}
