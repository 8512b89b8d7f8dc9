use std::path::Path;
use std::process::{Command, Output};

use bimaml::checkpoint::{load_checkpoint, FORMAT_VERSION, MAGIC};
use bimaml::HarnessError;

const CONFIG: &str = "\
# small synthetic stream
dataset = synthetic
synthetic.per_class = 30
synthetic.dim = 6
hidden = 12
memory = 40
meta.epochs = 2
control.epochs = 2
held_out_classes = 2
metatest.episodes = 4
metatest.test_size = 10
";

fn bimaml(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("run.cfg");
    std::fs::write(&config, CONFIG).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bimaml"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join("out").join(name)).unwrap()
}

#[test]
fn repeated_runs_write_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&bimaml(a.path(), &["train"]));
    ok(&bimaml(b.path(), &["train"]));
    for name in ["results.csv", "efficiency.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let results = String::from_utf8(read(a.path(), "results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next(),
        Some("task_index,classes_seen,acc_baseline,acc_finetuned,acc_taskpred,epochs_used")
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn seed_flags_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&bimaml(a.path(), &["train"]));
    ok(&bimaml(b.path(), &["train", "--seed-init", "5"]));
    assert_ne!(read(a.path(), "summary.txt"), read(b.path(), "summary.txt"));
}

#[test]
fn eval_and_metatest_read_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    ok(&bimaml(dir.path(), &["train"]));
    let trained = String::from_utf8(read(dir.path(), "results.csv")).unwrap();
    ok(&bimaml(dir.path(), &["eval"]));
    let evaluated = String::from_utf8(read(dir.path(), "results.csv")).unwrap();
    assert_eq!(evaluated.lines().nth(1), trained.lines().last());

    let out = bimaml(dir.path(), &["metatest"]);
    ok(&out);
    let metatest = String::from_utf8(read(dir.path(), "metatest.csv")).unwrap();
    assert!(
        metatest.starts_with("n_way,k_shot,episodes,mean_accuracy\n2,1,4,"),
        "{metatest}"
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("meta-test 2-way 1-shot"));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(&bimaml(dir.path(), &["train"]));
    let path = dir.path().join("out/checkpoint.bin");
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..MAGIC.len()], MAGIC);
    assert!(load_checkpoint(&path).is_ok());

    let mut flipped = bytes.clone();
    *flipped.last_mut().unwrap() ^= 1;
    std::fs::write(&path, &flipped).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(HarnessError::Corrupt(_))
    ));
    let out = bimaml(dir.path(), &["eval"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let mut newer = bytes.clone();
    newer[MAGIC.len()] = FORMAT_VERSION + 1;
    std::fs::write(&path, &newer).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(HarnessError::VersionMismatch { .. })
    ));

    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(HarnessError::Corrupt(_))
    ));
}

#[test]
fn bad_arguments_fail_with_a_named_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = bimaml(dir.path(), &["train", "--set", "meta.inner_lr=fast"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("meta.inner_lr"));

    let out = bimaml(dir.path(), &["train", "--set", "no_equals_sign"]);
    assert!(!out.status.success());

    let out = bimaml(dir.path(), &["train", "--set", "unknown.key=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown.key"));

    let out = bimaml(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn metatest_without_held_out_classes_fails() {
    let dir = tempfile::tempdir().unwrap();
    ok(&bimaml(
        dir.path(),
        &["train", "--set", "held_out_classes=0"],
    ));
    let out = bimaml(dir.path(), &["metatest", "--set", "held_out_classes=0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("held_out_classes"));
}

#[test]
fn control_runs_on_the_same_stream() {
    let dir = tempfile::tempdir().unwrap();
    ok(&bimaml(dir.path(), &["control"]));
    let results = String::from_utf8(read(dir.path(), "results.csv")).unwrap();
    for row in results.lines().skip(1) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[2], cells[3], "{row}");
    }
}
