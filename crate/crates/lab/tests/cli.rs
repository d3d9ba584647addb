use std::path::Path;
use std::process::{Command, Output};

fn cellfree(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree"))
        .env("CELLFREE_OUT", root)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: &[&str] = &["--aps", "3", "--users", "2", "--antennas", "2", "--train-size", "24", "--test-size", "4"];

#[test]
fn seed_is_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gen-data", "sweep", "baseline"] {
        let out = cellfree(dir.path(), &[cmd]);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"), "{cmd}");
    }
}

#[test]
fn generated_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let mut args = vec!["gen-data", "--seed", "5", "--name", name];
        args.extend(SMALL);
        ok(&cellfree(dir.path(), &args));
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/train.cfds"), read("b/train.cfds"));
    assert_eq!(read("a/test.cfds"), read("b/test.cfds"));
    let mut args = vec!["gen-data", "--seed", "6", "--name", "c"];
    args.extend(SMALL);
    ok(&cellfree(dir.path(), &args));
    assert_ne!(read("a/train.cfds"), read("c/train.cfds"));
}

#[test]
fn train_certify_baseline_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut args = vec!["gen-data", "--seed", "8", "--name", "data"];
    args.extend(SMALL);
    ok(&cellfree(root, &args));
    let data = root.join("data");
    let data = data.to_str().unwrap();

    let train = ["train", "--seed", "1", "--data", data, "--epochs", "2", "--batch-size", "8", "--depth", "2", "--channels", "4"];
    ok(&cellfree(root, &train));
    for f in ["checkpoint-0001.json", "checkpoint-0002.json", "checkpoint.json", "curve.csv", "loss.svg"] {
        assert!(root.join("train").join(f).exists(), "{f}");
    }
    let curve = std::fs::read_to_string(root.join("train/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert!(curve.starts_with("epoch,loss,rate,sparsity,certified_rate,q_ave"));
    assert!(!cellfree(root, &train).status.success(), "reusing a run name must fail");

    let ck = root.join("train/checkpoint.json");
    let stdout = ok(&cellfree(
        root,
        &["certify", "--seed", "2", "--data", data, "--checkpoint", ck.to_str().unwrap(), "--oracle-draws", "200"],
    ));
    assert!(stdout.contains("0 violations"), "{stdout}");
    let certs = std::fs::read_to_string(root.join("certify/certificates.csv")).unwrap();
    // 4 samples, 2 users
    assert_eq!(certs.lines().count(), 9);

    ok(&cellfree(root, &["certify", "--seed", "2", "--data", data, "--wmmse", "--name", "cw"]));
    ok(&cellfree(root, &["baseline", "--seed", "2", "--data", data]));
    assert_eq!(std::fs::read_to_string(root.join("baseline/baseline.csv")).unwrap().lines().count(), 5);
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut args = vec![
        "sweep", "--seed", "4", "--vary", "lambda", "--values", "0.01,1", "--epochs", "1", "--batch-size", "8", "--depth",
        "2", "--channels", "4", "--iterations", "3",
    ];
    args.extend(SMALL);
    let stdout = ok(&cellfree(root, &args));
    assert!(stdout.contains("rjapcbn") && stdout.contains("wmmse"));
    std::fs::remove_file(root.join("sweep/rate.svg")).unwrap();
    let report = ok(&cellfree(root, &["report", "--run", root.join("sweep").to_str().unwrap()]));
    assert_eq!(report, stdout.lines().take(5).map(|l| format!("{l}\n")).collect::<String>());
    assert!(root.join("sweep/rate.svg").exists());
}

#[test]
fn errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = cellfree(dir.path(), &["train", "--seed", "1", "--data", "/definitely/missing"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: loading"));
    let out = cellfree(dir.path(), &["sweep", "--seed", "1", "--vary", "users", "--values", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cellfree(dir.path(), &["gen-data", "--seed", "1", "--users", "3", "--noise-power", "0.1,0.2"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise powers"));
}
