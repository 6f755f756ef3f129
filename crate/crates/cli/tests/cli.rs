use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aero-attn"))
        .args(args)
        .env_remove("AERO_ATTN_JOBS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_owned()
}

fn generate(dir: &Path) {
    let out = run(&["gen", "--out", dir.to_str().unwrap(), "--n", "200", "--classes", "3", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn paramcount_appnp_is_zero() {
    let out = run(&["paramcount", "appnp", "--k-max", "8", "--d-h", "64"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().next(), Some("0"));
}

#[test]
fn paramcount_aero_is_linear_in_depth() {
    let count = |k: &str| -> u64 {
        let out = run(&["paramcount", "aero", "--k-max", k, "--d-h", "64"]);
        stdout(&out).lines().next().unwrap().parse().unwrap()
    };
    assert_eq!(count("16") - count("8"), count("24") - count("16"));
}

#[test]
fn gen_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a);
    generate(&b);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "meta.json"));
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn oracle_suite_passes() {
    let out = run(&["oracle", "all", "--seed", "0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.lines().count() >= 17);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn train_and_diagnose_write_tables_with_sidecars() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data);
    let data = data.to_str().unwrap();

    let train = tmp.path().join("train");
    let out = run(&[
        "--sequential", "train", "--data", data, "--model", "aero", "--model", "gatv2", "--depth", "3", "--epochs", "10",
        "--out", train.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&train.join("runs.csv")), "seed,depth,model,val_acc,test_acc,epochs,seconds");
    assert_eq!(fs::read_to_string(train.join("runs.csv")).unwrap().lines().count(), 3);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(train.join("runs.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["resolved"].as_array().unwrap().len(), 2);

    let diag = tmp.path().join("diag");
    let out = run(&["diagnose", "--data", data, "--depth", "3", "--epochs", "5", "--out", diag.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (file, head) in [
        ("smoothness.csv", "model,depth,k,smoothness,estimated"),
        ("alpha_stats.csv", "model,depth,k,layer,mean,sd,frob_diff"),
        ("gamma_stats.csv", "model,depth,k,mean,sd"),
    ] {
        assert_eq!(header(&diag.join(file)), head);
        assert!(diag.join(file.replace(".csv", ".meta.json")).exists());
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(diag.join("probe_report.json")).unwrap()).unwrap();
    assert_eq!(report[0]["classification"], "SR2OS");
}

#[test]
fn sweep_marks_one_best_depth() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data);
    let out_dir = tmp.path().join("sweep");
    let out = run(&[
        "sweep", "--data", data.to_str().unwrap(), "--model", "aero", "--depth", "1", "--depth", "2", "--seed", "0",
        "--seed", "1", "--epochs", "5", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| l.ends_with(",true")).count(), 1);
    assert!(out_dir.join("best.json").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["train"]).status.code(), Some(2));
    assert_eq!(run(&["paramcount", "nonesuch"]).status.code(), Some(2));
    assert_eq!(run(&["oracle", "nonesuch"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--data", "/nonexistent", "--model", "gatv2", "--depth", "0"]).status.code(), Some(2));
    let out = run(&["sweep", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["train", "--data", "/nonexistent/dataset", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
}
