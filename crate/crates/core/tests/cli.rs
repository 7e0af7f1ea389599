use std::path::Path;
use std::process::{Command, Output};

use mustangs::harness::{read_run_csv_file, KeyValueFile, RunConfig};

const SMALL: [&str; 10] = [
    "--set",
    "steps_per_mutation=2",
    "--set",
    "gen_hidden=6",
    "--set",
    "disc_hidden=6",
    "--set",
    "metric_samples=256",
    "--set",
    "batch_size=32",
];

fn mustangs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mustangs")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_all_outputs_and_flags_beat_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    std::fs::write(&conf, "# small grid\nvariant = lip-mse\ngrid = 2x2\nepochs = 5\nseed = 4\n").unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["run", "--config", path(&conf), "--epochs", "2", "--out", path(&out)];
    args.extend(SMALL);
    let res = mustangs(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let records = read_run_csv_file(&out.join("run.csv")).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[1].epoch, 2);
    assert!(records.iter().all(|r| r.cell_scores.len() == 4));

    let summary = KeyValueFile::read(&out.join("summary.txt")).unwrap();
    assert_eq!(summary.require("variant").unwrap(), "lip-mse");
    assert_eq!(summary.require("seed").unwrap(), "4");

    let weights = std::fs::read_to_string(out.join("weights.txt")).unwrap();
    let total: f64 = weights.lines().map(|l| l.parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6);

    // the written config reproduces the effective settings
    let saved = RunConfig::from_file(&out.join("config.txt")).unwrap();
    assert_eq!(saved.epochs, 2);
    assert_eq!((saved.grid_rows, saved.grid_cols), (2, 2));
    assert_eq!(saved.steps_per_mutation, 2);
}

#[test]
fn sweep_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    for variant in ["gan-bce", "e-gan"] {
        let mut args = vec!["sweep", "--variant", variant, "--epochs", "2", "--seeds", "1,2,3", "--out", path(dir.path())];
        args.extend(SMALL);
        let res = mustangs(&args);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        assert_eq!(String::from_utf8_lossy(&res.stdout).lines().count(), 3);
    }
    assert!(dir.path().join("e-gan-seed2").join("run.csv").is_file());

    let res = mustangs(&["compare", "--inputs", path(dir.path()), "--alpha", "0.05"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("method,runs,mean,std_pct,median,iqr,min,max"), "{text}");
    assert!(text.contains("\ne-gan,3,"), "{text}");
    assert!(text.contains("\ngan-bce,3,"), "{text}");
    assert!(text.contains("e-gan,gan-bce,"), "{text}");
    // the E-GAN fitness caveat travels with any table that includes it
    assert!(text.starts_with("# "), "{text}");
}

#[test]
fn bad_input_exits_with_code_two() {
    let res = mustangs(&["run", "--variant", "wgan", "--epochs", "1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));

    let res = mustangs(&["run", "--set", "no_such_key=1", "--epochs", "1"]);
    assert_eq!(res.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let res = mustangs(&["compare", "--inputs", path(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
}
