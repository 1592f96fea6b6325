use std::process::{Command, Output};

fn deepset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepset")).args(args).output().unwrap()
}

const TINY: [&str; 8] = [
    "--steps",
    "5",
    "--width",
    "6",
    "--batch",
    "4",
    "--eval-populations",
    "10",
];

#[test]
fn writing_commands_require_seed_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(!deepset(&["gen-data", "--task", "circle", "--out-dir", out])
        .status
        .success());
    assert!(!deepset(&["gen-data", "--task", "circle", "--seed", "1"])
        .status
        .success());
    assert!(deepset(&[
        "gen-data",
        "--task",
        "circle",
        "--count",
        "3",
        "--seed",
        "1",
        "--out-dir",
        out
    ])
    .status
    .success());
    assert!(dir.path().join("circle.jsonl").exists());
}

#[test]
fn train_writes_model_config_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        &["train", "--task", "circle"][..],
        &TINY,
        &["--seed", "3", "--out-dir", out],
    ]
    .concat();
    let result = deepset(&args);
    assert_eq!(
        result.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    for file in ["config.toml", "model.bin", "train.csv", "train.json"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn a_diverging_cell_makes_the_grid_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        &[
            "grid",
            "--task",
            "circle",
            "--cells",
            "mean:mean,sum:sum",
            "--repeats",
            "1",
        ][..],
        &TINY,
        &["--learning-rate", "1e300", "--seed", "4", "--out-dir", out],
    ]
    .concat();
    let result = deepset(&args);
    assert_eq!(
        result.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = deepset(&[
        "train",
        "--task",
        "circle",
        "--width",
        "0",
        "--seed",
        "1",
        "--out-dir",
        out,
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&result.stderr).is_empty());
}
