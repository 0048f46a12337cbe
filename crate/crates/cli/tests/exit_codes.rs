mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::write_config;

fn poolid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poolid"))
        .args(args)
        .env_remove("POOLID_CONFIG")
        .env_remove("POOLID_SEED")
        .env_remove("POOLID_RUN_ID")
        .env("POOLID_OUT", dir)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = poolid(tmp.path(), &["--seed", "1", "train", "--family", "gru"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("gru"), "{}", stderr(&o));
    assert_eq!(code(&poolid(tmp.path(), &["--seed", "1", "fit"])), 2);
    assert_eq!(code(&poolid(tmp.path(), &["--seed", "x", "simulate"])), 2);
}

#[test]
fn configuration_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();

    let o = poolid(tmp.path(), &["--config", c, "--run-id", "x", "simulate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\n[model]\nfamliy = \"lss\"\n").unwrap();
    assert_eq!(code(&poolid(tmp.path(), &["--config", bad.to_str().unwrap(), "simulate"])), 2);

    let missing = tmp.path().join("none.toml");
    assert_eq!(code(&poolid(tmp.path(), &["--config", missing.to_str().unwrap(), "--seed", "1", "simulate"])), 2);

    assert_eq!(code(&poolid(tmp.path(), &["--config", c, "--seed", "1", "--run-id", "empty", "prepare"])), 2);
    assert_eq!(code(&poolid(tmp.path(), &["--config", c, "--seed", "1", "--run-id", "empty", "eval"])), 2);
    assert_eq!(code(&poolid(tmp.path(), &["--config", c, "--seed", "1", "--run-id", "empty", "report"])), 2);
    assert_eq!(code(&poolid(tmp.path(), &["--config", c, "--seed", "1", "--run-id", "../up", "simulate"])), 2);
}

#[test]
fn data_and_numeric_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[hyperopt.nlarx]\nlearning_rate = [1e200, 1e201]\nl2 = [0.0]\nloss_horizon = [15]\nn_layers = [1]\nunits = [64]\n",
    );
    let c = cfg.to_str().unwrap();
    let args = |cmd: &'static str| ["--config", c, "--seed", "1", "--run-id", "d", cmd];
    assert_eq!(code(&poolid(tmp.path(), &args("simulate"))), 0);
    assert_eq!(code(&poolid(tmp.path(), &args("prepare"))), 0);

    let o = poolid(tmp.path(), &["--config", c, "--seed", "1", "--run-id", "d", "hyperopt", "--family", "nlarx", "--budget", "2"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));

    let month = tmp.path().join("d").join("data").join("2019-09.csv");
    let text = std::fs::read_to_string(&month).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[5] = "not,a,row";
    std::fs::write(&month, lines.join("\n")).unwrap();
    let o = poolid(tmp.path(), &args("prepare"));
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}
