#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clap::Parser;
use poolid_cli::{run, Cli, Result};

/// Sixty simulated days with tiny training budgets.
pub const SMALL: &str = r#"
[simulation.suite]
days = 60
test_days = 3
section_days = 7

[model.nlarx]
hidden_layers = [8]
epochs = 3
patience = 2
train_stride = 8
val_stride = 8

[hyperopt]
stride = 8

[hyperopt.nlarx.base]
epochs = 2
patience = 2
train_stride = 16
val_stride = 16
"#;

pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("{SMALL}\n{extra}")).unwrap();
    p
}

/// Runs one command with explicit global options.
pub fn cmd(config: &Path, out: &Path, run_id: &str, seed: u64, args: &[&str]) -> Result<String> {
    let seed = seed.to_string();
    let mut argv = vec![
        "poolid",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--run-id",
        run_id,
        "--seed",
        &seed,
    ];
    argv.extend_from_slice(args);
    run(&Cli::try_parse_from(argv).expect("arguments parse"))
}

/// Simulated and prepared small run.
pub fn prepared(dir: &Path, run_id: &str, seed: u64) -> PathBuf {
    let cfg = write_config(dir, "");
    cmd(&cfg, dir, run_id, seed, &["simulate"]).unwrap();
    cmd(&cfg, dir, run_id, seed, &["prepare"]).unwrap();
    cfg
}

/// Relative path and contents of every file below `root`, sorted.
pub fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
