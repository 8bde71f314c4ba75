#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SINITIC_ENV: &str = "SINITIC_TSV";
/// Header of the protoform column when it is not the last one.
pub const SINITIC_PROTO_ENV: &str = "SINITIC_PROTO_COLUMN";

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn data_file(name: &str) -> PathBuf {
    workspace_root().join("data").join(name)
}

/// Runs the built `protorec` binary.
pub fn protorec(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_protorec"));
    c.args(args).current_dir(workspace_root());
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

pub fn check(out: &Output, what: &str) -> Result<String, String> {
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("{what} exited with {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// (acc_mean, ped_mean) of a system from a results CSV.
pub fn csv_row(csv: &str, system: &str) -> Option<(f64, f64)> {
    let line = csv.lines().find(|l| l.split(',').next() == Some(system))?;
    let f: Vec<&str> = line.split(',').collect();
    Some((f[6].parse().ok()?, f[2].parse().ok()?))
}

pub struct SiniticResult {
    pub accuracy: f64,
    pub ped: f64,
    pub table: String,
}

/// Ten Sinitic-preset seeds through `train` and `evaluate`.
pub fn sinitic_reproduction(tsv: &Path, out: &Path) -> Result<SiniticResult, String> {
    let tsv = tsv.to_str().unwrap();
    let out = out.to_str().unwrap();
    let proto = std::env::var(SINITIC_PROTO_ENV).ok();
    let mut train = vec!["train", "--dataset", tsv, "--preset", "sinitic", "--seeds", "0..10", "--out", out];
    if let Some(p) = &proto {
        train.extend(["--proto-column", p.as_str()]);
    }
    check(&protorec(&train, &[]), "train")?;
    let table = check(&protorec(&["evaluate", "--out", out], &[]), "evaluate")?;
    let csv = std::fs::read_to_string(Path::new(out).join("results.csv")).map_err(|e| e.to_string())?;
    let (accuracy, ped) = csv_row(&csv, "Transformer").ok_or("no Transformer row")?;
    Ok(SiniticResult { accuracy, ped, table })
}
