#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy").join(name)
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn confdiag(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_confdiag"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Writes a config for the toy data into `dir` with extra `key = value` lines.
pub fn toy_config(dir: &Path, extra: &str) -> PathBuf {
    let base = format!(
        "logs = {}\nq_matrix = {}\noutput_dir = {}\nvariant = mirt\nseed = 7\npretrain_epochs = 10\nmax_epochs = 10\n",
        fixture("logs.csv").display(),
        fixture("q_matrix.csv").display(),
        dir.join("run").display(),
    );
    let key = |l: &str| l.split('=').next().unwrap_or("").trim().to_owned();
    let overridden: Vec<String> = extra.lines().map(key).collect();
    let mut text: String = base
        .lines()
        .filter(|l| !overridden.contains(&key(l)))
        .map(|l| format!("{l}\n"))
        .collect();
    text.push_str(extra);
    let path = dir.join("run.conf");
    std::fs::write(&path, text).unwrap();
    path
}

/// Trains the toy config into `dir/run` and returns the checkpoint path.
pub fn trained(dir: &Path) -> PathBuf {
    let cfg = toy_config(dir, "");
    let r = confdiag(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    dir.join("run/checkpoint.json")
}

/// Value printed after `label` on its own line.
pub fn printed(stdout: &str, label: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(label))
        .unwrap_or_else(|| panic!("{label} not in {stdout}"))
        .trim()
        .parse()
        .unwrap()
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}
