#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdgranger::montecarlo::{draw_beta, replication_rng, simulate_with_beta, DgpConfig};
use hdgranger::TimeSeriesDataset;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hdgranger"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Dataset as CSV: one date per row (years from 1000), `y` then the columns.
pub fn write_csv(path: &Path, data: &TimeSeriesDataset) {
    let mut s = String::from("date,y");
    for n in data.column_names() {
        write!(s, ",{n}").unwrap();
    }
    s.push('\n');
    for t in 0..data.n_obs() {
        write!(s, "{:04}-01-01,{}", 1000 + t, data.y()[t]).unwrap();
        for v in data.x().row(t) {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

/// AR(1) design; the last `group.len()` coefficients are set to `group`.
pub fn simulated(t: usize, p: usize, group: &[f64], seed: u64) -> TimeSeriesDataset {
    let cfg = DgpConfig {
        t,
        p,
        n_active: 3,
        seed,
        ..Default::default()
    };
    let mut rng = replication_rng(seed, 0);
    let mut beta = draw_beta(&cfg, &mut rng);
    for (k, b) in group.iter().enumerate() {
        beta[p - group.len() + k] = *b;
    }
    simulate_with_beta(&cfg, &beta, &mut rng).unwrap()
}

pub fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
