#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IDS: [&str; 4] = ["B0005", "B0006", "B0007", "B0018"];

/// Declining capacity with noise and occasional regeneration bumps.
pub fn synthetic_capacities(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(1.8..2.05);
    let fade = rng.gen_range(0.0025..0.0045);
    let mut bump = 0.0;
    (0..len)
        .map(|t| {
            if rng.gen_bool(0.04) {
                bump += rng.gen_range(0.01..0.04);
            }
            bump *= 0.8;
            start - fade * t as f64 + bump + rng.gen_range(-0.002..0.002)
        })
        .collect()
}

pub fn write_csv(dir: &Path, id: &str, capacities: &[f64]) -> PathBuf {
    let mut body = String::from("cycle,capacity_ah\n");
    for (i, c) in capacities.iter().enumerate() {
        body.push_str(&format!("{},{c}\n", i + 1));
    }
    let path = dir.join(format!("{id}.csv"));
    std::fs::write(&path, body).unwrap();
    path
}

/// Writes `count` synthetic battery files of `len + 3 * i` cycles.
pub fn synthetic_data_dir(dir: &Path, count: usize, len: usize) {
    for (i, id) in IDS.iter().take(count).enumerate() {
        write_csv(dir, id, &synthetic_capacities(len + 3 * i, 500 + i as u64));
    }
}

pub fn capforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capforge"))
        .args(args)
        .env_remove("CAPFORGE_SEED")
        .output()
        .expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}
