#![allow(dead_code)]

use capforge_core::data::CapacitySeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A declining capacity curve with occasional regeneration jumps and noise.
pub fn synthetic_series(id: &str, len: usize, seed: u64) -> CapacitySeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(1.8..2.05);
    let fade = rng.gen_range(0.0025..0.0045);
    let mut bump = 0.0;
    let capacities: Vec<f64> = (0..len)
        .map(|t| {
            if rng.gen_bool(0.04) {
                bump += rng.gen_range(0.01..0.04);
            }
            bump *= 0.8;
            start - fade * t as f64 + bump + rng.gen_range(-0.002..0.002)
        })
        .collect();
    CapacitySeries::new(id, (1..=len as u32).collect(), capacities).unwrap()
}

pub fn synthetic_fleet(len: usize) -> Vec<CapacitySeries> {
    ["B0005", "B0006", "B0007", "B0018"]
        .iter()
        .enumerate()
        .map(|(i, id)| synthetic_series(id, len + 4 * i, 100 + i as u64))
        .collect()
}
