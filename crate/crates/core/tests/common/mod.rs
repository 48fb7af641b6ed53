#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfscatter_core::filterbank::BankConfig;
use tfscatter_core::scattering::{Scattering, Signal, TransformConfig};

pub const SMALL_RATE: f64 = 1024.0;

/// Banks scaled down so that 512-sample signals resolve every filter.
pub fn small_config() -> TransformConfig {
    TransformConfig {
        banks: BankConfig {
            quality1: 4.0,
            freq_min1: 16.0,
            freq_max1: 400.0,
            quality2: 1.0,
            freq_min2: 4.0,
            freq_max2: 128.0,
            quality_fr: 1.0,
            scale_max: 2.0,
            scale_min: 0.5,
            ..BankConfig::default()
        },
        averaging_scale: 128,
        ..TransformConfig::default()
    }
}

pub fn small_plan(len: usize, depth: usize, joint: bool) -> Scattering {
    Scattering::standard(small_config(), len, SMALL_RATE, depth, joint).unwrap()
}

pub fn noise(len: usize, seed: u64, rate: f64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Signal::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), rate).unwrap()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
