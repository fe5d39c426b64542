#![allow(dead_code)]

use mfc_core::measures::WeightedCloud;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Clouds of `1..=max_n` atoms in `[-3, 3]^dim` with weights bounded away from 0.
pub fn cloud(dim: usize, max_n: usize) -> impl Strategy<Value = WeightedCloud> {
    prop::collection::vec(
        (prop::collection::vec(-3.0f64..3.0, dim), 0.05f64..1.0),
        1..=max_n,
    )
    .prop_map(|atoms| {
        let w: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        WeightedCloud::new(atoms.into_iter().map(|a| a.0).collect(), normalize(&w)).unwrap()
    })
}

pub fn random_cloud(rng: &mut ChaCha8Rng, dim: usize, n: usize, half_width: f64) -> WeightedCloud {
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(-half_width..half_width))
                .collect()
        })
        .collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    WeightedCloud::new(pts, normalize(&w)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
