//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terrasense::costmap::CostMap;
use terrasense::raster::RgbImage;

/// Square cost map with random finite costs and a fraction of blocked cells.
pub fn random_cost_map(n: usize, blocked: f64, seed: u64) -> CostMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = (0..n * n)
        .map(|_| if rng.random_bool(blocked) { f64::INFINITY } else { rng.random_range(0.5..10.0) })
        .collect();
    CostMap::new(n, n, 0.25, cost)
}

pub fn noise_image(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            img.put(x, y, [rng.random(), rng.random(), rng.random()]);
        }
    }
    img
}
