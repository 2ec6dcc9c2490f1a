//! Fixtures shared by the benchmarks.

use nnflow_core::rng::seeded_rng;
use nnflow_core::PointCloud;
use rand::Rng;

/// `n` points uniform in the cube `[-half, half]^3`.
pub fn uniform_cloud(n: usize, half: f64, seed: u64) -> PointCloud {
    let mut rng = seeded_rng(seed);
    let points = (0..n)
        .map(|_| [0, 1, 2].map(|_| rng.random_range(-half..half)))
        .collect();
    PointCloud::new(points).expect("finite fixture")
}
