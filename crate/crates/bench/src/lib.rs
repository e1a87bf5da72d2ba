//! Shared fixtures for the benchmarks.

use vibrancy_core::geometry::GeoPoint;
use vibrancy_core::synth::SplitMix64;

/// Uniform points in a box of roughly 10 km around a mid-latitude origin.
pub fn random_points(n: usize, seed: u64) -> Vec<GeoPoint> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| GeoPoint::new(rng.range(-75.30, -75.18), rng.range(39.90, 39.99)).expect("in range"))
        .collect()
}

/// `y = 2x + 1` plus noise, with every twentieth point pushed far down.
pub fn regression_fixture(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::new(seed);
    let x: Vec<f64> = (0..n).map(|i| i as f64 / 10.0).collect();
    let y = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| if i % 20 == 19 { -100.0 } else { 2.0 * xi + 1.0 + 0.5 * rng.normal() })
        .collect();
    (x, y)
}
