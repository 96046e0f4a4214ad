//! Fixtures shared by the kernel benchmarks.

use hjmp_core::neural::TrainBatch;
use hjmp_core::seed;
use hjmp_core::sim::{sample_scenario, Scenario};
use hjmp_core::{SystemKind, SystemSpec};

/// `n` joint states drawn uniformly from the state box, with times in
/// `[0, T]`.
pub fn random_batch(sys: &SystemSpec, n: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    use rand::Rng;
    let mut rng = seed::rng(seed);
    let ts = (0..n).map(|_| rng.random_range(0.0..sys.horizon)).collect();
    let xs = (0..n).map(|_| sys.sample_joint(&mut rng)).collect();
    (ts, xs)
}

pub fn train_batch(sys: &SystemSpec, n: usize, seed: u64) -> TrainBatch {
    let (ts, xs) = random_batch(sys, n, seed);
    let (_, terminal_xs) = random_batch(sys, n / 4, seed ^ 1);
    TrainBatch { ts, xs, terminal_xs }
}

/// A particle scenario with `m` agents at their start states.
pub fn particle_crowd(m: usize, seed: u64) -> Scenario {
    sample_scenario(SystemKind::Particle, m, seed).expect("particle scenarios are always feasible")
}
