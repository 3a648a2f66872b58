//! Fixtures shared by the benchmarks.

use pstar_core::construct::{midway_distribution, DiscreteNull};
use pstar_core::{GaussianScenario, QuantileFn, StreamRng};

/// Midway distribution of a random `n`-atom null.
pub fn midway_fixture(n: usize, seed: u64) -> QuantileFn {
    let mut rng = StreamRng::new(seed, 0);
    let support: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let raw: Vec<f64> = (0..n).map(|_| 0.1 + rng.open01()).collect();
    let total: f64 = raw.iter().sum();
    let null = DiscreteNull::new(support, raw.into_iter().map(|w| w / total).collect()).unwrap();
    midway_distribution(&null)
}

/// `n` uniform draws.
pub fn uniform_column(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamRng::new(seed, 1);
    (0..n).map(|_| rng.open01()).collect()
}

pub fn correlated_scenario(k: usize, reps: usize) -> GaussianScenario {
    GaussianScenario {
        k,
        delta: 2.0,
        rho: 0.9,
        reps,
        seed: 1,
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pstar_core::order::is_pstar;

    #[test]
    fn fixtures_are_valid() {
        let q = midway_fixture(50, 3);
        assert!(is_pstar(&q, 1024, 1e-12).unwrap().holds);
        assert_eq!(uniform_column(10, 3), uniform_column(10, 3));
        assert!(correlated_scenario(20, 10).validate().is_ok());
    }
}
