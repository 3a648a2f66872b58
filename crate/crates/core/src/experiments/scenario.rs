//! Gaussian scenarios: equicorrelated p-values and i.i.d. observations with
//! their likelihood-ratio martingales.

use serde::{Deserialize, Serialize};

use crate::calibrate::p_to_e_shafer;
use crate::error::{domain, Result};
use crate::numeric::normal_sf;
use crate::rng::StreamRng;
use crate::testing::MartingalePath;

/// One point of a power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianScenario {
    /// Number of p-values.
    pub k: usize,
    /// Signal mean.
    pub delta: f64,
    /// Pairwise correlation of the statistics.
    pub rho: f64,
    /// The first statistic is independent of the others.
    pub independent_first: bool,
    /// Length of the observation sequence for martingale tests.
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for GaussianScenario {
    fn default() -> Self {
        Self {
            k: 1,
            delta: 0.0,
            rho: 0.0,
            independent_first: false,
            n: 1,
            reps: 10_000,
            seed: 0,
        }
    }
}

impl GaussianScenario {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(domain("K and n must be at least 1"));
        }
        if self.reps == 0 {
            return Err(domain("reps must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(domain(format!("ρ = {} is outside [0, 1)", self.rho)));
        }
        if !self.delta.is_finite() {
            return Err(domain("δ must be finite"));
        }
        Ok(())
    }
}

/// Fills `out` with `X_k = δ + √ρ Z₀ + √(1−ρ) Z_k` mapped to `1 − Φ(X_k)`.
///
/// With `independent_first` the first statistic is `δ + Z₁` and does not load
/// on the common factor.
pub fn fill_correlated_pvalues(s: &GaussianScenario, rng: &mut StreamRng, out: &mut Vec<f64>) {
    out.clear();
    let a = s.rho.sqrt();
    let b = (1.0 - s.rho).sqrt();
    let z0 = rng.standard_normal();
    for k in 0..s.k {
        let z = rng.standard_normal();
        let x = if k == 0 && s.independent_first {
            s.delta + z
        } else {
            s.delta + a * z0 + b * z
        };
        out.push(normal_sf(x));
    }
}

pub fn gen_correlated_pvalues(s: &GaussianScenario, rng: &mut StreamRng) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.k);
    fill_correlated_pvalues(s, rng, &mut out);
    out
}

/// `n` i.i.d. draws from `N(δ, 1)`.
pub fn gen_observations(s: &GaussianScenario, rng: &mut StreamRng) -> Vec<f64> {
    (0..s.n).map(|_| s.delta + rng.standard_normal()).collect()
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() {
        return Err(domain("δ must be finite"));
    }
    Ok(())
}

/// Running products of a log-likelihood-ratio sequence, starting from `s0`.
fn path_from_logs(s0: f64, logs: impl Iterator<Item = f64>) -> Result<MartingalePath> {
    let mut values = vec![1.0, s0];
    if s0 == 0.0 {
        values.extend(logs.map(|_| 0.0));
        return MartingalePath::new(values);
    }
    let mut acc = s0.ln();
    for l in logs {
        acc += l;
        values.push(acc.exp());
    }
    MartingalePath::new(values)
}

/// `S_t = ∏_{s≤t} exp(δ x_s − δ²/2)`, the likelihood ratio of `N(δ, 1)`
/// against `N(0, 1)`. With `δ = 0` the path is identically 1.
pub fn build_martingale(xs: &[f64], delta: f64) -> Result<MartingalePath> {
    check_delta(delta)?;
    let half = 0.5 * delta * delta;
    let mut values = Vec::with_capacity(xs.len() + 1);
    values.push(1.0);
    let mut acc = 0.0;
    for &x in xs {
        acc += delta * x - half;
        values.push(acc.exp());
    }
    MartingalePath::new(values)
}

/// `S'_t = E₁' ∏_{2≤s≤t} exp(δ x_s − δ²/2)` with `E₁' = (1 − Φ(x₁))^{−1/2} − 1`.
pub fn build_modified_martingale(xs: &[f64], delta: f64) -> Result<MartingalePath> {
    check_delta(delta)?;
    let (&x1, rest) = xs.split_first().ok_or_else(|| domain("need at least one observation"))?;
    let e1 = p_to_e_shafer(normal_sf(x1))?;
    let half = 0.5 * delta * delta;
    path_from_logs(e1, rest.iter().map(|&x| delta * x - half))
}
