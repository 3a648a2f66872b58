//! Monte Carlo power estimation with common random numbers.
//!
//! Replication `r` draws its data from a stream keyed by the scenario's data
//! parameters (not by δ or the method) and its threshold `V` from a separate
//! stream keyed by `r`. All methods in a call therefore see the same draws,
//! and changing δ shifts the same underlying noise. Counts are reduced as
//! integers, so results do not depend on how rayon schedules the work.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::p_to_e_shafer;
use crate::error::{domain, Error, Result};
use crate::merge::{harmonic_constant, merge_harmonic, merge_simes};
use crate::numeric::{normal_sf, stable_sum};
use crate::rng::{derive_stream, StreamRng};
use crate::testing::{randomized_e_given, randomized_pstar_given};
use crate::threshold::make_uniform_threshold;

use super::scenario::{fill_correlated_pvalues, GaussianScenario};

const DATA_TAG: u64 = 0xda7a;
const THRESHOLD_TAG: u64 = 0x7e57;

/// Tests compared in the power studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// `P̄ ≤ α/2`.
    ArithAvg,
    /// `P̄ ≤ V`.
    RandAvg,
    /// `min Pₖ ≤ α/K`.
    Bonferroni,
    /// `min_k K P₍ₖ₎/k ≤ α`.
    Simes,
    /// `(Σ 1/Pₖ)⁻¹ ≤ α/c_K`.
    Harmonic,
    /// `P̄₍₋₁₎ + 2α P₁ ≤ 2α`.
    Enhanced,
    /// `S_n ≥ 1/α`.
    ETerminal,
    /// `2 S_n ≥ 1/V`.
    ERandomized,
    /// `2 S'_n ≥ 1/α`.
    DPrimeTerminal,
    /// `2 S'_n ≥ 1/V`.
    DPrimeRandomized,
    /// `max_t S_t ≥ 1/α`.
    VilleMax,
    /// `max_t S_t ≥ 1/V`.
    VilleMaxRandom,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::ArithAvg,
        Method::RandAvg,
        Method::Bonferroni,
        Method::Simes,
        Method::Harmonic,
        Method::Enhanced,
        Method::ETerminal,
        Method::ERandomized,
        Method::DPrimeTerminal,
        Method::DPrimeRandomized,
        Method::VilleMax,
        Method::VilleMaxRandom,
    ];

    /// Methods (a)–(e) for correlated p-values.
    pub const SETTING_1: [Method; 5] = [
        Method::ArithAvg,
        Method::RandAvg,
        Method::Bonferroni,
        Method::Simes,
        Method::Harmonic,
    ];

    /// Setting 1 plus the enhanced test.
    pub const SETTING_2: [Method; 6] = [
        Method::ArithAvg,
        Method::RandAvg,
        Method::Bonferroni,
        Method::Simes,
        Method::Harmonic,
        Method::Enhanced,
    ];

    /// Martingale tests (a)–(e), with the Ville test against `1/α`.
    pub const MARTINGALE: [Method; 5] = [
        Method::ETerminal,
        Method::ERandomized,
        Method::DPrimeTerminal,
        Method::DPrimeRandomized,
        Method::VilleMax,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::ArithAvg => "arith-avg",
            Method::RandAvg => "rand-avg",
            Method::Bonferroni => "bonferroni",
            Method::Simes => "simes",
            Method::Harmonic => "harmonic",
            Method::Enhanced => "enhanced",
            Method::ETerminal => "e-terminal",
            Method::ERandomized => "e-randomized",
            Method::DPrimeTerminal => "dprime-terminal",
            Method::DPrimeRandomized => "dprime-randomized",
            Method::VilleMax => "ville-max",
            Method::VilleMaxRandom => "ville-max-random",
        }
    }

    /// Whether the method works on observation sequences rather than
    /// p-values.
    pub fn uses_observations(self) -> bool {
        matches!(
            self,
            Method::ETerminal
                | Method::ERandomized
                | Method::DPrimeTerminal
                | Method::DPrimeRandomized
                | Method::VilleMax
                | Method::VilleMaxRandom
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::UnknownMethod(s.into()))
    }
}

/// Monte Carlo rejection frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub method: String,
    pub power: f64,
    /// `sqrt(power (1 − power) / reps)`.
    pub std_err: f64,
    pub reps: usize,
}

impl PowerEstimate {
    pub fn from_count(method: impl Into<String>, hits: u64, reps: usize) -> Self {
        let power = hits as f64 / reps as f64;
        Self {
            method: method.into(),
            power,
            std_err: (power * (1.0 - power) / reps as f64).sqrt(),
            reps,
        }
    }
}

/// Rejection frequency of `trial` over `reps` replications, replication `r`
/// using the stream `derive_stream([tag, r])` of `seed`.
pub fn monte_carlo_rate<F>(label: &str, reps: usize, seed: u64, tag: u64, trial: F) -> PowerEstimate
where
    F: Fn(&mut StreamRng) -> bool + Sync,
{
    let hits: u64 = (0..reps as u64)
        .into_par_iter()
        .map(|r| u64::from(trial(&mut StreamRng::new(seed, derive_stream(&[tag, r])))))
        .sum();
    PowerEstimate::from_count(label, hits, reps)
}

fn data_stream(s: &GaussianScenario, rep: u64) -> u64 {
    derive_stream(&[
        DATA_TAG,
        s.k as u64,
        s.n as u64,
        u64::from(s.independent_first),
        s.rho.to_bits(),
        rep,
    ])
}

struct Context {
    alpha: f64,
    c_k: f64,
    delta: f64,
}

fn pvalue_rejects(m: Method, ps: &[f64], v: f64, cx: &Context) -> Result<bool> {
    let k = ps.len() as f64;
    let mean = || stable_sum(ps.iter().copied()) / k;
    Ok(match m {
        Method::ArithAvg => mean() <= 0.5 * cx.alpha,
        Method::RandAvg => randomized_pstar_given(mean(), v),
        Method::Bonferroni => ps.iter().copied().fold(f64::INFINITY, f64::min) <= cx.alpha / k,
        Method::Simes => merge_simes(ps)? <= cx.alpha,
        Method::Harmonic => merge_harmonic(ps, cx.c_k)? <= cx.alpha,
        Method::Enhanced => {
            if ps.len() < 2 {
                return Err(domain("the enhanced test needs K ≥ 2"));
            }
            let rest = stable_sum(ps[1..].iter().copied()) / (k - 1.0);
            rest + 2.0 * cx.alpha * ps[0] <= 2.0 * cx.alpha
        }
        _ => unreachable!("observation method"),
    })
}

/// Terminal and maximal values of `S` and the terminal value of `S'`.
struct PathSummary {
    s_n: f64,
    s_max: f64,
    s_prime_n: f64,
}

fn summarize(xs: &[f64], delta: f64) -> Result<PathSummary> {
    let half = 0.5 * delta * delta;
    let mut log_s = 0.0f64;
    let mut log_max = f64::NEG_INFINITY;
    for &x in xs {
        log_s += delta * x - half;
        log_max = log_max.max(log_s);
    }
    let e1 = p_to_e_shafer(normal_sf(xs[0]))?;
    let tail = log_s - (delta * xs[0] - half);
    let s_prime_n = if e1 == 0.0 { 0.0 } else { (e1.ln() + tail).exp() };
    Ok(PathSummary {
        s_n: log_s.exp(),
        s_max: log_max.exp(),
        s_prime_n,
    })
}

fn path_rejects(m: Method, p: &PathSummary, v: f64, alpha: f64) -> bool {
    match m {
        Method::ETerminal => p.s_n >= 1.0 / alpha,
        Method::ERandomized => randomized_e_given(p.s_n, v),
        Method::DPrimeTerminal => 2.0 * p.s_prime_n >= 1.0 / alpha,
        Method::DPrimeRandomized => randomized_e_given(p.s_prime_n, v),
        Method::VilleMax => p.s_max >= 1.0 / alpha,
        Method::VilleMaxRandom => p.s_max >= 1.0 / v,
        _ => unreachable!("p-value method"),
    }
}

/// Powers of several methods on shared draws.
pub fn estimate_powers(s: &GaussianScenario, methods: &[Method], alpha: f64) -> Result<Vec<PowerEstimate>> {
    s.validate()?;
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(domain(format!("α = {alpha} is outside (0, 1/2]")));
    }
    let needs_p = methods.iter().any(|m| !m.uses_observations());
    let needs_x = methods.iter().any(|m| m.uses_observations());
    if needs_p && methods.contains(&Method::Enhanced) && s.k < 2 {
        return Err(domain("the enhanced test needs K ≥ 2"));
    }
    let cx = Context {
        alpha,
        c_k: if s.k >= 2 { harmonic_constant(s.k)? } else { 1.0 + f64::EPSILON },
        delta: s.delta,
    };
    let threshold = make_uniform_threshold(alpha)?;
    let counts = (0..s.reps as u64)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(s.k),
            |ps, rep| -> Result<Vec<u64>> {
                let mut data = StreamRng::new(s.seed, data_stream(s, rep));
                let v = threshold.sample(&mut StreamRng::new(s.seed, derive_stream(&[THRESHOLD_TAG, rep])));
                let mut hits = vec![0u64; methods.len()];
                if needs_p {
                    fill_correlated_pvalues(s, &mut data, ps);
                }
                let summary = if needs_x {
                    let xs: Vec<f64> = (0..s.n).map(|_| cx.delta + data.standard_normal()).collect();
                    Some(summarize(&xs, cx.delta)?)
                } else {
                    None
                };
                for (h, &m) in hits.iter_mut().zip(methods) {
                    let reject = match &summary {
                        Some(p) if m.uses_observations() => path_rejects(m, p, v, alpha),
                        _ => pvalue_rejects(m, ps, v, &cx)?,
                    };
                    *h = u64::from(reject);
                }
                Ok(hits)
            },
        )
        .try_reduce(
            || vec![0u64; methods.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    Ok(methods
        .iter()
        .zip(counts)
        .map(|(m, c)| PowerEstimate::from_count(m.id(), c, s.reps))
        .collect())
}

pub fn estimate_power(s: &GaussianScenario, method: Method, alpha: f64) -> Result<PowerEstimate> {
    Ok(estimate_powers(s, &[method], alpha)?.remove(0))
}
