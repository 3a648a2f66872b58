//! Tests built from p*-values and e-values: the randomized p*-test, its
//! deterministic and combined fallbacks, e-value tests, Ville's test on
//! martingale paths, and averaging tests for several p-values.
//!
//! Ties reject: p-scale tests reject when the statistic is at most the
//! threshold, e-scale tests when it is at least the threshold.

use serde::{Deserialize, Serialize};

use crate::construct::WeightVector;
use crate::error::{domain, invalid, Error, Result};
use crate::numeric::stable_sum;
use crate::rng::{RngProvenance, StreamRng};
use crate::threshold::{make_uniform_threshold, ValidatedThreshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionScale {
    /// Reject iff statistic ≤ threshold.
    P,
    /// Reject iff statistic ≥ threshold.
    E,
}

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub test: String,
    pub reject: bool,
    #[serde(with = "crate::serde_ext::float")]
    pub statistic: f64,
    #[serde(with = "crate::serde_ext::float")]
    pub threshold: f64,
    pub scale: DecisionScale,
    /// The random threshold draw, for randomized tests.
    #[serde(default, with = "crate::serde_ext::opt_float", skip_serializing_if = "Option::is_none")]
    pub threshold_drawn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_path: Option<RngProvenance>,
    /// First time a martingale path reached the threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing_time: Option<usize>,
    /// The threshold was used without validation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
    /// Conditions the caller asserted and the library could not check.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumptions: Vec<String>,
}

impl TestDecision {
    fn p_scale(test: &str, statistic: f64, threshold: f64) -> Self {
        Self::build(test, statistic, threshold, DecisionScale::P)
    }

    fn e_scale(test: &str, statistic: f64, threshold: f64) -> Self {
        Self::build(test, statistic, threshold, DecisionScale::E)
    }

    fn build(test: &str, statistic: f64, threshold: f64, scale: DecisionScale) -> Self {
        let reject = match scale {
            DecisionScale::P => statistic <= threshold,
            DecisionScale::E => statistic >= threshold,
        };
        Self {
            test: test.into(),
            reject,
            statistic,
            threshold,
            scale,
            threshold_drawn: None,
            seed_path: None,
            crossing_time: None,
            forced: false,
            assumptions: Vec::new(),
        }
    }

    fn drawn(mut self, v: f64, seed_path: RngProvenance, forced: bool) -> Self {
        self.threshold_drawn = Some(v);
        self.seed_path = Some(seed_path);
        self.forced = forced;
        self
    }

    fn assuming(mut self, a: impl Into<String>) -> Self {
        self.assumptions.push(a.into());
        self
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(domain(format!("α = {alpha} is outside (0, 1/2]")));
    }
    Ok(())
}

fn check_nonneg(x: f64, what: &str) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(domain(format!("{what} {x} is negative or NaN")));
    }
    Ok(x)
}

fn check_unit(x: f64, what: &str) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("{what} {x} is outside [0, 1]")));
    }
    Ok(x)
}

/// Decision of the randomized p*-test for a given threshold draw.
pub fn randomized_pstar_given(p_star: f64, v: f64) -> bool {
    p_star <= v
}

/// Rejects iff `p* ≤ V` for one fresh draw of `V`.
pub fn randomized_pstar_test(p_star: f64, v: &ValidatedThreshold, rng: &mut StreamRng) -> Result<TestDecision> {
    check_nonneg(p_star, "p*-value")?;
    let path = rng.provenance();
    let draw = v.sample(rng);
    Ok(TestDecision::p_scale("randomized-pstar", p_star, draw).drawn(draw, path, v.is_forced()))
}

/// Rejects iff `p* ≤ α/2`.
pub fn deterministic_pstar_test(p_star: f64, alpha: f64) -> Result<TestDecision> {
    check_alpha(alpha)?;
    check_nonneg(p_star, "p*-value")?;
    Ok(TestDecision::p_scale("deterministic-pstar", p_star, 0.5 * alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinedVariant {
    /// `p* / (2(1 − p)) ≤ α`.
    StarOverP,
    /// `p / (2(1 − p*)) ≤ α`.
    POverStar,
}

/// `a / (2(1 − b))`, with the limit convention at `b = 1`: 0 when `a = 0`,
/// otherwise ∞.
fn ratio(a: f64, b: f64) -> f64 {
    if b >= 1.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a / (2.0 * (1.0 - b))
    }
}

/// Deterministic tests combining a p-value and an independent p*-value.
pub fn combined_p_pstar_test(p: f64, p_star: f64, alpha: f64, variant: CombinedVariant) -> Result<TestDecision> {
    check_alpha(alpha)?;
    check_unit(p, "p-value")?;
    check_unit(p_star, "p*-value")?;
    let (name, stat) = match variant {
        CombinedVariant::StarOverP => ("combined-star-over-p", ratio(p_star, p)),
        CombinedVariant::POverStar => ("combined-p-over-star", ratio(p, p_star)),
    };
    Ok(TestDecision::p_scale(name, stat, alpha).assuming("p and p* are independent"))
}

/// Rejects iff `e ≥ 1/α`.
pub fn e_test(e: f64, alpha: f64) -> Result<TestDecision> {
    check_alpha(alpha)?;
    check_nonneg(e, "e-value")?;
    Ok(TestDecision::e_scale("e", e, 1.0 / alpha))
}

/// Decision of the randomized e-test for a given threshold draw.
pub fn randomized_e_given(e: f64, v: f64) -> bool {
    2.0 * e >= 1.0 / v
}

/// Rejects iff `2e ≥ 1/V` for one fresh draw of `V`.
pub fn randomized_e_test(e: f64, v: &ValidatedThreshold, rng: &mut StreamRng) -> Result<TestDecision> {
    check_nonneg(e, "e-value")?;
    let path = rng.provenance();
    let draw = v.sample(rng);
    Ok(TestDecision::e_scale("randomized-e", 2.0 * e, 1.0 / draw)
        .drawn(draw, path, v.is_forced())
        .assuming("E and V are independent"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DPrimeHolder {
    First,
    Second,
}

/// `a·b` with `0·∞ = 0`.
pub fn product_or_zero(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Rejects iff `2 e₁ e₂ ≥ 1/α`, valid when the flagged input is first-order
/// dominated by an e-variable with decreasing density.
pub fn product_e_test(e1: f64, e2: f64, alpha: f64, holder: DPrimeHolder) -> Result<TestDecision> {
    check_alpha(alpha)?;
    check_nonneg(e1, "e-value")?;
    check_nonneg(e2, "e-value")?;
    let which = match holder {
        DPrimeHolder::First => 1,
        DPrimeHolder::Second => 2,
    };
    Ok(
        TestDecision::e_scale("product-e", 2.0 * product_or_zero(e1, e2), 1.0 / alpha)
            .assuming(format!("e{which} is dominated by an e-variable with decreasing density"))
            .assuming("e1 and e2 are independent"),
    )
}

/// A nonnegative process `S₀ = 1, S₁, …, Sₙ` with its running maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePath {
    values: Vec<f64>,
    running_max: Vec<f64>,
}

impl MartingalePath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&1.0) {
            return Err(invalid("a martingale path starts at S₀ = 1"));
        }
        if let Some(t) = values.iter().position(|v| v.is_nan() || *v < 0.0) {
            return Err(domain(format!("path value S_{t} = {} is negative or NaN", values[t])));
        }
        let running_max = values
            .iter()
            .scan(f64::NEG_INFINITY, |m, &v| {
                *m = m.max(v);
                Some(*m)
            })
            .collect();
        Ok(Self { values, running_max })
    }

    /// `S_t = ∏_{s ≤ t} E_s`; once the product hits 0 it stays there.
    pub fn from_factors(factors: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut values = vec![1.0];
        let mut s = 1.0;
        for e in factors {
            check_nonneg(e, "e-value")?;
            s = product_or_zero(s, e);
            values.push(s);
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn running_max(&self) -> &[f64] {
        &self.running_max
    }

    /// `n`, the number of factors.
    pub fn len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn max(&self) -> f64 {
        *self.running_max.last().unwrap()
    }

    /// First `t` with `S_t ≥ level`.
    pub fn first_crossing(&self, level: f64) -> Option<usize> {
        self.values.iter().position(|&v| v >= level)
    }
}

/// Rejects iff `max_t S_t ≥ 1/α` (Ville's inequality).
pub fn ville_test(path: &MartingalePath, alpha: f64) -> Result<TestDecision> {
    check_alpha(alpha)?;
    let level = 1.0 / alpha;
    let mut d = TestDecision::e_scale("ville", path.max(), level).assuming("path is a test supermartingale");
    d.crossing_time = path.first_crossing(level);
    Ok(d)
}

/// Rejects iff `max_t S_t ≥ 1/V` for one fresh draw of `V`.
pub fn ville_test_randomized(path: &MartingalePath, v: &ValidatedThreshold, rng: &mut StreamRng) -> Result<TestDecision> {
    let seed_path = rng.provenance();
    let draw = v.sample(rng);
    let level = 1.0 / draw;
    let mut d = TestDecision::e_scale("ville-randomized", path.max(), level)
        .drawn(draw, seed_path, v.is_forced())
        .assuming("path is a test supermartingale");
    d.crossing_time = path.first_crossing(level);
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingMode {
    /// `P̄ ≤ α/2`.
    Deterministic,
    /// `P̄ ≤ V` with `V ~ U[0, 2α]`.
    Randomized,
    /// `P̄₍₋₁₎ + 2α P₁ ≤ 2α`, where `P₁` is independent of the rest and
    /// `P̄₍₋₁₎` averages the others.
    Enhanced,
}

/// Averaging tests for several p-values under arbitrary dependence.
///
/// In enhanced mode the weight vector covers all `K` values and must put
/// zero weight on the first one, which plays the role of the independent
/// p-value.
pub fn averaging_test(
    ps: &[f64],
    w: &WeightVector,
    alpha: f64,
    mode: AveragingMode,
    rng: &mut StreamRng,
) -> Result<TestDecision> {
    check_alpha(alpha)?;
    if ps.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            got: ps.len(),
        });
    }
    for &p in ps {
        check_nonneg(p, "p-value")?;
    }
    let avg = stable_sum(ps.iter().zip(w.as_slice()).map(|(p, w)| p * w));
    match mode {
        AveragingMode::Deterministic => Ok(TestDecision::p_scale("averaging-deterministic", avg, 0.5 * alpha)),
        AveragingMode::Randomized => {
            let v = ValidatedThreshold::new(make_uniform_threshold(alpha)?, 0.0)?;
            let seed_path = rng.provenance();
            let draw = v.sample(rng);
            Ok(TestDecision::p_scale("averaging-randomized", avg, draw).drawn(draw, seed_path, false))
        }
        AveragingMode::Enhanced => {
            if ps.len() < 2 || w.as_slice()[0] != 0.0 {
                return Err(invalid("enhanced averaging needs K ≥ 2 and zero weight on the first p-value"));
            }
            Ok(
                TestDecision::p_scale("averaging-enhanced", avg + 2.0 * alpha * ps[0], 2.0 * alpha)
                    .assuming("p1 is independent of the other p-values"),
            )
        }
    }
}

/// The enhanced test as a weighted average of all `K` values: weights
/// `2α/(1+2α)` on the first value and `w_k/(1+2α)` on the rest, compared with
/// the threshold `2α/(1+2α)`.
pub fn enhanced_as_weighted_average(w: &WeightVector, alpha: f64) -> Result<(Vec<f64>, f64)> {
    check_alpha(alpha)?;
    if w.len() < 2 || w.as_slice()[0] != 0.0 {
        return Err(invalid("enhanced averaging needs K ≥ 2 and zero weight on the first p-value"));
    }
    let scale = 1.0 + 2.0 * alpha;
    let mut out: Vec<f64> = w.as_slice().iter().map(|x| x / scale).collect();
    out[0] = 2.0 * alpha / scale;
    Ok((out, 2.0 * alpha / scale))
}
