//! Merging functions for p*-values, and the p-merging rules used as
//! comparators: Bonferroni, Simes and the harmonic mean.
//!
//! Every merger is coordinatewise increasing and clamps its output to [0, 1].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibrate::Scale;
use crate::construct::WeightVector;
use crate::error::{domain, Error, Result};
use crate::numeric::{bisect, stable_sum};

fn check_inputs(ps: &[f64]) -> Result<()> {
    if ps.is_empty() {
        return Err(domain("nothing to merge"));
    }
    if let Some(p) = ps.iter().find(|p| p.is_nan() || **p < 0.0) {
        return Err(domain(format!("input {p} is negative or NaN")));
    }
    Ok(())
}

/// (Weighted) arithmetic mean, an admissible p*-merging function.
pub fn merge_arithmetic(ps_star: &[f64], w: Option<&WeightVector>) -> Result<f64> {
    check_inputs(ps_star)?;
    let mean = match w {
        Some(w) => {
            if w.len() != ps_star.len() {
                return Err(Error::LengthMismatch {
                    expected: w.len(),
                    got: ps_star.len(),
                });
            }
            stable_sum(ps_star.iter().zip(w.as_slice()).map(|(p, w)| p * w))
        }
        None => stable_sum(ps_star.iter().copied()) / ps_star.len() as f64,
    };
    Ok(mean.min(1.0))
}

fn min_of(ps: &[f64]) -> f64 {
    ps.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `min(K · min pₖ, 1)` applied to p*-values.
pub fn merge_bonferroni_pstar(ps_star: &[f64]) -> Result<f64> {
    check_inputs(ps_star)?;
    Ok((ps_star.len() as f64 * min_of(ps_star)).min(1.0))
}

/// `min(K · min pₖ, 1)` applied to p-values.
pub fn merge_bonferroni_p(ps: &[f64]) -> Result<f64> {
    check_inputs(ps)?;
    Ok((ps.len() as f64 * min_of(ps)).min(1.0))
}

/// `min_k K p₍ₖ₎ / k`, clamped at 1.
pub fn merge_simes(ps: &[f64]) -> Result<f64> {
    check_inputs(ps)?;
    let mut sorted = ps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let m = sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| k * p / (i + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(m.min(1.0))
}

/// `min(c · (Σ 1/pₖ)⁻¹, 1)`; 0 if any input is 0.
pub fn merge_harmonic(ps: &[f64], c_k: f64) -> Result<f64> {
    check_inputs(ps)?;
    if !(c_k > 1.0) || !c_k.is_finite() {
        return Err(domain(format!("harmonic constant {c_k} must exceed 1")));
    }
    if ps.contains(&0.0) {
        return Ok(0.0);
    }
    let s = stable_sum(ps.iter().map(|p| 1.0 / p));
    Ok((c_k / s).min(1.0))
}

/// Constants `c_K` making the harmonic merger valid under arbitrary
/// dependence: the smallest `c` such that `P(Σ 1/Pₖ ≥ c/α) ≤ α` for all
/// couplings of uniform `Pₖ`.
///
/// `c_2 = 4`; for larger `K`, `c_K = (y+K)²/(y+1)` where `y > 0` solves
/// `y² = K((y+1) ln(y+1) − y)`. Each entry agrees with the dual bound
/// `inf_{0<r<1/K} K ln((1−(K−1)r)/r)/(1−Kr)` to all printed digits.
pub const HARMONIC_TABLE: &[(usize, f64)] = &[
    (2, 4.0),
    (3, 8.236_930_730_198_173),
    (4, 12.874_964_353_347_825),
    (5, 17.822_509_042_469_435),
    (6, 23.018_234_972_721_017),
    (7, 28.420_237_332_515_184),
    (8, 33.998_392_069_183_158),
    (9, 39.730_092_980_948_976),
    (10, 45.597_785_602_729),
    (20, 109.575_563_464_507_72),
    (50, 331.250_046_238_767_24),
    (100, 745.867_545_414_710_1),
    (200, 1_654.514_875_974_446_8),
    (500, 4_663.161_256_480_846),
    (1000, 10_110.735_846_311_92),
];

/// `c_K` from the root of `y² = K((y+1) ln(y+1) − y)`.
pub fn harmonic_constant_closed_form(k: usize) -> Result<f64> {
    if k < 2 {
        return Err(domain("the harmonic constant needs K ≥ 2"));
    }
    if k == 2 {
        return Ok(4.0);
    }
    let kf = k as f64;
    let f = |y: f64| y * y - kf * ((y + 1.0) * (y + 1.0).ln() - y);
    // f < 0 just above 0 (f ≈ y²(1 − K/2)) and f > 0 for large y
    let mut hi = kf;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    let y = bisect(f, 1e-9, hi).ok_or_else(|| domain("no root for the harmonic constant"))?;
    Ok((y + kf) * (y + kf) / (y + 1.0))
}

/// `c_K` from the shipped table, falling back to the closed form.
pub fn harmonic_constant(k: usize) -> Result<f64> {
    match HARMONIC_TABLE.iter().find(|(kk, _)| *kk == k) {
        Some((_, c)) => Ok(*c),
        None => harmonic_constant_closed_form(k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeMethod {
    Arithmetic,
    BonferroniPStar,
    Simes,
    Harmonic,
    BonferroniP,
}

impl MergeMethod {
    pub const ALL: [MergeMethod; 5] = [
        MergeMethod::Arithmetic,
        MergeMethod::BonferroniPStar,
        MergeMethod::Simes,
        MergeMethod::Harmonic,
        MergeMethod::BonferroniP,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::Arithmetic => "arithmetic",
            Self::BonferroniPStar => "bonferroni-pstar",
            Self::Simes => "simes",
            Self::Harmonic => "harmonic",
            Self::BonferroniP => "bonferroni-p",
        }
    }

    /// Scale of the inputs; the output is on the same scale.
    pub fn scale(self) -> Scale {
        match self {
            Self::Arithmetic | Self::BonferroniPStar => Scale::PStar,
            _ => Scale::P,
        }
    }

    /// Merges with default settings (equal weights, tabulated `c_K`).
    pub fn apply(self, ps: &[f64]) -> Result<f64> {
        match self {
            Self::Arithmetic => merge_arithmetic(ps, None),
            Self::BonferroniPStar => merge_bonferroni_pstar(ps),
            Self::Simes => merge_simes(ps),
            Self::Harmonic => {
                if ps.len() == 1 {
                    check_inputs(ps)?;
                    return Ok(ps[0].min(1.0));
                }
                merge_harmonic(ps, harmonic_constant(ps.len())?)
            }
            Self::BonferroniP => merge_bonferroni_p(ps),
        }
    }
}

impl fmt::Display for MergeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MergeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::UnknownMethod(s.into()))
    }
}
