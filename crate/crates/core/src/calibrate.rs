//! Calibrators between the p-, p*- and e-scales, and validators for
//! user-supplied tabulated calibrators.
//!
//! Inputs on the p- and p*-scales are clamped to [0, 1]. `f64::INFINITY`
//! stands for e = ∞ and corresponds to p = 0; no calibrator returns NaN.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::construct::collapse_to_atom;
use crate::error::{domain, invalid, Error, Result};
use crate::order::QuantileFn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    P,
    PStar,
    E,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" => Ok(Scale::P),
            "pstar" | "p*" | "p-star" => Ok(Scale::PStar),
            "e" => Ok(Scale::E),
            other => Err(Error::UnknownMethod(format!("scale {other}"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::P => "p",
            Scale::PStar => "pstar",
            Scale::E => "e",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibratorKind {
    PToE,
    PStarToE,
    EToP,
    EToPStar,
    PStarToP,
    PToPStar,
}

impl CalibratorKind {
    pub fn between(from: Scale, to: Scale) -> Option<Self> {
        use Scale::*;
        match (from, to) {
            (P, E) => Some(Self::PToE),
            (PStar, E) => Some(Self::PStarToE),
            (E, P) => Some(Self::EToP),
            (E, PStar) => Some(Self::EToPStar),
            (PStar, P) => Some(Self::PStarToP),
            (P, PStar) => Some(Self::PToPStar),
            _ => None,
        }
    }

    pub fn from_scale(self) -> Scale {
        match self {
            Self::PToE | Self::PToPStar => Scale::P,
            Self::PStarToE | Self::PStarToP => Scale::PStar,
            Self::EToP | Self::EToPStar => Scale::E,
        }
    }

    pub fn to_scale(self) -> Scale {
        match self {
            Self::PToE | Self::PStarToE => Scale::E,
            Self::EToP | Self::PStarToP => Scale::P,
            Self::EToPStar | Self::PToPStar => Scale::PStar,
        }
    }

    /// Maps between p-type and e scales reverse the order.
    pub fn is_decreasing(self) -> bool {
        self.from_scale() == Scale::E || self.to_scale() == Scale::E
    }
}

fn check_p(p: f64) -> Result<f64> {
    if p.is_nan() || p < 0.0 {
        return Err(domain(format!("p-value {p} is negative or NaN")));
    }
    Ok(p.min(1.0))
}

fn check_e(e: f64) -> Result<f64> {
    if e.is_nan() || e < 0.0 {
        return Err(domain(format!("e-value {e} is negative or NaN")));
    }
    Ok(e)
}

/// `p ↦ κ p^{κ−1}`.
pub fn p_to_e_power(p: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(domain(format!("κ = {kappa} is outside (0, 1)")));
    }
    let p = check_p(p)?;
    if p == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(kappa * p.powf(kappa - 1.0))
}

/// `p ↦ p^{−1/2} − 1`.
pub fn p_to_e_shafer(p: f64) -> Result<f64> {
    let p = check_p(p)?;
    if p == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / p.sqrt() - 1.0)
}

/// `e ↦ min(1/e, 1)`.
pub fn e_to_p(e: f64) -> Result<f64> {
    Ok((1.0 / check_e(e)?).min(1.0))
}

/// `e ↦ min(1/(2e), 1)`.
pub fn e_to_pstar(e: f64) -> Result<f64> {
    Ok((1.0 / (2.0 * check_e(e)?)).min(1.0))
}

/// `u ↦ min(2u, 1)`.
pub fn pstar_to_p(p_star: f64) -> Result<f64> {
    if p_star.is_nan() || p_star < 0.0 {
        return Err(domain(format!("p*-value {p_star} is negative or NaN")));
    }
    Ok((2.0 * p_star).min(1.0))
}

/// The identity, clamped at 1.
pub fn p_to_pstar(p: f64) -> Result<f64> {
    check_p(p)
}

/// Left-continuous interpolated table of a monotone map.
///
/// Between knots with positive abscissae and positive finite values the map
/// is interpolated as a power law `c·x^b` (linear in log-log coordinates),
/// which is exact for the power calibrators and for linear maps through the
/// origin; otherwise linearly. A value of ∞ is allowed only at the first
/// knot, where the power law of the next piece is extended to it. Repeated
/// abscissae encode jumps, the first value applying at the jump.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedMap {
    x: Vec<f64>,
    y: Vec<f64>,
    /// ∫ from x₀ to each knot.
    area: Vec<f64>,
}

enum Piece {
    Flat,
    Linear,
    Power { b: f64, c: f64 },
}

impl TabulatedMap {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid("calibrator table needs at least two rows"));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
        for i in 0..x.len() {
            if !x[i].is_finite() || y[i].is_nan() || y[i] < 0.0 {
                return Err(invalid(format!("row {}: bad entry ({}, {})", i + 1, x[i], y[i])));
            }
            if y[i].is_infinite() && i != 0 {
                return Err(invalid("∞ is only allowed at the first row"));
            }
            if i > 0 && x[i] < x[i - 1] {
                return Err(Error::NonMonotone { row: i + 1 });
            }
        }
        if x[1] == x[0] && y[0].is_infinite() {
            return Err(invalid("∞ at the first row needs a following piece"));
        }
        let mut t = Self {
            area: vec![0.0; x.len()],
            x,
            y,
        };
        for i in 1..t.x.len() {
            t.area[i] = t.area[i - 1] + t.piece_integral(i, t.x[i - 1], t.x[i]);
        }
        Ok(t)
    }

    /// Tabulates `f` at the given abscissae.
    pub fn from_fn(xs: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(xs.iter().map(|&x| (x, f(x))).collect())
    }

    /// Tabulates `f` on `n + 1` equally spaced points of [0, 1].
    pub fn on_unit_grid(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        Self::from_fn(&xs, f)
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    fn domain_check(&self, lo: f64, hi: f64) -> Result<()> {
        if self.x[0] != lo || *self.x.last().unwrap() != hi {
            return Err(invalid(format!("table must span [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Shape of piece `i` (between knots `i − 1` and `i`).
    fn piece(&self, i: usize) -> Piece {
        let (x0, x1, y0, y1) = (self.x[i - 1], self.x[i], self.y[i - 1], self.y[i]);
        if x1 == x0 {
            return Piece::Flat;
        }
        if y0.is_infinite() {
            // Extend the power law of the next proper piece down to x0.
            if let Some(j) = (i + 1..self.x.len()).find(|&j| self.x[j] > self.x[j - 1]) {
                let (a0, a1, b0, b1) = (self.x[j - 1], self.x[j], self.y[j - 1], self.y[j]);
                if a0 > 0.0 && b0 > 0.0 && b1 > 0.0 && j == i + 1 {
                    let b = (b1 / b0).ln() / (a1 / a0).ln();
                    return Piece::Power { b, c: y1 / x1.powf(b) };
                }
            }
            return Piece::Power { b: -1.0, c: f64::INFINITY };
        }
        if x0 > 0.0 && y0 > 0.0 && y1 > 0.0 && y0 != y1 {
            let b = (y1 / y0).ln() / (x1 / x0).ln();
            return Piece::Power { b, c: y1 / x1.powf(b) };
        }
        Piece::Linear
    }

    fn piece_eval(&self, i: usize, x: f64) -> f64 {
        let (x0, x1, y0, y1) = (self.x[i - 1], self.x[i], self.y[i - 1], self.y[i]);
        match self.piece(i) {
            Piece::Flat => y0,
            Piece::Linear => y0 + (x - x0) / (x1 - x0) * (y1 - y0),
            Piece::Power { b, c } => {
                if x == x1 {
                    y1
                } else if x == x0 {
                    y0
                } else {
                    c * x.powf(b)
                }
            }
        }
    }

    fn piece_integral(&self, i: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self.piece(i) {
            Piece::Flat => 0.0,
            Piece::Linear => 0.5 * (self.piece_eval(i, a) + self.piece_eval(i, b)) * (b - a),
            Piece::Power { b: e, c } => {
                if !c.is_finite() {
                    return f64::INFINITY;
                }
                if (e + 1.0).abs() < 1e-12 {
                    if a == 0.0 {
                        return f64::INFINITY;
                    }
                    return c * (b / a).ln();
                }
                if a == 0.0 && e < -1.0 {
                    return f64::INFINITY;
                }
                let lo = if a == 0.0 { 0.0 } else { a.powf(e + 1.0) };
                c * (b.powf(e + 1.0) - lo) / (e + 1.0)
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let j = self.x.partition_point(|&k| k < x);
        if j == 0 {
            return self.y[0];
        }
        if j >= self.x.len() {
            return *self.y.last().unwrap();
        }
        self.piece_eval(j, x)
    }

    /// `∫_{x₀}^{v}` of the interpolated map.
    pub fn integral(&self, v: f64) -> f64 {
        let j = self.x.partition_point(|&k| k < v);
        if j == 0 {
            return 0.0;
        }
        if j >= self.x.len() {
            return *self.area.last().unwrap();
        }
        self.area[j - 1] + self.piece_integral(j, self.x[j - 1], v)
    }

    /// Index of the first knot breaking the required monotonicity.
    fn monotone_violation(&self, decreasing: bool) -> Option<usize> {
        (1..self.y.len()).find(|&i| {
            if decreasing {
                self.y[i] > self.y[i - 1]
            } else {
                self.y[i] < self.y[i - 1]
            }
        })
    }
}

/// Catalogued calibrator families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `κ p^{κ−1}`.
    Power { kappa: f64 },
    /// `p^{−1/2} − 1`.
    Shafer,
    /// `min(1/e, 1)`.
    Reciprocal,
    /// `min(1/(2e), 1)`.
    HalfReciprocal,
    /// `min(2u, 1)`.
    Double,
    Identity,
    Tabulated(TabulatedMap),
}

/// A monotone map between two evidence scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrator {
    kind: CalibratorKind,
    family: Family,
}

impl Calibrator {
    pub fn new(kind: CalibratorKind, family: Family) -> Result<Self> {
        use CalibratorKind::*;
        let ok = match &family {
            Family::Power { kappa } => {
                if !(*kappa > 0.0 && *kappa < 1.0) {
                    return Err(domain(format!("κ = {kappa} is outside (0, 1)")));
                }
                matches!(kind, PToE | PStarToE)
            }
            Family::Shafer => matches!(kind, PToE | PStarToE),
            Family::Reciprocal => matches!(kind, EToP | EToPStar),
            Family::HalfReciprocal => kind == EToPStar,
            Family::Double => kind == PStarToP,
            Family::Identity => kind == PToPStar,
            Family::Tabulated(t) => {
                if let Some(row) = t.monotone_violation(kind.is_decreasing()) {
                    return Err(Error::NonMonotone { row: row + 1 });
                }
                true
            }
        };
        if !ok {
            return Err(invalid(format!("{family:?} is not a {kind:?} calibrator")));
        }
        Ok(Self { kind, family })
    }

    /// The calibrator recommended for each direction: the dominating one
    /// where it exists, Shafer's for the p-to-e directions.
    pub fn recommended(kind: CalibratorKind) -> Self {
        use CalibratorKind::*;
        let family = match kind {
            PToE | PStarToE => Family::Shafer,
            EToP => Family::Reciprocal,
            EToPStar => Family::HalfReciprocal,
            PStarToP => Family::Double,
            PToPStar => Family::Identity,
        };
        Self { kind, family }
    }

    /// All catalogued calibrators, with κ = 1/2 for the power family.
    pub fn catalog() -> Vec<Self> {
        use CalibratorKind::*;
        let mut out: Vec<Self> = [PToE, PStarToE, EToP, EToPStar, PStarToP, PToPStar]
            .into_iter()
            .map(Self::recommended)
            .collect();
        for kind in [PToE, PStarToE] {
            out.push(Self {
                kind,
                family: Family::Power { kappa: 0.5 },
            });
        }
        out.push(Self {
            kind: EToPStar,
            family: Family::Reciprocal,
        });
        out
    }

    pub fn kind(&self) -> CalibratorKind {
        self.kind
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn name(&self) -> String {
        match &self.family {
            Family::Power { kappa } => format!("power(kappa={kappa})"),
            Family::Shafer => "shafer".into(),
            Family::Reciprocal => "reciprocal".into(),
            Family::HalfReciprocal => "half-reciprocal".into(),
            Family::Double => "double".into(),
            Family::Identity => "identity".into(),
            Family::Tabulated(_) => "tabulated".into(),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match &self.family {
            Family::Power { kappa } => p_to_e_power(x, *kappa),
            Family::Shafer => p_to_e_shafer(x),
            Family::Reciprocal => e_to_p(x),
            Family::HalfReciprocal => e_to_pstar(x),
            Family::Double => pstar_to_p(x),
            Family::Identity => p_to_pstar(x),
            Family::Tabulated(t) => {
                let x = match self.kind.from_scale() {
                    Scale::E => check_e(x)?,
                    _ => check_p(x)?,
                };
                Ok(t.eval(x))
            }
        }
    }
}

/// Whether a p-to-e map is also a p*-to-e calibrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorReport {
    pub kind: CalibratorKind,
    pub valid: bool,
    pub admissible: bool,
    /// `∫₀¹` of the tabulated map.
    #[serde(with = "crate::serde_ext::float")]
    pub integral: f64,
    /// Minimum slack of the defining inequality on the check grid.
    #[serde(with = "crate::serde_ext::float")]
    pub margin: f64,
    pub worst_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pstar_to_e: Option<Verdict>,
}

const CHECK_GRID: usize = 4096;

fn check_points(t: &TabulatedMap) -> Vec<f64> {
    let mut pts: Vec<f64> = (1..=CHECK_GRID).map(|j| j as f64 / CHECK_GRID as f64).collect();
    pts.extend(t.x.iter().copied().filter(|&x| x > 0.0 && x <= 1.0));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Validates an increasing table as a p-to-p* calibrator: `f(0) = 0` and
/// `∫₀ᵛ f ≥ v²/2` on the grid; admissible when in addition `∫₀¹ f = 1/2`.
pub fn validate_p_to_pstar(table: &TabulatedMap, tol: f64) -> Result<CalibratorReport> {
    table.domain_check(0.0, 1.0)?;
    if let Some(row) = table.monotone_violation(false) {
        return Err(Error::NonMonotone { row: row + 1 });
    }
    let mut worst = (1.0, f64::INFINITY);
    for v in check_points(table) {
        let m = table.integral(v) - 0.5 * v * v;
        if m < worst.1 {
            worst = (v, m);
        }
    }
    let integral = table.integral(1.0);
    let valid = table.y[0].abs() <= tol && worst.1 >= -tol;
    Ok(CalibratorReport {
        kind: CalibratorKind::PToPStar,
        valid,
        admissible: valid && (integral - 0.5).abs() <= tol,
        integral,
        margin: worst.1,
        worst_v: worst.0,
        convex: None,
        pstar_to_e: None,
    })
}

/// Validates an increasing table as a p*-to-p calibrator: `g(u) ≥ min(2u, 1)`
/// on the grid. Where this fails at some `u ≤ 1/2`, the step p*-variable
/// equal to `u` on `{U ≤ 2u}` breaks validity.
pub fn validate_pstar_to_p(table: &TabulatedMap, tol: f64) -> Result<CalibratorReport> {
    table.domain_check(0.0, 1.0)?;
    if let Some(row) = table.monotone_violation(false) {
        return Err(Error::NonMonotone { row: row + 1 });
    }
    let mut worst = (1.0, f64::INFINITY);
    let mut max_gap: f64 = 0.0;
    for u in check_points(table) {
        let gap = table.eval(u) - (2.0 * u).min(1.0);
        max_gap = max_gap.max(gap.abs());
        if gap < worst.1 {
            worst = (u, gap);
        }
    }
    let valid = worst.1 >= -tol;
    Ok(CalibratorReport {
        kind: CalibratorKind::PStarToP,
        valid,
        admissible: valid && max_gap <= tol,
        integral: table.integral(1.0),
        margin: worst.1,
        worst_v: worst.0,
        convex: None,
        pstar_to_e: None,
    })
}

/// Convexity on the grid: slopes nondecreasing within `tol`, no downward
/// jump inside (0, 1). An infinite value at 0 is compatible with convexity.
fn is_convex_table(t: &TabulatedMap, tol: f64) -> bool {
    let mut prev_slope: Option<f64> = None;
    for i in 1..t.x.len() {
        let (x0, x1, y0, y1) = (t.x[i - 1], t.x[i], t.y[i - 1], t.y[i]);
        if y0.is_infinite() {
            continue;
        }
        if x1 == x0 {
            if y1 != y0 && x0 > 0.0 && x0 < 1.0 {
                return false;
            }
            continue;
        }
        let slope = (y1 - y0) / (x1 - x0);
        if let Some(p) = prev_slope {
            if slope - p < -tol {
                return false;
            }
        }
        prev_slope = Some(slope);
    }
    true
}

/// Validates a decreasing table as a p-to-e calibrator (`∫₀¹ f ≤ 1`,
/// admissible when the integral is 1 and `f(0) = ∞`), and decides whether
/// it is also a p*-to-e calibrator.
///
/// Convex valid maps are p*-to-e calibrators. Non-convex maps with integral 1
/// are not; for non-convex maps with smaller integral the verdict is
/// `Unknown` unless the two-interval construction of
/// [`convexity_counterexample`] pushes `E[f(P)]` above 1.
pub fn validate_p_to_e(table: &TabulatedMap, tol: f64) -> Result<CalibratorReport> {
    table.domain_check(0.0, 1.0)?;
    if let Some(row) = table.monotone_violation(true) {
        return Err(Error::NonMonotone { row: row + 1 });
    }
    let integral = table.integral(1.0);
    let valid = integral <= 1.0 + tol;
    let full = (integral - 1.0).abs() <= tol;
    let convex = is_convex_table(table, tol);
    let verdict = if !valid {
        Verdict::No
    } else if convex {
        Verdict::Yes
    } else if full {
        Verdict::No
    } else {
        match convexity_counterexample(table) {
            Some(c) if c.expectation > 1.0 + tol => Verdict::No,
            _ => Verdict::Unknown,
        }
    };
    Ok(CalibratorReport {
        kind: CalibratorKind::PToE,
        valid,
        admissible: valid && full && table.y[0].is_infinite(),
        integral,
        margin: 1.0 - integral,
        worst_v: 1.0,
        convex: Some(convex),
        pstar_to_e: Some(verdict),
    })
}

/// A p*-variable on which a non-convex decreasing map has a large mean.
#[derive(Debug, Clone)]
pub struct ConvexityCounterexample {
    pub t: f64,
    pub s: f64,
    pub eps: f64,
    /// `P = U` off `[t−ε, t] ∪ [s−ε, s]` and `(t+s)/2` on it.
    pub witness: QuantileFn,
    /// `E[f(P)]`.
    pub expectation: f64,
}

/// Searches for `t < s` with `f(t) + f(s) < 2 f((t+s)/2)` and shrinks `ε`
/// until collapsing `[t−ε, t] ∪ [s−ε, s]` onto the midpoint raises the mean
/// of `f(P)` above `∫₀¹ f`.
pub fn convexity_counterexample(table: &TabulatedMap) -> Option<ConvexityCounterexample> {
    let mut pts: Vec<f64> = (1..=256).map(|j| j as f64 / 256.0).collect();
    if table.x.len() <= 512 {
        pts.extend(table.x.iter().copied().filter(|&x| x > 0.0 && x <= 1.0));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut best: Option<(f64, f64, f64)> = None;
    for (i, &t) in pts.iter().enumerate() {
        let ft = table.eval(t);
        for &s in &pts[i + 1..] {
            let gap = 2.0 * table.eval(0.5 * (t + s)) - ft - table.eval(s);
            if gap > 1e-12 && best.is_none_or(|b| gap > b.2) {
                best = Some((t, s, gap));
            }
        }
    }
    let (t, s, _) = best?;
    let m = 0.5 * (t + s);
    let fm = table.eval(m);
    let total = table.integral(1.0);
    let mut eps = (0.25 * (s - t)).min(t);
    for _ in 0..60 {
        let lost = (table.integral(t) - table.integral(t - eps)) + (table.integral(s) - table.integral(s - eps));
        let gain = 2.0 * eps * fm - lost;
        if gain > 0.0 {
            let witness = collapse_to_atom(t - eps, t, s - eps, s, m).ok()?;
            return Some(ConvexityCounterexample {
                t,
                s,
                eps,
                witness: QuantileFn::Linear(witness),
                expectation: total + gain,
            });
        }
        eps *= 0.5;
    }
    None
}
