//! Random thresholds for randomized p*-tests.
//!
//! A randomized p*-test rejects when `P ≤ V` for an independent threshold
//! `V`. Its size is `P(P ≤ V) = 1 − E[F_V(P)]`, which is at most `E[V]` for
//! every p*-variable `P` exactly when `F_V` is concave on [0, 1], i.e. `V` has
//! a decreasing density. Thresholds that are first-order smaller than such a
//! `V` inherit the bound.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::numeric::{bisect, integrate, stable_sum};
use crate::order::{quantile_integral, QuantileFn};

/// Piecewise-linear probability density through knots `(x, density)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    x: Vec<f64>,
    d: Vec<f64>,
    /// Distribution function at each knot.
    cum: Vec<f64>,
}

impl DensityTable {
    /// Normalizes the given density to total mass one.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid("density table needs at least two rows"));
        }
        let (x, mut d): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
        for i in 0..x.len() {
            if !x[i].is_finite() || !d[i].is_finite() || d[i] < 0.0 {
                return Err(invalid(format!("row {}: bad density entry", i + 1)));
            }
            if i > 0 && x[i] < x[i - 1] {
                return Err(Error::NonMonotone { row: i + 1 });
            }
        }
        if x[0] < 0.0 {
            return Err(invalid("threshold support must lie in [0, ∞)"));
        }
        let masses: Vec<f64> = (1..x.len()).map(|i| 0.5 * (d[i - 1] + d[i]) * (x[i] - x[i - 1])).collect();
        let total = stable_sum(masses.iter().copied());
        if !(total > 0.0) {
            return Err(invalid("density has zero mass"));
        }
        for v in &mut d {
            *v /= total;
        }
        let mut cum = vec![0.0; x.len()];
        for i in 1..x.len() {
            cum[i] = (cum[i - 1] + masses[i - 1] / total).min(1.0);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self { x, d, cum })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.d.iter().copied())
    }

    fn support(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// `∫ g(x) f(x) dx` for a polynomial `g` of degree ≤ 2, exact via
    /// Simpson's rule on every linear piece.
    fn moment(&self, g: impl Fn(f64) -> f64) -> f64 {
        stable_sum((1..self.x.len()).map(|i| {
            let (x0, x1) = (self.x[i - 1], self.x[i]);
            let h = x1 - x0;
            if h <= 0.0 {
                return 0.0;
            }
            let m = 0.5 * (x0 + x1);
            let dm = 0.5 * (self.d[i - 1] + self.d[i]);
            h / 6.0 * (g(x0) * self.d[i - 1] + 4.0 * g(m) * dm + g(x1) * self.d[i])
        }))
    }

    pub fn mean(&self) -> f64 {
        self.moment(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(|x| (x - m) * (x - m))
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let j = self.x.partition_point(|&k| k <= x);
        if j == 0 {
            return self.d[0];
        }
        if j >= self.x.len() {
            return *self.d.last().unwrap();
        }
        let (x0, x1) = (self.x[j - 1], self.x[j]);
        self.d[j - 1] + (x - x0) / (x1 - x0) * (self.d[j] - self.d[j - 1])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let j = self.x.partition_point(|&k| k <= x);
        let (x0, x1) = (self.x[j - 1], self.x[j]);
        let (d0, d1) = (self.d[j - 1], self.d[j]);
        let t = x - x0;
        (self.cum[j - 1] + d0 * t + (d1 - d0) * t * t / (2.0 * (x1 - x0))).min(1.0)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let j = self.cum.partition_point(|&c| c < u).clamp(1, self.x.len() - 1);
        let (x0, x1) = (self.x[j - 1], self.x[j]);
        let h = x1 - x0;
        if h <= 0.0 {
            return x0;
        }
        let (d0, d1) = (self.d[j - 1], self.d[j]);
        let a = (d1 - d0) / (2.0 * h);
        let r = (u - self.cum[j - 1]).max(0.0);
        let disc = (d0 * d0 + 4.0 * a * r).max(0.0);
        let denom = d0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        (x0 + t).min(x1)
    }

    /// Same shape stretched so that the mean equals `target`.
    pub fn rescaled_to_mean(&self, target: f64) -> Result<Self> {
        let s = target / self.mean();
        if !(s.is_finite() && s > 0.0) {
            return Err(domain("cannot rescale density to the requested mean"));
        }
        Self::new(self.x.iter().map(|x| x * s).zip(self.d.iter().copied()).collect())
    }

    fn is_nonincreasing(&self, tol: f64) -> bool {
        // beyond the last knot the density drops to 0, which is fine; a
        // positive density starting above 0 is a jump up from 0 there
        let starts_at_zero_or_flat = self.x[0] == 0.0 || self.d[0] <= tol;
        starts_at_zero_or_flat && self.d.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

#[derive(Debug, Clone)]
pub enum ThresholdFamily {
    /// `U[0, 2α]`.
    Uniform,
    /// Piecewise-linear density.
    Tabulated(DensityTable),
    /// Degenerate threshold at a point.
    PointMass { at: f64 },
    /// `V = α·E` for an e-variable `E` given by its quantile function.
    ScaledE { e_quantile: QuantileFn },
}

/// An α-random threshold candidate.
#[derive(Debug, Clone)]
pub struct RandomThreshold {
    alpha: f64,
    family: ThresholdFamily,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(domain(format!("α = {alpha} is outside (0, 1/2]")));
    }
    Ok(())
}

/// `U[0, 2α]`, the (D)-threshold of smallest variance.
pub fn make_uniform_threshold(alpha: f64) -> Result<RandomThreshold> {
    RandomThreshold::new(alpha, ThresholdFamily::Uniform)
}

impl RandomThreshold {
    pub fn new(alpha: f64, family: ThresholdFamily) -> Result<Self> {
        check_alpha(alpha)?;
        if let ThresholdFamily::PointMass { at } = family {
            if !(at > 0.0 && at < 1.0) {
                return Err(domain(format!("point mass at {at} is outside (0, 1)")));
            }
        }
        Ok(Self { alpha, family })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn family(&self) -> &ThresholdFamily {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            ThresholdFamily::Uniform => "uniform",
            ThresholdFamily::Tabulated(_) => "tabulated",
            ThresholdFamily::PointMass { .. } => "point-mass",
            ThresholdFamily::ScaledE { .. } => "scaled-e",
        }
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(match &self.family {
            ThresholdFamily::Uniform => self.alpha,
            ThresholdFamily::Tabulated(t) => t.mean(),
            ThresholdFamily::PointMass { at } => *at,
            ThresholdFamily::ScaledE { e_quantile } => self.alpha * quantile_integral(e_quantile, 1.0)?,
        })
    }

    /// Variance where it has a closed form.
    pub fn variance(&self) -> Option<f64> {
        match &self.family {
            ThresholdFamily::Uniform => Some(self.alpha * self.alpha / 3.0),
            ThresholdFamily::Tabulated(t) => Some(t.variance()),
            ThresholdFamily::PointMass { .. } => Some(0.0),
            ThresholdFamily::ScaledE { .. } => None,
        }
    }

    /// `P(V ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.family {
            ThresholdFamily::Uniform => (x / (2.0 * self.alpha)).clamp(0.0, 1.0),
            ThresholdFamily::Tabulated(t) => t.cdf(x),
            ThresholdFamily::PointMass { at } => f64::from(x >= *at),
            ThresholdFamily::ScaledE { e_quantile } => quantile_cdf(e_quantile, x / self.alpha, false),
        }
    }

    /// `P(V < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match &self.family {
            ThresholdFamily::PointMass { at } => f64::from(x > *at),
            ThresholdFamily::ScaledE { e_quantile } => quantile_cdf(e_quantile, x / self.alpha, true),
            _ => self.cdf(x),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match &self.family {
            ThresholdFamily::Uniform => 2.0 * self.alpha * u,
            ThresholdFamily::Tabulated(t) => t.quantile(u),
            ThresholdFamily::PointMass { at } => *at,
            ThresholdFamily::ScaledE { e_quantile } => self.alpha * e_quantile.eval(u),
        }
    }

    /// One draw by inverse transform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile(u)
    }

    /// Points where the distribution function is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.family {
            ThresholdFamily::Uniform => vec![0.0, 2.0 * self.alpha],
            ThresholdFamily::Tabulated(t) => t.x.clone(),
            ThresholdFamily::PointMass { at } => vec![*at],
            ThresholdFamily::ScaledE { .. } => Vec::new(),
        }
    }

    /// Upper end of the support, if finite.
    pub fn support_max(&self) -> f64 {
        match &self.family {
            ThresholdFamily::Uniform => 2.0 * self.alpha,
            ThresholdFamily::Tabulated(t) => t.support().1,
            ThresholdFamily::PointMass { at } => *at,
            ThresholdFamily::ScaledE { e_quantile } => self.alpha * e_quantile.eval(1.0),
        }
    }
}

/// `P(X ≤ x)` (or `P(X < x)`) from a quantile function, by bisection on `u`.
fn quantile_cdf(q: &QuantileFn, x: f64, strict: bool) -> f64 {
    let below = |u: f64| if strict { q.eval(u) < x } else { q.eval(u) <= x };
    if !below(1e-300_f64.max(f64::MIN_POSITIVE)) {
        return 0.0;
    }
    if below(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// How a threshold was shown to control the size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationRoute {
    /// Mean α and nonincreasing density.
    DensityCondition,
    /// A point mass `c ≤ α/2`: `P(P ≤ c) ≤ P(2P ≤ 2c) ≤ 2c ≤ α` because
    /// twice a p*-variable is a p-variable.
    CalibratorBound,
    /// `α·E` with `E[E] ≤ 1` and a convex quantile (decreasing density), a
    /// threshold with decreasing density and mean at most α.
    DecreasingDensityE,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub valid: bool,
    pub route: ValidationRoute,
    pub family: String,
    pub alpha: f64,
    #[serde(with = "crate::serde_ext::float")]
    pub mean: f64,
    #[serde(default, with = "crate::serde_ext::opt_float")]
    pub variance: Option<f64>,
    pub violations: Vec<String>,
}

fn quantile_is_convex(q: &QuantileFn, tol: f64) -> bool {
    match q {
        // atoms are flat pieces followed by jumps
        QuantileFn::Step(_) => false,
        QuantileFn::Linear(l) => {
            let knots: Vec<(f64, f64)> = l.knots().collect();
            let mut prev: Option<f64> = None;
            for w in knots.windows(2) {
                let (u0, y0) = w[0];
                let (u1, y1) = w[1];
                if u1 <= u0 {
                    if y1 != y0 && u0 < 1.0 {
                        return false;
                    }
                    continue;
                }
                let s = (y1 - y0) / (u1 - u0);
                if prev.is_some_and(|p| s < p - tol) {
                    return false;
                }
                prev = Some(s);
            }
            true
        }
        QuantileFn::Closed(_) => {
            let n = 4096;
            let vals: Vec<f64> = (1..n).map(|i| q.eval(i as f64 / n as f64)).collect();
            vals.windows(3).all(|w| {
                let d2 = w[2] - 2.0 * w[1] + w[0];
                d2 >= -tol * (1.0 + w[1].abs())
            })
        }
    }
}

/// Checks that `P(P ≤ V) ≤ α` for every p*-variable `P` independent of `V`.
pub fn validate_threshold(v: &RandomThreshold, tol: f64) -> ThresholdReport {
    let alpha = v.alpha;
    let mut violations = Vec::new();
    let mean = v.mean().unwrap_or(f64::INFINITY);
    let route = match &v.family {
        ThresholdFamily::Uniform => ValidationRoute::DensityCondition,
        ThresholdFamily::Tabulated(t) => {
            if (mean - alpha).abs() > tol {
                violations.push(format!("mean {mean} differs from α = {alpha}"));
            }
            if !t.is_nonincreasing(tol) {
                violations.push("density is not nonincreasing".into());
            }
            if t.support().0 < 0.0 || t.support().1 > 1.0 {
                violations.push("support leaves [0, 1]".into());
            }
            ValidationRoute::DensityCondition
        }
        ThresholdFamily::PointMass { at } => {
            if *at > 0.5 * alpha + tol {
                violations.push(format!("point mass {at} exceeds α/2 = {}", 0.5 * alpha));
            }
            ValidationRoute::CalibratorBound
        }
        ThresholdFamily::ScaledE { e_quantile } => {
            if mean > alpha + tol {
                violations.push(format!("α·E[E] = {mean} exceeds α = {alpha}"));
            }
            if !quantile_is_convex(e_quantile, tol) {
                violations.push("E has no decreasing density (quantile not convex)".into());
            }
            ValidationRoute::DecreasingDensityE
        }
    };
    ThresholdReport {
        valid: violations.is_empty(),
        route,
        family: v.family_name().into(),
        alpha,
        mean,
        variance: v.variance(),
        violations,
    }
}

/// A threshold that passed [`validate_threshold`], or was explicitly forced.
#[derive(Debug, Clone)]
pub struct ValidatedThreshold {
    inner: RandomThreshold,
    forced: bool,
}

impl ValidatedThreshold {
    pub fn new(v: RandomThreshold, tol: f64) -> Result<Self> {
        let report = validate_threshold(&v, tol);
        if !report.valid {
            return Err(Error::UnvalidatedThreshold(report.violations.join("; ")));
        }
        Ok(Self { inner: v, forced: false })
    }

    /// Skips validation; decisions made with it are marked as forced.
    pub fn force(v: RandomThreshold) -> Self {
        Self { inner: v, forced: true }
    }

    pub fn uniform(alpha: f64) -> Result<Self> {
        Ok(Self {
            inner: make_uniform_threshold(alpha)?,
            forced: false,
        })
    }

    pub fn threshold(&self) -> &RandomThreshold {
        &self.inner
    }

    pub fn is_forced(&self) -> bool {
        self.forced
    }
}

impl std::ops::Deref for ValidatedThreshold {
    type Target = RandomThreshold;

    fn deref(&self) -> &RandomThreshold {
        &self.inner
    }
}

/// Exact `P(P ≤ V) = ∫₀¹ P(V ≥ G(u)) du` for `P` with quantile `G`
/// independent of `V`.
pub fn rejection_probability(q: &QuantileFn, v: &RandomThreshold) -> f64 {
    let surv = |x: f64| 1.0 - v.cdf_left(x);
    match q {
        QuantileFn::Step(s) => stable_sum(s.atoms().iter().zip(s.probs()).map(|(&a, &p)| p * surv(a))),
        _ => {
            // split at the knots of the quantile and where it crosses the
            // threshold's breakpoints
            let mut cuts = vec![0.0, 1.0];
            cuts.extend(q.breakpoints());
            for b in v.breakpoints() {
                if let Some(u) = bisect(|u| q.eval(u) - b, 0.0, 1.0) {
                    cuts.push(u);
                }
            }
            cuts.retain(|c| (0.0..=1.0).contains(c));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            stable_sum(cuts.windows(2).map(|w| integrate(|u| surv(q.eval(u)), w[0], w[1], 1e-14, 1e-12)))
        }
    }
}

/// A p*-variable from the two-interval construction that a threshold with a
/// non-concave distribution function rejects too often.
#[derive(Debug, Clone)]
pub struct NonconcavityWitness {
    pub x: f64,
    pub y: f64,
    pub eps: f64,
    pub witness: QuantileFn,
    /// `P(P ≤ V)` for the witness.
    pub rejection: f64,
    /// `P(P ≤ V) − E[V]`.
    pub excess: f64,
}

/// Grid search over `(x, y, ε)` for the witness maximising `P(P ≤ V) − E[V]`.
///
/// With `P = U` off `A ∪ B` and `m = (x+y+ε)/2` on it, the excess equals
/// `∫_A F_V + ∫_B F_V − 2ε F_V(m)`; it is positive somewhere exactly when
/// `F_V` fails to be concave.
pub fn nonconcavity_witness(v: &RandomThreshold) -> Option<NonconcavityWitness> {
    let top = v.support_max().min(1.0);
    if !(top > 0.0) {
        return None;
    }
    let n = 48;
    let grid: Vec<f64> = (1..n).map(|i| top * i as f64 / n as f64).collect();
    let int_f = |a: f64, b: f64| integrate(|x| v.cdf(x), a, b, 1e-15, 1e-12);
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for (i, &x) in grid.iter().enumerate() {
        for &y in &grid[i + 1..] {
            for k in 1..8 {
                let eps = (y - x) * k as f64 / 8.0;
                if y + eps >= 1.0 {
                    continue;
                }
                let m = 0.5 * (x + y + eps);
                let excess = int_f(x, x + eps) + int_f(y, y + eps) - 2.0 * eps * v.cdf(m);
                if best.is_none_or(|b| excess > b.3) {
                    best = Some((x, y, eps, excess));
                }
            }
        }
    }
    let (x, y, eps, excess) = best?;
    if excess <= 1e-12 {
        return None;
    }
    let witness = crate::construct::adversarial_nonconcave_witness(x, y, eps).ok()?;
    let rejection = rejection_probability(&witness, v);
    let mean = v.mean().ok()?;
    Some(NonconcavityWitness {
        x,
        y,
        eps,
        excess: rejection - mean,
        rejection,
        witness,
    })
}
