//! Distributions as left-quantile functions, and the stochastic-order checks
//! that define p-, p*- and e-variables.
//!
//! A random variable `P` is a p*-variable when it dominates the standard
//! uniform law in second order. With `G` the left-quantile function of `P`
//! this is equivalent to
//!
//! ```text
//!     ∫₀ᵛ G(u) du ≥ v²/2    for all v in (0, 1)
//! ```
//!
//! and `P` is a p-variable when `G(u) ≥ u` pointwise. Both checks are run on
//! a uniform grid merged with every breakpoint of the representation. For step
//! quantiles the integral is linear between breakpoints, so the gap to the
//! parabola is concave there and the breakpoints alone are exact. For
//! piecewise-linear quantiles the interior stationary points are added too.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::numeric::{integrate, stable_sum};

/// Default number of uniform grid points used by the order checks.
pub const DEFAULT_GRID: usize = 4096;
/// Default tolerance for closed-form and exact representations.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Probabilities of a step representation must sum to one within this.
pub const PROB_SUM_TOL: f64 = 1e-12;

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(probs.len());
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &p in probs {
        let t = sum + p;
        if sum.abs() >= p.abs() {
            comp += (sum - t) + p;
        } else {
            comp += (p - t) + sum;
        }
        sum = t;
        out.push((sum + comp).min(1.0));
    }
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Quantile function of a discrete distribution: sorted distinct atoms with
/// positive probabilities.
///
/// The value at `u` is the smallest atom whose cumulative probability is at
/// least `u` (left-continuous convention).
#[derive(Debug, Clone, PartialEq)]
pub struct StepQuantile {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl StepQuantile {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.len() != probs.len() {
            return Err(Error::LengthMismatch {
                expected: atoms.len(),
                got: probs.len(),
            });
        }
        if atoms.is_empty() {
            return Err(invalid("step distribution needs at least one atom"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(invalid(format!("probability {p} is not a finite nonnegative number")));
        }
        if let Some(a) = atoms.iter().find(|a| a.is_nan() || **a == f64::NEG_INFINITY) {
            return Err(invalid(format!("atom {a} is not allowed")));
        }
        let total = stable_sum(probs.iter().copied());
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self::from_pairs(atoms.into_iter().zip(probs).collect()))
    }

    /// Sorts, drops zero-mass atoms and merges duplicates. Assumes the masses
    /// already sum to one up to rounding.
    fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.retain(|&(_, p)| p > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, p) in pairs {
            match atoms.last() {
                Some(&last) if last == a => *probs.last_mut().unwrap() += p,
                _ => {
                    atoms.push(a);
                    probs.push(p);
                }
            }
        }
        let cum = cumulative(&probs);
        Self { atoms, probs, cum }
    }

    /// Builds the quantile from sorted distinct atoms and exact cumulative
    /// probabilities (last entry 1).
    fn from_cumulative(atoms: Vec<f64>, cum: Vec<f64>) -> Self {
        let probs = cum
            .iter()
            .scan(0.0, |prev, &c| {
                let p = c - *prev;
                *prev = c;
                Some(p)
            })
            .collect();
        Self { atoms, probs, cum }
    }

    /// Mixture `Σ wₖ · Fₖ` of step distributions.
    pub fn mixture(components: &[(f64, &StepQuantile)]) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("mixture needs at least one component"));
        }
        if components.iter().any(|(w, _)| !w.is_finite() || *w < 0.0) {
            return Err(invalid("mixture weights must be nonnegative"));
        }
        let total = stable_sum(components.iter().map(|(w, _)| *w));
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let pairs = components
            .iter()
            .flat_map(|(w, q)| q.atoms.iter().zip(&q.probs).map(move |(&a, &p)| (a, w * p)))
            .collect();
        Ok(Self::from_pairs(pairs))
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Cumulative probabilities at each atom; the last entry is exactly 1.
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn eval(&self, u: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c < u);
        self.atoms[i.min(self.atoms.len() - 1)]
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let i = self.atoms.partition_point(|&a| a <= x);
        if i == 0 {
            0.0
        } else {
            self.cum[i - 1]
        }
    }

    pub fn integral(&self, v: f64) -> Result<f64> {
        let mut terms = Vec::new();
        let mut lower = 0.0;
        for (&a, &c) in self.atoms.iter().zip(&self.cum) {
            if lower >= v {
                break;
            }
            let width = c.min(v) - lower;
            if width > 0.0 {
                if a.is_infinite() {
                    return Err(domain("integral over an infinite atom"));
                }
                terms.push(a * width);
            }
            lower = c;
        }
        Ok(stable_sum(terms))
    }

    /// `integral` at sorted points in a single sweep.
    fn integrals_sorted(&self, points: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(points.len());
        // compensated running sum of completed atoms
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        let add = |x: f64, sum: &mut f64, comp: &mut f64| {
            let t = *sum + x;
            if sum.abs() >= x.abs() {
                *comp += (*sum - t) + x;
            } else {
                *comp += (x - t) + *sum;
            }
            *sum = t;
        };
        let mut i = 0;
        let mut lower = 0.0;
        let mut prev = 0.0;
        for &v in points {
            if v < prev {
                return Err(domain("integration points must be sorted"));
            }
            prev = v;
            while i < self.atoms.len() && self.cum[i] <= v {
                let width = self.cum[i] - lower;
                if width > 0.0 {
                    if self.atoms[i].is_infinite() {
                        return Err(domain("integral over an infinite atom"));
                    }
                    add(self.atoms[i] * width, &mut sum, &mut comp);
                }
                lower = self.cum[i];
                i += 1;
            }
            let mut partial = 0.0;
            if i < self.atoms.len() && v > lower {
                if self.atoms[i].is_infinite() {
                    return Err(domain("integral over an infinite atom"));
                }
                partial = self.atoms[i] * (v - lower);
            }
            out.push(sum + comp + partial);
        }
        Ok(out)
    }
}

/// Continuous piecewise-linear quantile through knots `(u, value)` with
/// `u` running from 0 to 1.
///
/// A repeated `u` encodes a jump; the first of the repeated knots gives the
/// value at the jump, which keeps the function left-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuantile {
    u: Vec<f64>,
    y: Vec<f64>,
    /// ∫₀^{u_i} of the function, per knot.
    area: Vec<f64>,
}

impl LinearQuantile {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid("piecewise-linear quantile needs at least two knots"));
        }
        let (u, y): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
        if u[0] != 0.0 || *u.last().unwrap() != 1.0 {
            return Err(invalid("knots must start at u = 0 and end at u = 1"));
        }
        for i in 0..u.len() {
            if !u[i].is_finite() || !y[i].is_finite() {
                return Err(invalid("knots must be finite"));
            }
            if i > 0 && (u[i] < u[i - 1] || y[i] < y[i - 1]) {
                return Err(Error::NonMonotone { row: i });
            }
        }
        let mut area = vec![0.0; u.len()];
        for i in 1..u.len() {
            area[i] = area[i - 1] + 0.5 * (y[i] + y[i - 1]) * (u[i] - u[i - 1]);
        }
        Ok(Self { u, y, area })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.u.iter().copied().zip(self.y.iter().copied())
    }

    pub fn eval(&self, u: f64) -> f64 {
        let j = self.u.partition_point(|&x| x < u);
        if j == 0 {
            return self.y[0];
        }
        if j >= self.u.len() {
            return *self.y.last().unwrap();
        }
        let (u0, u1) = (self.u[j - 1], self.u[j]);
        let t = (u - u0) / (u1 - u0);
        self.y[j - 1] + t * (self.y[j] - self.y[j - 1])
    }

    pub fn integral(&self, v: f64) -> f64 {
        let j = self.u.partition_point(|&x| x < v);
        if j == 0 {
            return 0.0;
        }
        if j >= self.u.len() {
            return *self.area.last().unwrap();
        }
        let u0 = self.u[j - 1];
        let at_v = self.eval(v);
        self.area[j - 1] + 0.5 * (self.y[j - 1] + at_v) * (v - u0)
    }

    /// Points inside linear pieces where `q(v) = v` with slope above one:
    /// interior minima of `∫₀ᵛ q − v²/2`.
    fn stationary_points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for j in 1..self.u.len() {
            let (u0, u1) = (self.u[j - 1], self.u[j]);
            if u1 <= u0 {
                continue;
            }
            let s = (self.y[j] - self.y[j - 1]) / (u1 - u0);
            if s > 1.0 {
                let v = (self.y[j - 1] - s * u0) / (1.0 - s);
                if v > u0 && v < u1 {
                    out.push(v);
                }
            }
        }
        out
    }
}

/// Quantile function supplied as a closure.
#[derive(Clone)]
pub struct ClosedQuantile {
    label: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for ClosedQuantile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedQuantile").field("label", &self.label).finish()
    }
}

/// A left-quantile function on (0, 1).
#[derive(Debug, Clone)]
pub enum QuantileFn {
    Step(StepQuantile),
    Linear(LinearQuantile),
    Closed(ClosedQuantile),
}

impl From<StepQuantile> for QuantileFn {
    fn from(s: StepQuantile) -> Self {
        QuantileFn::Step(s)
    }
}

impl From<LinearQuantile> for QuantileFn {
    fn from(l: LinearQuantile) -> Self {
        QuantileFn::Linear(l)
    }
}

impl QuantileFn {
    pub fn step(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        StepQuantile::new(atoms, probs).map(Self::Step)
    }

    pub fn linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        LinearQuantile::new(knots).map(Self::Linear)
    }

    /// Wraps a closure. The caller guarantees it is nondecreasing and
    /// left-continuous on (0, 1).
    pub fn closed<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Closed(ClosedQuantile {
            label: label.into(),
            f: Arc::new(f),
        })
    }

    /// Standard uniform law on [0, 1].
    pub fn uniform() -> Self {
        Self::uniform_on(0.0, 1.0).expect("valid interval")
    }

    pub fn uniform_on(lo: f64, hi: f64) -> Result<Self> {
        Self::linear(vec![(0.0, lo), (1.0, hi)])
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::step(vec![c], vec![1.0])
    }

    pub fn as_step(&self) -> Option<&StepQuantile> {
        match self {
            Self::Step(s) => Some(s),
            _ => None,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Step(s) => s.eval(u),
            Self::Linear(l) => l.eval(u),
            Self::Closed(c) => (c.f)(u),
        }
    }

    /// Draws from the distribution by inverse transform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.eval(u)
    }

    /// Breakpoints of the representation inside (0, 1].
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Step(s) => s.cum.clone(),
            Self::Linear(l) => l.u.iter().copied().filter(|&u| u > 0.0).collect(),
            Self::Closed(_) => Vec::new(),
        }
    }

    /// `∫₀ᵛ q(u) du` at each of the sorted points.
    pub fn integrals_at(&self, points: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Step(s) => s.integrals_sorted(points),
            Self::Linear(l) => Ok(points.iter().map(|&v| l.integral(v)).collect()),
            Self::Closed(c) => {
                let mut out = Vec::with_capacity(points.len());
                let mut acc = 0.0;
                let mut prev = 0.0;
                for &v in points {
                    if v < prev {
                        return Err(domain("integration points must be sorted"));
                    }
                    acc += integrate(|u| (c.f)(u), prev, v, 1e-15, 1e-13);
                    if !acc.is_finite() {
                        return Err(domain(format!(
                            "quantile `{}` is not integrable up to {v}",
                            c.label
                        )));
                    }
                    out.push(acc);
                    prev = v;
                }
                Ok(out)
            }
        }
    }

    pub fn mean(&self) -> Result<f64> {
        quantile_integral(self, 1.0)
    }
}

/// `∫₀ᵛ q(u) du`, exact for step and piecewise-linear quantiles and by
/// adaptive quadrature for closures.
pub fn quantile_integral(q: &QuantileFn, v: f64) -> Result<f64> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(domain(format!("integration limit {v} is outside (0, 1]")));
    }
    Ok(q.integrals_at(&[v])?[0])
}

/// Outcome of an order check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCheckReport {
    pub holds: bool,
    /// Point where the defining inequality is tightest (or most violated).
    pub worst_v: f64,
    /// Minimum over the check grid of left side minus right side.
    #[serde(with = "crate::serde_ext::float")]
    pub margin: f64,
    /// Index of an offending sample value, for sample-based checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offending_index: Option<usize>,
}

impl OrderCheckReport {
    fn from_margin(worst_v: f64, margin: f64, tol: f64) -> Self {
        Self {
            holds: margin >= -tol,
            worst_v,
            margin,
            offending_index: None,
        }
    }
}

fn check_points(grid_size: usize, extra: impl IntoIterator<Item = f64>) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(domain("grid size must be at least 2"));
    }
    let n = grid_size as f64;
    let mut pts: Vec<f64> = (1..=grid_size).map(|j| j as f64 / n).collect();
    pts.extend(extra.into_iter().filter(|&v| v > 0.0 && v <= 1.0));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Ok(pts)
}

fn argmin(points: &[f64], values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut best = (1.0, f64::INFINITY);
    for (&v, m) in points.iter().zip(values) {
        if m < best.1 {
            best = (v, m);
        }
    }
    best
}

/// Checks `U ≤₂ P` through the integrated-quantile criterion.
pub fn is_pstar(q: &QuantileFn, grid_size: usize, tol: f64) -> Result<OrderCheckReport> {
    let mut extra = q.breakpoints();
    if let QuantileFn::Linear(l) = q {
        extra.extend(l.stationary_points());
    }
    let points = check_points(grid_size, extra)?;
    let integrals = q.integrals_at(&points)?;
    let (worst_v, margin) = argmin(
        &points,
        points.iter().zip(&integrals).map(|(&v, &i)| i - 0.5 * v * v),
    );
    Ok(OrderCheckReport::from_margin(worst_v, margin, tol))
}

/// Checks `U ≤₁ P`, i.e. `q(u) ≥ u` on the grid.
pub fn is_p(q: &QuantileFn, grid_size: usize, tol: f64) -> Result<OrderCheckReport> {
    let points = check_points(grid_size, q.breakpoints())?;
    let (worst_v, margin) = argmin(&points, points.iter().map(|&u| q.eval(u) - u));
    Ok(OrderCheckReport::from_margin(worst_v, margin, tol))
}

fn quantile_gap(upper: f64, lower: f64) -> f64 {
    if upper == lower {
        0.0
    } else {
        upper - lower
    }
}

/// Checks `a ≤₁ b` via `b(u) ≥ a(u)` pointwise.
pub fn dominates_first_order(
    a: &QuantileFn,
    b: &QuantileFn,
    grid_size: usize,
    tol: f64,
) -> Result<OrderCheckReport> {
    let points = check_points(
        grid_size,
        a.breakpoints().into_iter().chain(b.breakpoints()),
    )?;
    let (worst_v, margin) = argmin(
        &points,
        points.iter().map(|&u| quantile_gap(b.eval(u), a.eval(u))),
    );
    Ok(OrderCheckReport::from_margin(worst_v, margin, tol))
}

/// A finite sample, optionally weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl EmpiricalSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("sample is empty"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("sample contains NaN"));
        }
        Ok(Self {
            values,
            weights: None,
        })
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: values.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total = stable_sum(weights.iter().copied());
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        let mut s = Self::new(values)?;
        s.weights = Some(weights);
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        match &self.weights {
            Some(w) => stable_sum(self.values.iter().zip(w).map(|(v, w)| if *w == 0.0 { 0.0 } else { v * w })),
            None => stable_sum(self.values.iter().copied()) / self.values.len() as f64,
        }
    }
}

/// Checks the e-variable conditions `E ≥ 0` and `E[E] ≤ 1` on a sample.
///
/// `margin` is `1 − mean`, or the most negative value when one is present;
/// `worst_v` is reported as 1 (the mean is the integrated quantile at v = 1).
pub fn is_e_sample(s: &EmpiricalSample, tol: f64) -> OrderCheckReport {
    let negative = s
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1));
    if let Some((idx, &v)) = negative {
        return OrderCheckReport {
            holds: false,
            worst_v: 1.0,
            margin: v,
            offending_index: Some(idx),
        };
    }
    let margin = 1.0 - s.mean();
    OrderCheckReport::from_margin(1.0, margin, tol)
}

/// Step quantile of the (weighted) empirical distribution.
pub fn empirical_quantile(s: &EmpiricalSample) -> QuantileFn {
    let mut idx: Vec<usize> = (0..s.values.len()).collect();
    idx.sort_by(|&a, &b| s.values[a].total_cmp(&s.values[b]));
    match &s.weights {
        None => {
            let n = idx.len() as f64;
            let mut atoms = Vec::new();
            let mut cum = Vec::new();
            for (rank, &i) in idx.iter().enumerate() {
                let x = s.values[i];
                let c = (rank + 1) as f64 / n;
                if atoms.last() == Some(&x) {
                    *cum.last_mut().unwrap() = c;
                } else {
                    atoms.push(x);
                    cum.push(c);
                }
            }
            QuantileFn::Step(StepQuantile::from_cumulative(atoms, cum))
        }
        Some(w) => {
            let pairs = idx.iter().map(|&i| (s.values[i], w[i])).collect();
            QuantileFn::Step(StepQuantile::from_pairs(pairs))
        }
    }
}
