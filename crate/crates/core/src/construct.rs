//! Constructors of p*-variables: weighted averages of p-values, midway
//! tie-breaking for discrete statistics, and the adversarial distributions
//! used as worst cases for thresholds and calibrators.

use rand::Rng;
use rand_distr::Open01;

use crate::error::{domain, invalid, Error, Result};
use crate::numeric::stable_sum;
use crate::order::{LinearQuantile, QuantileFn, StepQuantile, PROB_SUM_TOL};

/// Null distribution of a discrete test statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNull {
    support: Vec<f64>,
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl DiscreteNull {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::LengthMismatch {
                expected: support.len(),
                got: probs.len(),
            });
        }
        if support.is_empty() {
            return Err(invalid("null support is empty"));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(invalid("null support must be finite"));
        }
        if let Some(i) = (1..support.len()).find(|&i| support[i] <= support[i - 1]) {
            return Err(Error::NonMonotone { row: i });
        }
        if probs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(invalid("null probabilities must be positive"));
        }
        let total = stable_sum(probs.iter().copied());
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("null probabilities sum to {total}, not 1")));
        }
        let step = StepQuantile::new(support.clone(), probs.clone())?;
        let cum = step.cumulative().to_vec();
        Ok(Self { support, probs, cum })
    }

    /// Builds a null from `(value, probability)` pairs, sorting by value.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (support, probs) = pairs.into_iter().unzip();
        Self::new(support, probs)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P(T ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let i = self.support.partition_point(|&x| x <= t);
        if i == 0 {
            0.0
        } else {
            self.cum[i - 1]
        }
    }

    /// `P(T < t)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        let i = self.support.partition_point(|&x| x < t);
        if i == 0 {
            0.0
        } else {
            self.cum[i - 1]
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        let i = self.cum.partition_point(|&c| c < u);
        self.support[i.min(self.support.len() - 1)]
    }
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("weight vector is empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total = stable_sum(weights.iter().copied());
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn equal(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("weight vector is empty"));
        }
        Ok(Self(vec![1.0 / k as f64; k]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Σ wₖ pₖ`. A p*-value whenever the inputs are p-values or p*-values.
pub fn weighted_average(ps: &[f64], w: &WeightVector) -> Result<f64> {
    if ps.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            got: ps.len(),
        });
    }
    if let Some(p) = ps.iter().find(|p| p.is_nan() || **p < 0.0) {
        return Err(domain(format!("p-value {p} is negative or NaN")));
    }
    Ok(stable_sum(ps.iter().zip(w.as_slice()).map(|(p, w)| p * w)))
}

/// Midway p*-value `½ P(T ≤ t) + ½ P(T < t)` for an observed statistic.
pub fn midway_pvalue(null: &DiscreteNull, t_obs: f64) -> f64 {
    0.5 * null.cdf(t_obs) + 0.5 * null.cdf_left(t_obs)
}

/// Distribution of the midway p*-value when `T` follows the null: atom
/// `(C_{i-1} + C_i)/2` with mass `pᵢ`, `Cᵢ` being the cumulative masses.
pub fn midway_distribution(null: &DiscreteNull) -> QuantileFn {
    let mut prev = 0.0;
    let atoms = null
        .cum
        .iter()
        .map(|&c| {
            let a = 0.5 * (prev + c);
            prev = c;
            a
        })
        .collect();
    QuantileFn::Step(StepQuantile::new(atoms, null.probs.clone()).expect("null masses are valid"))
}

/// Two-atom p*-variable with `P(P ≤ t) = 2t`.
///
/// Atom `t` carries mass `2t`, so the integral criterion is tight at `v = 2t`;
/// the second atom is placed to make the mean exactly 1/2, which gives
/// `a = (1/2 − 2t²)/(1 − 2t)` with mass `1 − 2t`. Between the two tight
/// points the integral is linear and the parabola is convex, so the criterion
/// holds everywhere.
pub fn adversarial_two_atom(t: f64) -> Result<QuantileFn> {
    if !(t > 0.0 && t < 0.5) {
        return Err(domain(format!("two-atom parameter {t} is outside (0, 1/2)")));
    }
    let a = (0.5 - 2.0 * t * t) / (1.0 - 2.0 * t);
    QuantileFn::step(vec![t, a], vec![2.0 * t, 1.0 - 2.0 * t])
}

/// Quantile of `U` with `U` replaced by `m` on `[a1, b1] ∪ [a2, b2]`, where
/// `b1 < m < a2`. Replacing a pair of intervals by a point between them is a
/// mean-preserving contraction, so the result dominates `U` in second order.
pub(crate) fn collapse_to_atom(a1: f64, b1: f64, a2: f64, b2: f64, m: f64) -> Result<LinearQuantile> {
    if !(0.0 <= a1 && a1 < b1 && b1 < m && m < a2 && a2 < b2 && b2 <= 1.0) {
        return Err(domain("intervals must be disjoint, inside [0, 1] and around the atom"));
    }
    let mass = (b1 - a1) + (b2 - a2);
    let start = a1 + (m - b1);
    LinearQuantile::new(vec![
        (0.0, 0.0),
        (a1, a1),
        (a1, b1),
        (start, m),
        (start + mass, m),
        (b2, a2),
        (b2, b2),
        (1.0, 1.0),
    ])
}

/// `P = U` off `A ∪ B` and `(x + y + ε)/2` on `A ∪ B`, with
/// `A = [x, x + ε]`, `B = [y, y + ε]`.
///
/// A p*-variable that puts mass at the midpoint between `A` and `B`; against
/// a threshold whose distribution function is not concave there it rejects
/// with probability above the threshold mean.
pub fn adversarial_nonconcave_witness(x: f64, y: f64, eps: f64) -> Result<QuantileFn> {
    if !(x > 0.0 && y < 1.0 && x < y && eps > 0.0) {
        return Err(domain("need 0 < x < y < 1 and ε > 0"));
    }
    if x + eps >= y || y + eps >= 1.0 {
        return Err(domain(format!(
            "intervals [{x}, {}] and [{y}, {}] overlap or leave (0, 1)",
            x + eps,
            y + eps
        )));
    }
    let m = 0.5 * (x + y + eps);
    collapse_to_atom(x, x + eps, y, y + eps, m).map(QuantileFn::Linear)
}

/// `V = u` on `{U ≤ 2u}` and `U` elsewhere: a p*-variable with
/// `P(V ≤ u) = 2u`.
pub fn adversarial_step_pstar(u: f64) -> Result<QuantileFn> {
    if !(u > 0.0 && u <= 0.5) {
        return Err(domain(format!("step parameter {u} is outside (0, 1/2]")));
    }
    if 2.0 * u >= 1.0 {
        return QuantileFn::linear(vec![(0.0, u), (1.0, u)]);
    }
    QuantileFn::linear(vec![(0.0, u), (2.0 * u, u), (2.0 * u, 2.0 * u), (1.0, 1.0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order::{is_pstar, quantile_integral, DEFAULT_GRID, DEFAULT_TOL};
    use proptest::prelude::*;

    fn die() -> DiscreteNull {
        DiscreteNull::new((1..=6).map(f64::from).collect(), vec![1.0 / 6.0; 6]).unwrap()
    }

    #[test]
    fn weighted_average_examples() {
        let w = WeightVector::equal(3).unwrap();
        let avg = weighted_average(&[0.02, 0.04, 0.06], &w).unwrap();
        assert!((avg - 0.04).abs() < 1e-15);
        let one = WeightVector::new(vec![1.0]).unwrap();
        assert_eq!(weighted_average(&[0.37], &one).unwrap(), 0.37);
        assert!(matches!(
            weighted_average(&[0.1, 0.2], &w),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn midway_examples() {
        let point = DiscreteNull::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(midway_pvalue(&point, 0.0), 0.5);
        let coin = DiscreteNull::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(midway_pvalue(&coin, 1.0), 0.75);
        assert!((midway_pvalue(&die(), 3.0) - 5.0 / 12.0).abs() < 1e-15);
        assert_eq!(midway_pvalue(&die(), -1.0), 0.0);
        assert_eq!(midway_pvalue(&die(), 9.0), 1.0);
    }

    #[test]
    fn midway_distribution_examples() {
        let point = DiscreteNull::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(midway_distribution(&point).eval(0.3), 0.5);

        let coin = DiscreteNull::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let q = midway_distribution(&coin);
        assert_eq!(q.as_step().unwrap().atoms(), &[0.25, 0.75]);
        assert!((quantile_integral(&q, 0.5).unwrap() - 0.125).abs() < 1e-15);
        let r = is_pstar(&q, DEFAULT_GRID, DEFAULT_TOL).unwrap();
        assert!(r.holds && r.margin.abs() < 1e-15);

        let q = midway_distribution(&die());
        let atoms = q.as_step().unwrap().atoms();
        for (i, a) in atoms.iter().enumerate() {
            // enumeration: atom i is (i/6 + (i+1)/6)/2 = (2i+1)/12
            assert!((a - (2 * i + 1) as f64 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_atom_examples() {
        let q = adversarial_two_atom(0.01).unwrap();
        let s = q.as_step().unwrap();
        assert!((s.atoms()[1] - 0.49980 / 0.98).abs() < 1e-15);
        // 0.5 / 0.98 = 0.510204 would put the mean at 0.5002
        assert!((s.atoms()[1] - 0.51).abs() < 1e-15);
        assert!((q.mean().unwrap() - 0.5).abs() < 1e-15);
        assert!(is_pstar(&q, DEFAULT_GRID, DEFAULT_TOL).unwrap().holds);
        assert!((s.cdf(0.01) - 0.02).abs() < 1e-15);

        let q = adversarial_two_atom(0.25).unwrap();
        assert_eq!(q.as_step().unwrap().atoms(), &[0.25, 0.75]);
        assert!(adversarial_two_atom(0.5).is_err());
        assert!(adversarial_two_atom(0.0).is_err());
    }

    #[test]
    fn witness_example() {
        let q = adversarial_nonconcave_witness(0.2, 0.6, 0.1).unwrap();
        let QuantileFn::Linear(l) = &q else { panic!() };
        let knots: Vec<_> = l.knots().collect();
        let want = [
            (0.0, 0.0),
            (0.2, 0.2),
            (0.2, 0.3),
            (0.35, 0.45),
            (0.55, 0.45),
            (0.7, 0.6),
            (0.7, 0.7),
            (1.0, 1.0),
        ];
        for ((u, y), (wu, wy)) in knots.iter().zip(want) {
            assert!((u - wu).abs() < 1e-15 && (y - wy).abs() < 1e-15, "{knots:?}");
        }
        assert!(is_pstar(&q, DEFAULT_GRID, DEFAULT_TOL).unwrap().holds);
        assert!(adversarial_nonconcave_witness(0.2, 0.25, 0.1).is_err());
        assert!(adversarial_nonconcave_witness(0.2, 0.95, 0.1).is_err());
    }

    #[test]
    fn step_pstar_examples() {
        let q = adversarial_step_pstar(0.25).unwrap();
        assert_eq!(q.eval(0.1), 0.25);
        assert_eq!(q.eval(0.5), 0.25);
        assert!((q.eval(0.7) - 0.7).abs() < 1e-15);
        let r = is_pstar(&q, DEFAULT_GRID, DEFAULT_TOL).unwrap();
        assert!(r.holds);
        let at = quantile_integral(&q, 0.5).unwrap();
        assert!((at - 0.125).abs() < 1e-15);
        assert!(adversarial_step_pstar(0.5).is_ok());
        assert!(adversarial_step_pstar(0.6).is_err());
    }

    #[test]
    fn fine_discretization_approaches_classic() {
        let n = 20_000;
        let null = DiscreteNull::new(
            (0..n).map(|i| i as f64 / n as f64).collect(),
            vec![1.0 / n as f64; n],
        )
        .unwrap();
        let t = 0.3141;
        assert!((midway_pvalue(&null, t) - null.cdf(t)).abs() <= 0.5 / n as f64 + 1e-12);
    }

    fn arb_null() -> impl Strategy<Value = DiscreteNull> {
        prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..10).prop_filter_map(
            "distinct support",
            |mut pairs| {
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                pairs.dedup_by(|a, b| a.0 == b.0);
                let total: f64 = pairs.iter().map(|p| p.1).sum();
                let (s, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().map(|(x, p)| (x, p / total)).unzip();
                DiscreteNull::new(s, p).ok()
            },
        )
    }

    proptest! {
        #[test]
        fn midway_is_pstar(null in arb_null()) {
            let q = midway_distribution(&null);
            prop_assert!(is_pstar(&q, 512, 1e-12).unwrap().holds);
            prop_assert!((q.mean().unwrap() - 0.5).abs() < 1e-12);
        }

        #[test]
        fn two_atom_is_tight(t in 0.001f64..0.499) {
            let q = adversarial_two_atom(t).unwrap();
            prop_assert!(is_pstar(&q, 512, 1e-12).unwrap().holds);
            prop_assert!((q.as_step().unwrap().cdf(t) - 2.0 * t).abs() < 1e-12);
        }

        #[test]
        fn witness_is_pstar(x in 0.01f64..0.4, gap in 0.05f64..0.3, frac in 0.05f64..0.95) {
            let y = x + gap;
            let eps = frac * gap;
            prop_assume!(y + eps < 1.0);
            let q = adversarial_nonconcave_witness(x, y, eps).unwrap();
            prop_assert!(is_pstar(&q, 512, 1e-12).unwrap().holds);
        }
    }
}
