//! Single-parameter exponential family primitives.
//!
//! Every distribution in a family is identified by its mean, so all quantities
//! here take means directly: the KL divergence between two members, the
//! minimiser of a two-point weighted KL sum, and inversion of KL balls for
//! confidence bounds. All logarithms are natural.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance kept between an empirical Bernoulli mean and {0, 1}.
pub const BERNOULLI_EDGE: f64 = 1e-9;

/// Admissible mean interval for the unit-variance Gaussian family.
pub const GAUSSIAN_MEAN_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpefError {
    #[error("mean {value} is not admissible for the {family} family")]
    InadmissibleMean { family: Family, value: f64 },
    #[error("weights {lambda1} and {lambda2} have zero total")]
    DegenerateWeights { lambda1: f64, lambda2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Bernoulli rewards, means in (0, 1).
    Bernoulli,
    /// Gaussian rewards with unit variance, means in [`GAUSSIAN_MEAN_RANGE`].
    Gaussian,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Bernoulli => f.write_str("bernoulli"),
            Family::Gaussian => f.write_str("gaussian"),
        }
    }
}

impl Family {
    /// Closed range of means reachable by confidence bounds.
    pub fn mean_bounds(self) -> (f64, f64) {
        match self {
            Family::Bernoulli => (0.0, 1.0),
            Family::Gaussian => GAUSSIAN_MEAN_RANGE,
        }
    }

    pub fn is_admissible(self, m: f64) -> bool {
        match self {
            Family::Bernoulli => m > 0.0 && m < 1.0,
            Family::Gaussian => m >= GAUSSIAN_MEAN_RANGE.0 && m <= GAUSSIAN_MEAN_RANGE.1,
        }
    }

    pub fn check(self, m: f64) -> Result<f64, SpefError> {
        if self.is_admissible(m) {
            Ok(m)
        } else {
            Err(SpefError::InadmissibleMean { family: self, value: m })
        }
    }

    /// Pulls an empirical mean back into the admissible set. All-zero or
    /// all-one Bernoulli samples land `BERNOULLI_EDGE` inside the interval.
    pub fn clamp_mean(self, m: f64) -> f64 {
        match self {
            Family::Bernoulli => m.clamp(BERNOULLI_EDGE, 1.0 - BERNOULLI_EDGE),
            Family::Gaussian => m.clamp(GAUSSIAN_MEAN_RANGE.0, GAUSSIAN_MEAN_RANGE.1),
        }
    }

    /// KL divergence without admissibility checks. Bernoulli arguments on the
    /// boundary follow the `0 log 0 = 0` convention.
    pub fn kl(self, m1: f64, m2: f64) -> f64 {
        match self {
            Family::Bernoulli => bernoulli_kl(m1, m2),
            Family::Gaussian => 0.5 * (m1 - m2) * (m1 - m2),
        }
    }

    pub fn try_kl(self, m1: f64, m2: f64) -> Result<f64, SpefError> {
        Ok(self.kl(self.check(m1)?, self.check(m2)?))
    }

    /// `inf_x lambda1 KL(m1, x) + lambda2 KL(m2, x)`, attained at the weighted
    /// mean. Zero when either weight vanishes or the means coincide.
    pub fn weighted_index(self, lambda1: f64, m1: f64, lambda2: f64, m2: f64) -> f64 {
        if lambda1 <= 0.0 || lambda2 <= 0.0 || m1 == m2 {
            return 0.0;
        }
        let x = m1 + (lambda2 / (lambda1 + lambda2)) * (m2 - m1);
        let value = lambda1 * self.kl(m1, x) + lambda2 * self.kl(m2, x);
        value.max(0.0)
    }

    /// Largest `x >= m_hat` with `n KL(m_hat, x) <= level`, clamped to the
    /// upper end of the admissible range.
    pub fn kl_upper_confidence(self, m_hat: f64, n: f64, level: f64) -> f64 {
        let hi = self.mean_bounds().1;
        self.invert_kl_ball(m_hat, n, level, hi)
    }

    /// Smallest `x <= m_hat` with `n KL(m_hat, x) <= level`.
    pub fn kl_lower_confidence(self, m_hat: f64, n: f64, level: f64) -> f64 {
        let lo = self.mean_bounds().0;
        self.invert_kl_ball(m_hat, n, level, lo)
    }

    fn invert_kl_ball(self, m_hat: f64, n: f64, level: f64, edge: f64) -> f64 {
        debug_assert!(n > 0.0 && level >= 0.0);
        if level <= 0.0 || m_hat == edge {
            return m_hat;
        }
        let inside = |x: f64| n * self.kl(m_hat, x) <= level;
        if inside(edge) {
            return edge;
        }
        // `near` stays inside the ball, `far` outside; bisect to machine precision.
        let (mut near, mut far) = (m_hat, edge);
        while (far - near).abs() > f64::EPSILON * near.abs().max(far.abs()) {
            let mid = 0.5 * (near + far);
            if mid == near || mid == far {
                break;
            }
            if inside(mid) {
                near = mid;
            } else {
                far = mid;
            }
        }
        near
    }
}

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a <= 0.0 { 0.0 } else { a * (a / b).ln() };
    (term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0)
}

/// KL divergence between the family members with means `m1` and `m2`.
pub fn kl(family: Family, m1: f64, m2: f64) -> Result<f64, SpefError> {
    family.try_kl(m1, m2)
}

/// Minimiser of `lambda1 KL(m1, x) + lambda2 KL(m2, x)` over `x`, i.e. the
/// weighted average of the two means. Holds for every family member.
pub fn weighted_infimizer(lambda1: f64, m1: f64, lambda2: f64, m2: f64) -> Result<f64, SpefError> {
    let total = lambda1 + lambda2;
    if !(total > 0.0) {
        return Err(SpefError::DegenerateWeights { lambda1, lambda2 });
    }
    Ok(m1 + (lambda2 / total) * (m2 - m1))
}

pub fn weighted_index(
    family: Family,
    lambda1: f64,
    m1: f64,
    lambda2: f64,
    m2: f64,
) -> Result<f64, SpefError> {
    family.check(m1)?;
    family.check(m2)?;
    Ok(family.weighted_index(lambda1, m1, lambda2, m2))
}

pub fn kl_upper_confidence(family: Family, m_hat: f64, n: f64, level: f64) -> Result<f64, SpefError> {
    Ok(family.kl_upper_confidence(family.check(m_hat)?, n, level))
}

pub fn kl_lower_confidence(family: Family, m_hat: f64, n: f64, level: f64) -> Result<f64, SpefError> {
    Ok(family.kl_lower_confidence(family.check(m_hat)?, n, level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force infimum over an evenly spaced grid spanning both means.
    fn grid_infimum(family: Family, l1: f64, m1: f64, l2: f64, m2: f64, points: usize) -> f64 {
        let (lo, hi) = (m1.min(m2), m1.max(m2));
        (0..=points)
            .map(|i| lo + (hi - lo) * i as f64 / points as f64)
            .map(|x| l1 * family.kl(m1, x) + l2 * family.kl(m2, x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Scan for the KL-ball boundary without bisection.
    fn grid_boundary(family: Family, m: f64, n: f64, level: f64, towards: f64) -> f64 {
        let steps = 2_000_000;
        let mut last = m;
        for i in 1..=steps {
            let x = m + (towards - m) * i as f64 / steps as f64;
            if n * family.kl(m, x) > level {
                return last;
            }
            last = x;
        }
        last
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl(Family::Bernoulli, 0.5, 0.5).unwrap(), 0.0);
        assert!((kl(Family::Gaussian, 2.0, 0.0).unwrap() - 2.0).abs() < 1e-15);
        let expected = 0.3 * (0.3f64 / 0.7).ln() + 0.7 * (0.7f64 / 0.3).ln();
        let got = kl(Family::Bernoulli, 0.3, 0.7).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.338_919).abs() < 1e-6);
    }

    #[test]
    fn kl_rejects_inadmissible_means() {
        let err = kl(Family::Bernoulli, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, SpefError::InadmissibleMean { value, .. } if value == 1.0));
        assert!(err.to_string().contains('1'));
        assert!(kl(Family::Gaussian, 0.0, 11.0).is_err());
        assert!(kl(Family::Bernoulli, 0.5, f64::NAN).is_err());
    }

    #[test]
    fn infimizer_examples() {
        assert_eq!(weighted_infimizer(1.0, 0.8, 1.0, 0.2).unwrap(), 0.5);
        assert_eq!(weighted_infimizer(5.0, 0.9, 0.0, 0.1).unwrap(), 0.9);
        assert_eq!(weighted_infimizer(1.0, 1.0, 3.0, 0.0).unwrap(), 0.25);
        assert!(matches!(
            weighted_infimizer(0.0, 0.3, 0.0, 0.4),
            Err(SpefError::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn weighted_index_examples() {
        for family in [Family::Bernoulli, Family::Gaussian] {
            assert_eq!(weighted_index(family, 4.0, 0.7, 0.0, 0.2).unwrap(), 0.0);
        }
        let (n, m1, m2) = (7.5, 1.0, -0.5);
        let delta: f64 = m1 - m2;
        let got = weighted_index(Family::Gaussian, n, m1, n, m2).unwrap();
        assert!((got - n * delta * delta / 4.0).abs() < 1e-12);

        let oracle = grid_infimum(Family::Bernoulli, 3.0, 0.7, 2.0, 0.3, 100_000);
        let got = weighted_index(Family::Bernoulli, 3.0, 0.7, 2.0, 0.3).unwrap();
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn confidence_examples() {
        for family in [Family::Bernoulli, Family::Gaussian] {
            assert_eq!(kl_upper_confidence(family, 0.4, 3.0, 0.0).unwrap(), 0.4);
            assert_eq!(kl_lower_confidence(family, 0.4, 3.0, 0.0).unwrap(), 0.4);
        }
        let up = kl_upper_confidence(Family::Gaussian, 0.0, 2.0, 1.0).unwrap();
        let down = kl_lower_confidence(Family::Gaussian, 0.0, 2.0, 1.0).unwrap();
        assert!((up - 1.0).abs() < 1e-9);
        assert!((down + 1.0).abs() < 1e-9);

        let up = kl_upper_confidence(Family::Bernoulli, 0.5, 10.0, 0.2).unwrap();
        let down = kl_lower_confidence(Family::Bernoulli, 0.5, 10.0, 0.2).unwrap();
        let up_grid = grid_boundary(Family::Bernoulli, 0.5, 10.0, 0.2, 1.0);
        let down_grid = grid_boundary(Family::Bernoulli, 0.5, 10.0, 0.2, 0.0);
        assert!((up - up_grid).abs() < 1e-6, "{up} vs {up_grid}");
        assert!((down - down_grid).abs() < 1e-6, "{down} vs {down_grid}");
        assert!(((up - 0.5) - (0.5 - down)).abs() < 1e-9);
    }

    #[test]
    fn gaussian_confidence_clamps_to_range() {
        let up = Family::Gaussian.kl_upper_confidence(9.5, 1.0, 50.0);
        assert_eq!(up, GAUSSIAN_MEAN_RANGE.1);
        let down = Family::Gaussian.kl_lower_confidence(-9.5, 1.0, 50.0);
        assert_eq!(down, GAUSSIAN_MEAN_RANGE.0);
    }

    #[test]
    fn clamp_keeps_bernoulli_interior() {
        assert_eq!(Family::Bernoulli.clamp_mean(0.0), BERNOULLI_EDGE);
        assert_eq!(Family::Bernoulli.clamp_mean(1.0), 1.0 - BERNOULLI_EDGE);
        assert!(Family::Bernoulli.is_admissible(Family::Bernoulli.clamp_mean(1.0)));
    }

    fn family() -> impl Strategy<Value = Family> {
        prop_oneof![Just(Family::Bernoulli), Just(Family::Gaussian)]
    }

    fn mean_for(family: Family) -> BoxedStrategy<f64> {
        match family {
            Family::Bernoulli => (0.01f64..0.99).boxed(),
            Family::Gaussian => (-3.0f64..3.0).boxed(),
        }
    }

    fn index_case() -> impl Strategy<Value = (Family, f64, f64, f64, f64)> {
        family().prop_flat_map(|f| (Just(f), 0.0f64..50.0, mean_for(f), 0.0f64..50.0, mean_for(f)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn index_matches_grid_infimum((f, l1, m1, l2, m2) in index_case()) {
            let got = f.weighted_index(l1, m1, l2, m2);
            let oracle = grid_infimum(f, l1, m1, l2, m2, 100_000);
            prop_assert!(got <= oracle + 1e-12);
            prop_assert!(oracle - got <= 1e-6 * got.max(1e-12), "{} vs {}", got, oracle);
        }

        #[test]
        fn index_is_monotone_in_weights(
            (f, l1, m1, l2, m2) in index_case(),
            bump1 in 0.0f64..10.0,
            bump2 in 0.0f64..10.0,
        ) {
            let base = f.weighted_index(l1, m1, l2, m2);
            prop_assert!(f.weighted_index(l1 + bump1, m1, l2, m2) >= base - 1e-12);
            prop_assert!(f.weighted_index(l1, m1, l2 + bump2, m2) >= base - 1e-12);
        }

        #[test]
        fn kl_is_nonnegative_and_separates((f, m1, m2) in family().prop_flat_map(|f| (Just(f), mean_for(f), mean_for(f)))) {
            let d = f.kl(m1, m2);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(f.kl(m1, m1), 0.0);
            if (m1 - m2).abs() > 1e-5 {
                prop_assert!(d > 1e-12);
            }
        }

        #[test]
        fn confidence_bounds_sit_on_the_ball((f, m) in family().prop_flat_map(|f| (Just(f), mean_for(f))), n in 1.0f64..100.0, level in 0.01f64..5.0) {
            let (lo, hi) = f.mean_bounds();
            let up = f.kl_upper_confidence(m, n, level);
            let down = f.kl_lower_confidence(m, n, level);
            prop_assert!(up >= m && down <= m);
            // Either the root meets the level, or the level is crossed between
            // the root and its neighbouring float (steep KL near the edge).
            let on_ball = |x: f64, beyond: f64| {
                let (a, b) = (n * f.kl(m, x), n * f.kl(m, beyond));
                (a - level).abs() < 1e-8 || (a <= level + 1e-8 && b >= level - 1e-8)
            };
            if up < hi - 1e-12 {
                prop_assert!(on_ball(up, up.next_up()));
            }
            if down > lo + 1e-12 {
                prop_assert!(on_ball(down, down.next_down()));
            }
        }
    }
}
