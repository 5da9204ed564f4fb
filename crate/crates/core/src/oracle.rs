//! Lower-bound allocation problems.
//!
//! The sample-count problem asks for the cheapest online allocation `N` such
//! that, pooled with the offline counts, every pairwise index between the best
//! arm and a competitor reaches a threshold:
//!
//! ```text
//! min sum_a N_a   s.t.   Z_{1,a}(N° + N) >= threshold  for all a != 1,  N >= 0
//! ```
//!
//! It is solved by nested bisection. For a fixed best-arm allocation `n1`,
//! each competitor's constraint has a unique root in `N_a` because the index is
//! monotone in that coordinate. The outer objective
//! `n1 + sum_a max(0, N_a(n1))` is convex in `n1`, and its derivative is
//! `1 - sum_{a active} KL(mu_1, x_a) / KL(mu_a, x_a)`, so a sign bisection on
//! that derivative locates the optimum.
//!
//! The normalized max-min form (`eval_v`, `solve_p3`) works in offline-fraction
//! and proportion coordinates and is computed independently of the
//! sample-count form, so the two can be cross-checked.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spef::{Family, SpefError};

/// Tolerance used when classifying constraints as tight in optimality reports.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-4;

/// Offline counts at or above this size stand in for an unlimited supply.
pub const EFFECTIVELY_INFINITE_COUNT: f64 = 1e9;

const INNER_REL_TOL: f64 = 1e-13;
const INNER_MAX_ITER: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("an instance needs at least two arms, got {0}")]
    TooFewArms(usize),
    #[error("arms {0} and {1} share the largest mean")]
    TiedBest(usize, usize),
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no feasible best-arm allocation found after {0} doublings")]
    DoublingCapExceeded(usize),
    #[error("bisection for arm {arm} did not converge")]
    NonConvergence { arm: usize },
    #[error(transparent)]
    Spef(#[from] SpefError),
}

/// Ground-truth bandit: a family and one mean per arm with a unique maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    family: Family,
    means: Vec<f64>,
    best: usize,
}

impl BanditInstance {
    pub fn new(family: Family, means: Vec<f64>) -> Result<Self, OracleError> {
        if means.len() < 2 {
            return Err(OracleError::TooFewArms(means.len()));
        }
        for &m in &means {
            family.check(m)?;
        }
        let best = best_arm(&means);
        if let Some(other) = (0..means.len()).find(|&a| a != best && means[a] == means[best]) {
            return Err(OracleError::TiedBest(best.min(other), best.max(other)));
        }
        Ok(Self { family, means, best })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn best(&self) -> usize {
        self.best
    }

    /// Sub-optimality gap of arm `a`.
    pub fn gap(&self, a: usize) -> f64 {
        self.means[self.best] - self.means[a]
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn best_arm(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = a;
        }
    }
    best
}

/// Historical samples: per-arm counts and reward sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineDataset {
    counts: Vec<u64>,
    reward_sums: Vec<f64>,
}

impl OfflineDataset {
    pub fn new(counts: Vec<u64>, reward_sums: Vec<f64>) -> Result<Self, OracleError> {
        if counts.len() != reward_sums.len() {
            return Err(OracleError::LengthMismatch { expected: counts.len(), got: reward_sums.len() });
        }
        if reward_sums.iter().any(|s| !s.is_finite()) {
            return Err(OracleError::InvalidParameter("offline reward sums must be finite".into()));
        }
        Ok(Self { counts, reward_sums })
    }

    /// Counts only; reward sums are zero. Enough for oracle calls, which use
    /// the instance's means rather than empirical ones.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let reward_sums = vec![0.0; counts.len()];
        Self { counts, reward_sums }
    }

    pub fn empty(num_arms: usize) -> Self {
        Self::from_counts(vec![0; num_arms])
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.reward_sums
    }

    pub fn tau1(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn mean(&self, a: usize) -> Option<f64> {
        (self.counts[a] > 0).then(|| self.reward_sums[a] / self.counts[a] as f64)
    }

    /// Offline fractions `N°_a / tau1`, undefined for an empty dataset.
    pub fn proportions(&self) -> Option<Vec<f64>> {
        let tau1 = self.tau1();
        (tau1 > 0).then(|| self.counts.iter().map(|&c| c as f64 / tau1 as f64).collect())
    }
}

/// Online sample budget per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation(pub Vec<f64>);

impl Allocation {
    pub fn zeros(num_arms: usize) -> Self {
        Self(vec![0.0; num_arms])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Proportions of the total, or `None` for the all-zero allocation.
    pub fn proportions(&self) -> Option<Vec<f64>> {
        let total = self.total();
        (total > 0.0).then(|| self.0.iter().map(|n| n / total).collect())
    }
}

impl std::ops::Index<usize> for Allocation {
    type Output = f64;
    fn index(&self, a: usize) -> &f64 {
        &self.0[a]
    }
}

/// Optimal offline fraction `z` and online proportions `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSolution {
    pub z: f64,
    pub w: Vec<f64>,
}

impl NormalizedSolution {
    /// Online counts implied by this solution for `tau1` offline samples.
    pub fn to_allocation(&self, tau1: f64) -> Allocation {
        if self.z <= 0.0 {
            return Allocation(vec![f64::INFINITY; self.w.len()]);
        }
        let online = tau1 * (1.0 / self.z - 1.0);
        Allocation(self.w.iter().map(|w| w * online).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Outer bisection stops once the bracket is below `epsilon * max(1, n1)`.
    pub epsilon: f64,
    /// Right-hand side of every index constraint.
    pub threshold: f64,
    pub max_doublings: usize,
}

impl SolverConfig {
    pub const DEFAULT_EPSILON: f64 = 1e-6;
    pub const DEFAULT_MAX_DOUBLINGS: usize = 200;

    pub fn new(threshold: f64) -> Result<Self, OracleError> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(OracleError::InvalidParameter(format!("threshold {threshold} must be finite and >= 0")));
        }
        Ok(Self { epsilon: Self::DEFAULT_EPSILON, threshold, max_doublings: Self::DEFAULT_MAX_DOUBLINGS })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        self.epsilon = epsilon;
        self
    }

    /// Threshold `log(1/(2.4 delta))` of the expected-count lower bound.
    pub fn lower_bound(delta: f64) -> Result<Self, OracleError> {
        Self::new(lower_bound_threshold(delta)?)
    }

    /// Threshold `log(1/delta) + log log(1/delta)` used with observed counts.
    pub fn plug_in(delta: f64) -> Result<Self, OracleError> {
        Self::new(plug_in_threshold(delta)?)
    }
}

fn check_delta(delta: f64) -> Result<(), OracleError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(OracleError::InvalidParameter(format!("delta {delta} must lie in (0, 1)")))
    }
}

pub fn lower_bound_threshold(delta: f64) -> Result<f64, OracleError> {
    check_delta(delta)?;
    Ok((1.0 / (2.4 * delta)).ln().max(0.0))
}

pub fn plug_in_threshold(delta: f64) -> Result<f64, OracleError> {
    check_delta(delta)?;
    let l = (1.0 / delta).ln();
    let value = l + l.ln();
    if value > 0.0 {
        Ok(value)
    } else {
        Err(OracleError::InvalidParameter(format!("delta {delta} gives a non-positive threshold")))
    }
}

/// One instance of the sample-count problem over arbitrary means (true or
/// empirical) and real-valued offline counts.
#[derive(Debug, Clone)]
pub struct AllocationProblem<'a> {
    family: Family,
    means: &'a [f64],
    offline: &'a [f64],
    best: usize,
    config: SolverConfig,
}

impl<'a> AllocationProblem<'a> {
    pub fn new(
        family: Family,
        means: &'a [f64],
        offline: &'a [f64],
        config: SolverConfig,
    ) -> Result<Self, OracleError> {
        if means.len() < 2 {
            return Err(OracleError::TooFewArms(means.len()));
        }
        if offline.len() != means.len() {
            return Err(OracleError::LengthMismatch { expected: means.len(), got: offline.len() });
        }
        if offline.iter().any(|n| !n.is_finite() || *n < 0.0) {
            return Err(OracleError::InvalidParameter("offline counts must be finite and >= 0".into()));
        }
        let best = best_arm(means);
        for (a, &m) in means.iter().enumerate() {
            family.check(m)?;
            if a != best && family.kl(means[best], m) <= 0.0 {
                return Err(OracleError::TiedBest(best.min(a), best.max(a)));
            }
        }
        Ok(Self { family, means, offline, best, config })
    }

    pub fn best(&self) -> usize {
        self.best
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn index(&self, pooled_best: f64, a: usize, pooled_a: f64) -> f64 {
        self.family.weighted_index(pooled_best, self.means[self.best], pooled_a, self.means[a])
    }

    /// Pooled weight of arm `a` that makes its constraint tight given the best
    /// arm's pooled weight, or `None` when no finite weight suffices.
    fn tight_pooled_weight(&self, a: usize, pooled_best: f64) -> Result<Option<f64>, OracleError> {
        let threshold = self.config.threshold;
        let ceiling = pooled_best * self.family.kl(self.means[self.best], self.means[a]);
        if ceiling <= threshold {
            return Ok(None);
        }
        if threshold <= 0.0 {
            return Ok(Some(0.0));
        }
        let below = |w: f64| self.index(pooled_best, a, w) < threshold;
        let (mut lo, mut hi) = (0.0, self.offline[a].max(1.0));
        let mut doublings = 0;
        while below(hi) {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > self.config.max_doublings {
                return Err(OracleError::NonConvergence { arm: a });
            }
        }
        let mut iterations = 0;
        while hi - lo > INNER_REL_TOL * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if below(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
            if iterations > INNER_MAX_ITER {
                return Err(OracleError::NonConvergence { arm: a });
            }
        }
        Ok(Some(hi))
    }

    /// Online count for arm `a` (possibly negative, down to `-N°_a`) at which
    /// its constraint is tight when the best arm receives `n1` online samples.
    pub fn competitor_count(&self, a: usize, n1: f64) -> Result<Option<f64>, OracleError> {
        assert_ne!(a, self.best, "the best arm has no constraint of its own");
        let pooled = self.tight_pooled_weight(a, self.offline[self.best] + n1)?;
        Ok(pooled.map(|w| w - self.offline[a]))
    }

    fn competitor_counts(&self, n1: f64) -> Result<Option<Vec<f64>>, OracleError> {
        let mut counts = vec![0.0; self.means.len()];
        for a in (0..self.means.len()).filter(|&a| a != self.best) {
            match self.competitor_count(a, n1)? {
                Some(n) => counts[a] = n,
                None => return Ok(None),
            }
        }
        Ok(Some(counts))
    }

    /// `n1 + sum_a max(0, N_a(n1))`, or `None` where `n1` is infeasible.
    pub fn objective(&self, n1: f64) -> Result<Option<f64>, OracleError> {
        Ok(self.competitor_counts(n1)?.map(|counts| {
            n1 + counts.iter().enumerate().filter(|&(a, _)| a != self.best).map(|(_, n)| n.max(0.0)).sum::<f64>()
        }))
    }

    /// Derivative of [`Self::objective`] in `n1`, or `None` where `n1` is
    /// infeasible (the caller should move right).
    pub fn gradient(&self, n1: f64) -> Result<Option<f64>, OracleError> {
        let Some(counts) = self.competitor_counts(n1)? else {
            return Ok(None);
        };
        let pooled_best = self.offline[self.best] + n1;
        let mu_best = self.means[self.best];
        let mut ratio_sum = 0.0;
        for a in (0..self.means.len()).filter(|&a| a != self.best && counts[a] > 0.0) {
            let pooled_a = self.offline[a] + counts[a];
            let x = mu_best + (pooled_a / (pooled_best + pooled_a)) * (self.means[a] - mu_best);
            ratio_sum += self.family.kl(mu_best, x) / self.family.kl(self.means[a], x);
        }
        Ok(Some(1.0 - ratio_sum))
    }

    /// Approximately optimal online allocation.
    pub fn solve(&self) -> Result<Allocation, OracleError> {
        let k = self.means.len();
        if self.config.threshold <= 0.0 {
            return Ok(Allocation::zeros(k));
        }
        let moves_right = |g: Option<f64>| g.is_none_or(|g| g <= 0.0);

        let n1 = match self.gradient(0.0)? {
            Some(g) if g >= 0.0 => 0.0,
            _ => {
                let (mut lo, mut hi) = (0.0, 1.0);
                let mut doublings = 0;
                while moves_right(self.gradient(hi)?) {
                    lo = hi;
                    hi *= 2.0;
                    doublings += 1;
                    if doublings > self.config.max_doublings {
                        return Err(OracleError::DoublingCapExceeded(self.config.max_doublings));
                    }
                }
                while hi - lo > self.config.epsilon * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if moves_right(self.gradient(mid)?) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        };

        let counts = self
            .competitor_counts(n1)?
            .ok_or(OracleError::DoublingCapExceeded(self.config.max_doublings))?;
        let mut allocation = Allocation::zeros(k);
        for a in 0..k {
            allocation.0[a] = if a == self.best { n1 } else { counts[a].max(0.0) };
        }
        Ok(allocation)
    }
}

fn expect_len(len: usize, expected: usize) -> Result<(), OracleError> {
    if len == expected {
        Ok(())
    } else {
        Err(OracleError::LengthMismatch { expected, got: len })
    }
}

/// Pairwise index of arms `a` and `b` at pooled counts `N° + alloc`, using the
/// instance's means.
pub fn index_z(instance: &BanditInstance, offline: &OfflineDataset, alloc: &Allocation, a: usize, b: usize) -> f64 {
    assert_ne!(a, b);
    let pooled = |arm: usize| offline.counts()[arm] as f64 + alloc[arm];
    let means = instance.means();
    instance.family().weighted_index(pooled(a), means[a], pooled(b), means[b])
}

pub fn solve_na_given_n1(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    a: usize,
    n1: f64,
    config: &SolverConfig,
) -> Result<Option<f64>, OracleError> {
    expect_len(offline.num_arms(), instance.num_arms())?;
    let counts = offline.counts_f64();
    let problem = AllocationProblem::new(instance.family(), instance.means(), &counts, *config)?;
    if a == problem.best() {
        return Err(OracleError::InvalidParameter("arm must differ from the best arm".into()));
    }
    problem.competitor_count(a, n1)
}

pub fn objective_gradient_at(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    n1: f64,
    config: &SolverConfig,
) -> Result<Option<f64>, OracleError> {
    expect_len(offline.num_arms(), instance.num_arms())?;
    let counts = offline.counts_f64();
    AllocationProblem::new(instance.family(), instance.means(), &counts, *config)?.gradient(n1)
}

/// Optimal online allocation against observed offline counts.
pub fn solve_p2(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    config: &SolverConfig,
) -> Result<Allocation, OracleError> {
    expect_len(offline.num_arms(), instance.num_arms())?;
    let counts = offline.counts_f64();
    AllocationProblem::new(instance.family(), instance.means(), &counts, *config)?.solve()
}

/// Lower-bound allocation against expected offline counts, and its total.
pub fn solve_p1(
    instance: &BanditInstance,
    expected_offline_counts: &[f64],
    delta: f64,
) -> Result<(Allocation, f64), OracleError> {
    expect_len(expected_offline_counts.len(), instance.num_arms())?;
    if expected_offline_counts.iter().any(|&n| n >= EFFECTIVELY_INFINITE_COUNT) {
        log::warn!("offline counts >= {EFFECTIVELY_INFINITE_COUNT:e} are treated as an unlimited supply");
    }
    let config = SolverConfig::lower_bound(delta)?;
    let alloc =
        AllocationProblem::new(instance.family(), instance.means(), expected_offline_counts, config)?.solve()?;
    let total = alloc.total();
    Ok((alloc, total))
}

/// Residuals of the optimality conditions for a candidate allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    /// Competitors receiving online samples.
    pub active_set_a1: Vec<usize>,
    /// Competitors with no online samples whose constraint is nonetheless tight.
    pub tight_zero_set_a2: Vec<usize>,
    pub ratio_sum_a1: f64,
    pub ratio_sum_a: f64,
    /// Largest violation among: relative slack of tight constraints in A1,
    /// relative infeasibility of any constraint, excess of `ratio_sum_a1`
    /// over 1, and (when the best arm is sampled) shortfall of `ratio_sum_a`
    /// below 1.
    pub max_constraint_violation: f64,
}

pub fn check_optimality(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    alloc: &Allocation,
    config: &SolverConfig,
) -> OptimalityReport {
    let family = instance.family();
    let means = instance.means();
    let best = instance.best();
    let threshold = config.threshold;
    let scale = threshold.max(1.0);
    let pooled = |a: usize| offline.counts()[a] as f64 + alloc[a];

    let ratio = |a: usize| {
        let (wb, wa) = (pooled(best), pooled(a));
        if wb + wa <= 0.0 {
            return f64::INFINITY;
        }
        let x = means[best] + (wa / (wb + wa)) * (means[a] - means[best]);
        let den = family.kl(means[a], x);
        if den > 0.0 {
            family.kl(means[best], x) / den
        } else {
            f64::INFINITY
        }
    };

    let mut report = OptimalityReport {
        active_set_a1: Vec::new(),
        tight_zero_set_a2: Vec::new(),
        ratio_sum_a1: 0.0,
        ratio_sum_a: 0.0,
        max_constraint_violation: 0.0,
    };
    let mut violation: f64 = 0.0;
    for a in (0..means.len()).filter(|&a| a != best) {
        let z = family.weighted_index(pooled(best), means[best], pooled(a), means[a]);
        violation = violation.max((threshold - z).max(0.0) / scale);
        if alloc[a] > 0.0 {
            report.active_set_a1.push(a);
            violation = violation.max((z - threshold).abs() / scale);
            let r = ratio(a);
            report.ratio_sum_a1 += r;
            report.ratio_sum_a += r;
        } else if (z - threshold).abs() <= OPTIMALITY_TOLERANCE * scale {
            report.tight_zero_set_a2.push(a);
            report.ratio_sum_a += ratio(a);
        }
    }
    violation = violation.max(report.ratio_sum_a1 - 1.0);
    if alloc[best] > 0.0 {
        violation = violation.max(1.0 - report.ratio_sum_a);
    }
    report.max_constraint_violation = violation;
    report
}

fn check_simplex(p: &[f64], k: usize) -> Result<(), OracleError> {
    expect_len(p.len(), k)?;
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(OracleError::InvalidParameter(format!("{p:?} is not a probability vector")));
    }
    Ok(())
}

const V_EPSILON: f64 = 1e-12;

/// Max-min characteristic value at offline fraction `z` with offline
/// proportions `p`, together with the maximising online proportions.
///
/// For a target level `c`, the cheapest online mass reaching `c` on every
/// constraint (offline weights `z p`) is a sample-count problem; its total is
/// increasing in `c`, so the value is the level at which that total equals the
/// online budget `1 - z`.
pub fn eval_v(instance: &BanditInstance, z: f64, p: &[f64]) -> Result<(f64, Vec<f64>), OracleError> {
    let k = instance.num_arms();
    if !(0.0..=1.0).contains(&z) {
        return Err(OracleError::InvalidParameter(format!("offline fraction {z} outside [0, 1]")));
    }
    check_simplex(p, k)?;
    let family = instance.family();
    let means = instance.means();
    let best = instance.best();
    let offline: Vec<f64> = p.iter().map(|&pa| z * pa).collect();
    let uniform = vec![1.0 / k as f64; k];
    let level_at = |weights: &dyn Fn(usize) -> f64| {
        (0..k)
            .filter(|&a| a != best)
            .map(|a| family.weighted_index(weights(best), means[best], weights(a), means[a]))
            .fold(f64::INFINITY, f64::min)
    };

    let budget = 1.0 - z;
    let floor = level_at(&|a| offline[a]);
    if budget <= 0.0 {
        return Ok((floor, uniform));
    }
    let ceiling = level_at(&|a| offline[a] + budget);

    let cost = |level: f64| -> Result<Allocation, OracleError> {
        let config = SolverConfig::new(level)?.with_epsilon(V_EPSILON);
        AllocationProblem::new(family, means, &offline, config)?.solve()
    };
    let (mut lo, mut hi) = (floor, ceiling);
    let mut alloc_lo = Allocation::zeros(k);
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let alloc = cost(mid)?;
        if alloc.total() <= budget {
            lo = mid;
            alloc_lo = alloc;
        } else {
            hi = mid;
        }
    }
    let w = alloc_lo.proportions().unwrap_or(uniform);
    Ok((lo, w))
}

/// Optimal offline fraction and online proportions in normalized form.
///
/// `z*` is the largest `z` with `V(z) >= z * threshold / tau1`, where the
/// threshold is the plug-in `log(1/delta) + log log(1/delta)`.
pub fn solve_p3(instance: &BanditInstance, p: &[f64], tau1: f64, delta: f64) -> Result<NormalizedSolution, OracleError> {
    let k = instance.num_arms();
    let threshold = plug_in_threshold(delta)?;
    if !(tau1 >= 0.0) || !tau1.is_finite() {
        return Err(OracleError::InvalidParameter(format!("tau1 {tau1} must be finite and >= 0")));
    }
    if tau1 == 0.0 {
        let uniform = vec![1.0 / k as f64; k];
        let (_, w) = eval_v(instance, 0.0, &uniform)?;
        return Ok(NormalizedSolution { z: 0.0, w });
    }
    let slack = |z: f64| -> Result<f64, OracleError> { Ok(eval_v(instance, z, p)?.0 - z * threshold / tau1) };
    if slack(1.0)? >= 0.0 {
        return Ok(NormalizedSolution { z: 1.0, w: vec![1.0 / k as f64; k] });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slack(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, w) = eval_v(instance, lo, p)?;
    Ok(NormalizedSolution { z: lo, w })
}
