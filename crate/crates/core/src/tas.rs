//! Batched Track-and-Stop with GLRT stopping.
//!
//! After one pull of every arm, the sampler tracks a running average `w(t)` of
//! target proportions. Whenever `floor(t / K)` is a perfect square it mixes in
//! uniform proportions instead (forced exploration); every `K`-th such round it
//! re-solves the allocation problem on the current pooled means to refresh the
//! target `w_hat`. Arms are chosen by `argmax_a w_a(t + 1) / N_a(t)`. The run
//! stops when the smallest pairwise index of the empirical best arm reaches
//! `beta(tau1 + t, delta)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{best_arm, AllocationProblem, BanditInstance, OfflineDataset, OracleError, SolverConfig};
use crate::rewards::{ArmStreams, RewardSource};
use crate::spef::Family;

pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TasError {
    #[error("online budget of {} samples exhausted before stopping", .partial.stop_time)]
    BudgetExhausted { partial: Box<RunResult> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub arm: usize,
    pub statistic: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Online samples drawn before stopping.
    pub stop_time: u64,
    pub recommended_arm: usize,
    pub correct: bool,
    pub final_counts: Vec<u64>,
    pub trace: Option<Vec<TraceRow>>,
    /// Allocation-problem solves; zero for samplers without an oracle.
    pub oracle_calls: u64,
    /// Steps at which some arm left the tracking band (only checked for
    /// Track-and-Stop runs).
    pub tracking_violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_steps: u64,
    pub record_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, record_trace: false }
    }
}

/// Sequential sampler seen from the outside: ask for an arm, feed back its
/// reward, and check whether it has committed to a recommendation.
pub trait BaiSampler {
    fn num_arms(&self) -> usize;
    /// Samples fed to the sampler so far.
    fn time(&self) -> u64;
    fn counts(&self) -> &[u64];
    /// The recommended arm once the stopping rule has fired.
    fn recommendation(&self) -> Option<usize>;
    /// Arm the sampler would recommend if forced to stop now.
    fn empirical_best(&self) -> usize;
    /// Current stopping statistic and the value it is compared against.
    fn statistic(&self) -> (f64, f64);
    fn next_arm(&mut self) -> Result<usize, TasError>;
    fn observe(&mut self, arm: usize, reward: f64);
    fn oracle_calls(&self) -> u64 {
        0
    }
}

/// Runs `sampler` against `source` until it stops. `after_step` sees the
/// sampler after every observation.
pub fn drive<S, R>(
    sampler: &mut S,
    source: &mut R,
    true_best: usize,
    options: &RunOptions,
    mut after_step: impl FnMut(&S),
) -> Result<RunResult, TasError>
where
    S: BaiSampler,
    R: RewardSource + ?Sized,
{
    let mut trace = options.record_trace.then(Vec::new);
    let finish = |sampler: &S, trace: Option<Vec<TraceRow>>, recommended: usize| RunResult {
        stop_time: sampler.time(),
        recommended_arm: recommended,
        correct: recommended == true_best,
        final_counts: sampler.counts().to_vec(),
        trace,
        oracle_calls: sampler.oracle_calls(),
        tracking_violations: 0,
    };
    loop {
        if let Some(arm) = sampler.recommendation() {
            return Ok(finish(sampler, trace, arm));
        }
        if sampler.time() >= options.max_steps {
            let partial = finish(sampler, trace, sampler.empirical_best());
            return Err(TasError::BudgetExhausted { partial: Box::new(partial) });
        }
        let arm = sampler.next_arm()?;
        let (statistic, threshold) = sampler.statistic();
        let reward = source.sample(arm);
        sampler.observe(arm, reward);
        if let Some(rows) = trace.as_mut() {
            rows.push(TraceRow { t: sampler.time(), arm, statistic, threshold });
        }
        after_step(sampler);
    }
}

/// GLRT threshold `log((K-1)/delta) + 6 log(log(t/2) + 1) + 8 log(1 + log((K-1)/delta))`,
/// with `log(t/2)` floored at zero for `t < 2`.
pub fn beta_threshold(t_total: u64, delta: f64, num_arms: usize) -> f64 {
    let base = ((num_arms as f64 - 1.0) / delta).ln();
    let time_term = ((t_total as f64 / 2.0).ln().max(0.0) + 1.0).ln();
    base + 6.0 * time_term + 8.0 * (1.0 + base).ln()
}

/// Which threshold the GLRT statistic is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingThreshold {
    /// [`beta_threshold`].
    #[default]
    Theoretical,
    /// `log((1 + log t) / delta)`, the usual choice in Track-and-Stop
    /// experiments; no correctness guarantee.
    Practical,
}

impl StoppingThreshold {
    pub fn value(self, t_total: u64, delta: f64, num_arms: usize) -> f64 {
        match self {
            Self::Theoretical => beta_threshold(t_total, delta, num_arms),
            Self::Practical => ((1.0 + (t_total.max(1) as f64).ln()) / delta).ln(),
        }
    }
}

/// `argmax_a w_a / N_a`; the lowest index wins ties.
pub fn track_select(w: &[f64], counts: &[u64]) -> usize {
    debug_assert!(counts.iter().all(|&n| n >= 1));
    let mut best = 0;
    let mut best_ratio = w[0] / counts[0] as f64;
    for a in 1..w.len() {
        let ratio = w[a] / counts[a] as f64;
        if ratio > best_ratio {
            best = a;
            best_ratio = ratio;
        }
    }
    best
}

/// `N_a(t) in [t w_a(t) - K - 1, t w_a(t) + 1]` for every arm.
pub fn within_tracking_band(t: u64, w: &[f64], counts: &[u64]) -> bool {
    let k = w.len() as f64;
    let slack = 1e-9 * t as f64;
    w.iter().zip(counts).all(|(&wa, &n)| {
        let target = t as f64 * wa;
        let n = n as f64;
        n >= target - k - 1.0 - slack && n <= target + 1.0 + slack
    })
}

fn is_perfect_square(n: u64) -> bool {
    let r = n.isqrt();
    r * r == n
}

/// Constraint level of the allocation problem that sets the tracking target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetLevel {
    /// `log(1/delta) + log log(1/delta)`, fixed for the whole run. Arms whose
    /// offline samples already meet this level get no tracked share and are
    /// then only reached through forced exploration.
    PlugIn,
    /// The stopping threshold at the time of the solve.
    #[default]
    Stopping,
}

/// Sampler state for one Batch Track-and-Stop run.
#[derive(Debug, Clone)]
pub struct BatchTas {
    family: Family,
    delta: f64,
    tau1: u64,
    offline_counts: Vec<u64>,
    offline_sums: Vec<f64>,
    solver: SolverConfig,
    level: TargetLevel,
    stopping: StoppingThreshold,
    t: u64,
    counts: Vec<u64>,
    sums: Vec<f64>,
    pooled_means: Vec<f64>,
    w: Vec<f64>,
    w_hat: Vec<f64>,
    explore_count: usize,
    oracle_calls: u64,
    // (statistic, empirical best) after the latest observation
    stat: (f64, usize),
}

impl BatchTas {
    pub fn new(family: Family, offline: &OfflineDataset, delta: f64) -> Result<Self, TasError> {
        let k = offline.num_arms();
        if k < 2 {
            return Err(OracleError::TooFewArms(k).into());
        }
        let solver = SolverConfig::plug_in(delta)?;
        let uniform = vec![1.0 / k as f64; k];
        let mut tas = Self {
            family,
            delta,
            tau1: offline.tau1(),
            offline_counts: offline.counts().to_vec(),
            offline_sums: offline.reward_sums().to_vec(),
            solver,
            level: TargetLevel::default(),
            stopping: StoppingThreshold::default(),
            t: 0,
            counts: vec![0; k],
            sums: vec![0.0; k],
            pooled_means: vec![0.0; k],
            w: uniform.clone(),
            w_hat: uniform,
            explore_count: 0,
            oracle_calls: 0,
            stat: (0.0, 0),
        };
        for a in 0..k {
            tas.refresh_mean(a);
        }
        Ok(tas)
    }

    pub fn with_target_level(mut self, level: TargetLevel) -> Self {
        self.level = level;
        self
    }

    pub fn with_stopping_threshold(mut self, stopping: StoppingThreshold) -> Self {
        self.stopping = stopping;
        self
    }

    pub fn tracked_weights(&self) -> &[f64] {
        &self.w
    }

    pub fn target_weights(&self) -> &[f64] {
        &self.w_hat
    }

    pub fn pooled_means(&self) -> &[f64] {
        &self.pooled_means
    }

    pub fn explore_count(&self) -> usize {
        self.explore_count
    }

    fn initialized(&self) -> bool {
        self.counts.iter().all(|&n| n > 0)
    }

    fn pooled_count(&self, a: usize) -> f64 {
        (self.offline_counts[a] + self.counts[a]) as f64
    }

    fn refresh_mean(&mut self, a: usize) {
        let n = self.pooled_count(a);
        let raw = if n > 0.0 { (self.offline_sums[a] + self.sums[a]) / n } else { 0.0 };
        self.pooled_means[a] = self.family.clamp_mean(raw);
    }

    fn compute_statistic(&self) -> (f64, usize) {
        let best = best_arm(&self.pooled_means);
        let value = (0..self.counts.len())
            .filter(|&b| b != best)
            .map(|b| {
                self.family.weighted_index(
                    self.pooled_count(best),
                    self.pooled_means[best],
                    self.pooled_count(b),
                    self.pooled_means[b],
                )
            })
            .fold(f64::INFINITY, f64::min);
        (value, best)
    }

    /// Target proportions from the allocation problem at the pooled means.
    fn solve_target(&self) -> Result<Vec<f64>, TasError> {
        let k = self.counts.len();
        let offline: Vec<f64> = self.offline_counts.iter().map(|&n| n as f64).collect();
        let uniform = || vec![1.0 / k as f64; k];
        let solver = match self.level {
            TargetLevel::PlugIn => self.solver,
            TargetLevel::Stopping => {
                let beta = self.stopping.value(self.tau1 + self.t, self.delta, k);
                SolverConfig::new(beta)?.with_epsilon(self.solver.epsilon)
            }
        };
        let problem = match AllocationProblem::new(self.family, &self.pooled_means, &offline, solver) {
            Ok(p) => p,
            Err(OracleError::TiedBest(..)) => return Ok(uniform()),
            Err(e) => return Err(e.into()),
        };
        Ok(problem.solve()?.proportions().unwrap_or_else(uniform))
    }
}

impl BaiSampler for BatchTas {
    fn num_arms(&self) -> usize {
        self.counts.len()
    }

    fn time(&self) -> u64 {
        self.t
    }

    fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn recommendation(&self) -> Option<usize> {
        if !self.initialized() {
            return None;
        }
        let (value, best) = self.stat;
        (value >= self.statistic().1).then_some(best)
    }

    fn empirical_best(&self) -> usize {
        best_arm(&self.pooled_means)
    }

    fn statistic(&self) -> (f64, f64) {
        let threshold = self.stopping.value(self.tau1 + self.t, self.delta, self.counts.len());
        (self.stat.0, threshold)
    }

    fn next_arm(&mut self) -> Result<usize, TasError> {
        if let Some(a) = self.counts.iter().position(|&n| n == 0) {
            return Ok(a);
        }
        let k = self.counts.len();
        let t = self.t as f64;
        let keep = t / (t + 1.0);
        let add = 1.0 / (t + 1.0);
        if is_perfect_square(self.t / k as u64) {
            let refresh = (self.explore_count + 1) % k == 0;
            let target = if refresh { Some(self.solve_target()?) } else { None };
            self.explore_count += 1;
            for wa in self.w.iter_mut() {
                *wa = keep * *wa + add / k as f64;
            }
            if let Some(target) = target {
                self.w_hat = target;
                self.oracle_calls += 1;
                self.explore_count = 0;
            }
        } else {
            for (wa, &target) in self.w.iter_mut().zip(&self.w_hat) {
                *wa = keep * *wa + add * target;
            }
        }
        Ok(track_select(&self.w, &self.counts))
    }

    fn observe(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.t += 1;
        self.refresh_mean(arm);
        if self.initialized() {
            self.stat = self.compute_statistic();
        }
    }

    fn oracle_calls(&self) -> u64 {
        self.oracle_calls
    }
}

/// Drives a prepared Batch Track-and-Stop sampler to completion, counting
/// tracking-band violations along the way.
pub fn run_sampler<R: RewardSource + ?Sized>(
    mut sampler: BatchTas,
    true_best: usize,
    source: &mut R,
    options: &RunOptions,
) -> Result<RunResult, TasError> {
    let k = sampler.num_arms() as u64;
    let mut violations = 0;
    let result = drive(&mut sampler, source, true_best, options, |s: &BatchTas| {
        if s.t >= k && !within_tracking_band(s.t, &s.w, &s.counts) {
            violations += 1;
        }
    });
    match result {
        Ok(mut r) => {
            r.tracking_violations = violations;
            Ok(r)
        }
        Err(TasError::BudgetExhausted { mut partial }) => {
            partial.tracking_violations = violations;
            Err(TasError::BudgetExhausted { partial })
        }
        Err(e) => Err(e),
    }
}

/// Runs Batch Track-and-Stop against an arbitrary reward source.
pub fn run_with_source<R: RewardSource + ?Sized>(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    delta: f64,
    source: &mut R,
    options: &RunOptions,
) -> Result<RunResult, TasError> {
    let sampler = BatchTas::new(instance.family(), offline, delta)?;
    run_sampler(sampler, instance.best(), source, options)
}

/// Runs Batch Track-and-Stop with rewards drawn from per-arm streams seeded by
/// `seed`. Deterministic in its arguments.
pub fn run(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    delta: f64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunResult, TasError> {
    let mut source = ArmStreams::new(instance, seed);
    run_with_source(instance, offline, delta, &mut source, options)
}
