//! Comparison algorithms: o-o LUCB, the artificial-replay meta-algorithm and
//! o-o UCB for regret minimisation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{best_arm, BanditInstance, OfflineDataset, OracleError};
use crate::rewards::{ArmStreams, RewardSource};
use crate::spef::Family;
use crate::tas::{drive, BaiSampler, RunOptions, RunResult, TasError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("{0} arms are not supported by this algorithm")]
    UnsupportedFamily(Family),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// `C(tau1 + t, delta) = log(K (tau1+t)^2 / delta) + log(1 + log(K (tau1+t)^2 / delta))`.
pub fn lucb_confidence_radius(t: u64, tau1: u64, delta: f64, num_arms: usize) -> f64 {
    let n = (tau1 + t) as f64;
    let base = (num_arms as f64 * n * n / delta).ln();
    base + (1.0 + base).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexFamily {
    /// `mu_hat +- sqrt(C / (2 n))`.
    HoeffdingBound,
    /// Boundary of the KL ball `n d(mu_hat, x) <= C`.
    KlBound,
}

/// LUCB sampler. Each round pulls the leader and then the challenger; the
/// stopping rule is evaluated only between rounds.
#[derive(Debug, Clone)]
pub struct Lucb {
    family: Family,
    index: IndexFamily,
    delta: f64,
    tau1: u64,
    offline_counts: Vec<u64>,
    offline_sums: Vec<f64>,
    t: u64,
    counts: Vec<u64>,
    sums: Vec<f64>,
    pending: VecDeque<usize>,
    leader: usize,
    challenger: usize,
    gap: f64,
}

impl Lucb {
    pub fn new(family: Family, offline: &OfflineDataset, delta: f64, index: IndexFamily) -> Result<Self, TasError> {
        let k = offline.num_arms();
        if k < 2 {
            return Err(OracleError::TooFewArms(k).into());
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(TasError::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self {
            family,
            index,
            delta,
            tau1: offline.tau1(),
            offline_counts: offline.counts().to_vec(),
            offline_sums: offline.reward_sums().to_vec(),
            t: 0,
            counts: vec![0; k],
            sums: vec![0.0; k],
            pending: (0..k).collect(),
            leader: 0,
            challenger: 1,
            gap: f64::INFINITY,
        })
    }

    fn pooled_count(&self, a: usize) -> f64 {
        (self.offline_counts[a] + self.counts[a]) as f64
    }

    pub fn pooled_means(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|a| (self.offline_sums[a] + self.sums[a]) / self.pooled_count(a))
            .collect()
    }

    /// Lower and upper confidence bounds of every arm at the current time.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let c = lucb_confidence_radius(self.t, self.tau1, self.delta, self.counts.len());
        let means = self.pooled_means();
        (0..self.counts.len())
            .map(|a| {
                let (m, n) = (means[a], self.pooled_count(a));
                match self.index {
                    IndexFamily::HoeffdingBound => {
                        let r = (c / (2.0 * n)).sqrt();
                        (m - r, m + r)
                    }
                    IndexFamily::KlBound => {
                        let m = self.family.clamp_mean(m);
                        (self.family.kl_lower_confidence(m, n, c), self.family.kl_upper_confidence(m, n, c))
                    }
                }
            })
            .unzip()
    }

    pub fn leader(&self) -> usize {
        self.leader
    }

    pub fn challenger(&self) -> usize {
        self.challenger
    }

    /// `B(t) = U_challenger - L_leader`; infinite before initialisation.
    pub fn gap_statistic(&self) -> f64 {
        self.gap
    }

    fn update_round(&mut self) {
        let (lower, upper) = self.bounds();
        self.leader = best_arm(&self.pooled_means());
        self.challenger = (0..self.counts.len())
            .filter(|&a| a != self.leader)
            .fold(None, |best: Option<usize>, a| match best {
                Some(b) if upper[b] >= upper[a] => Some(b),
                _ => Some(a),
            })
            .expect("at least two arms");
        self.gap = upper[self.challenger] - lower[self.leader];
    }
}

impl BaiSampler for Lucb {
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
        (self.pending.is_empty() && self.gap < 0.0).then_some(self.leader)
    }

    fn empirical_best(&self) -> usize {
        best_arm(&self.pooled_means())
    }

    fn statistic(&self) -> (f64, f64) {
        (self.gap, 0.0)
    }

    fn next_arm(&mut self) -> Result<usize, TasError> {
        if self.pending.is_empty() {
            self.pending.extend([self.leader, self.challenger]);
        }
        Ok(self.pending[0])
    }

    fn observe(&mut self, arm: usize, reward: f64) {
        debug_assert_eq!(self.pending.front(), Some(&arm));
        self.pending.pop_front();
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.t += 1;
        if self.pending.is_empty() {
            self.update_round();
        }
    }
}

/// Runs o-o LUCB with per-arm reward streams seeded by `seed`.
pub fn lucb_run(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    delta: f64,
    index: IndexFamily,
    seed: u64,
    options: &RunOptions,
) -> Result<RunResult, TasError> {
    let mut source = ArmStreams::new(instance, seed);
    lucb_run_with_source(instance, offline, delta, index, &mut source, options)
}

pub fn lucb_run_with_source<R: RewardSource + ?Sized>(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    delta: f64,
    index: IndexFamily,
    source: &mut R,
    options: &RunOptions,
) -> Result<RunResult, TasError> {
    let mut sampler = Lucb::new(instance.family(), offline, delta, index)?;
    drive(&mut sampler, source, instance.best(), options, |_| {})
}

/// Per-arm FIFO queues of unconsumed offline rewards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    queues: Vec<VecDeque<f64>>,
    consumed: Vec<u64>,
}

impl ReplayBuffer {
    pub fn new(samples: Vec<Vec<f64>>) -> Self {
        let consumed = vec![0; samples.len()];
        Self { queues: samples.into_iter().map(VecDeque::from).collect(), consumed }
    }

    pub fn take(&mut self, arm: usize) -> Option<f64> {
        let r = self.queues.get_mut(arm)?.pop_front()?;
        self.consumed[arm] += 1;
        Some(r)
    }

    pub fn remaining(&self, arm: usize) -> usize {
        self.queues.get(arm).map_or(0, VecDeque::len)
    }

    pub fn consumed(&self) -> &[u64] {
        &self.consumed
    }
}

/// Serves each request from the buffer when possible, otherwise draws fresh.
struct ReplaySource<'a, R: ?Sized> {
    buffer: ReplayBuffer,
    fresh: &'a mut R,
    fresh_counts: Vec<u64>,
}

impl<R: RewardSource + ?Sized> RewardSource for ReplaySource<'_, R> {
    fn sample(&mut self, arm: usize) -> f64 {
        match self.buffer.take(arm) {
            Some(r) => r,
            None => {
                self.fresh_counts[arm] += 1;
                self.fresh.sample(arm)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayAccounting {
    /// Offline rewards handed to the base sampler, per arm.
    pub consumed_offline: Vec<u64>,
    /// Fresh online samples, per arm.
    pub fresh_online: Vec<u64>,
    /// Total samples the base sampler asked for, per arm.
    pub base_demand: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRun {
    /// `stop_time` and `final_counts` count fresh online samples only.
    pub result: RunResult,
    pub accounting: ReplayAccounting,
}

/// Artificial replay around `base`, which must start without offline data.
pub fn artificial_replay_with_source<S, R>(
    base: &mut S,
    offline_samples: Vec<Vec<f64>>,
    source: &mut R,
    true_best: usize,
    options: &RunOptions,
) -> Result<ReplayRun, TasError>
where
    S: BaiSampler,
    R: RewardSource + ?Sized,
{
    let k = base.num_arms();
    if offline_samples.len() > k {
        return Err(TasError::InvalidParameter(format!(
            "{} offline reward lists for {k} arms",
            offline_samples.len()
        )));
    }
    let mut replay = ReplaySource { buffer: ReplayBuffer::new(offline_samples), fresh: source, fresh_counts: vec![0; k] };
    // The base sampler's own budget covers replayed samples too.
    let outcome = drive(base, &mut replay, true_best, options, |_| {});
    let mut consumed = replay.buffer.consumed().to_vec();
    consumed.resize(k, 0);
    let fresh = replay.fresh_counts;
    let finish = |mut result: RunResult| {
        let accounting = ReplayAccounting {
            consumed_offline: consumed.clone(),
            fresh_online: fresh.clone(),
            base_demand: result.final_counts.clone(),
        };
        result.stop_time = fresh.iter().sum();
        result.final_counts = fresh.clone();
        ReplayRun { result, accounting }
    };
    match outcome {
        Ok(result) => Ok(finish(result)),
        Err(TasError::BudgetExhausted { partial }) => {
            Err(TasError::BudgetExhausted { partial: Box::new(finish(*partial).result) })
        }
        Err(e) => Err(e),
    }
}

/// Artificial replay with fresh samples from streams seeded by `seed`.
pub fn artificial_replay_run<S: BaiSampler>(
    instance: &BanditInstance,
    offline_samples: Vec<Vec<f64>>,
    base: &mut S,
    seed: u64,
    options: &RunOptions,
) -> Result<ReplayRun, TasError> {
    let mut source = ArmStreams::new(instance, seed);
    artificial_replay_with_source(base, offline_samples, &mut source, instance.best(), options)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretOutcome {
    /// Online pulls per arm.
    pub pulls: Vec<u64>,
    /// `sum_a pulls_a * gap_a`.
    pub regret: f64,
}

/// o-o UCB on unit-variance Gaussian arms for `horizon` online rounds, with
/// index `mu_hat + sqrt(4 log t / (N_off + N))`.
pub fn oo_ucb_regret_with_source<R: RewardSource + ?Sized>(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    horizon: u64,
    source: &mut R,
) -> Result<RegretOutcome, BaselineError> {
    if instance.family() != Family::Gaussian {
        return Err(BaselineError::UnsupportedFamily(instance.family()));
    }
    let k = instance.num_arms();
    if offline.num_arms() != k {
        return Err(OracleError::LengthMismatch { expected: k, got: offline.num_arms() }.into());
    }
    if horizon < k as u64 {
        return Err(BaselineError::InvalidParameter(format!("horizon {horizon} is shorter than {k} arms")));
    }
    let mut n: Vec<f64> = offline.counts_f64();
    let mut sums = offline.reward_sums().to_vec();
    let mut pulls = vec![0u64; k];
    let mut pull = |a: usize, n: &mut [f64], sums: &mut [f64]| {
        sums[a] += source.sample(a);
        n[a] += 1.0;
        pulls[a] += 1;
    };
    for a in 0..k {
        pull(a, &mut n, &mut sums);
    }
    for t in k as u64..horizon {
        let log_t = (t as f64).ln();
        let ucb: Vec<f64> = (0..k).map(|a| sums[a] / n[a] + (4.0 * log_t / n[a]).sqrt()).collect();
        pull(best_arm(&ucb), &mut n, &mut sums);
    }
    let regret = (0..k).map(|a| pulls[a] as f64 * instance.gap(a)).sum();
    Ok(RegretOutcome { pulls, regret })
}

pub fn oo_ucb_regret_run(
    instance: &BanditInstance,
    offline: &OfflineDataset,
    horizon: u64,
    seed: u64,
) -> Result<RegretOutcome, BaselineError> {
    let mut source = ArmStreams::new(instance, seed);
    oo_ucb_regret_with_source(instance, offline, horizon, &mut source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tas::BatchTas;

    #[test]
    fn radius_examples() {
        let delta = 2.0 / std::f64::consts::E;
        let c = lucb_confidence_radius(1, 0, delta, 2);
        assert!((c - (1.0 + 2f64.ln())).abs() < 1e-12);
        let mut last = 0.0;
        for t in 1..2000 {
            let c = lucb_confidence_radius(t, 10, 0.05, 4);
            assert!(c >= last);
            last = c;
        }
        assert!(lucb_confidence_radius(5, 0, 0.01, 3) > lucb_confidence_radius(5, 0, 0.1, 3));
    }

    #[test]
    fn lucb_separated_instance_stops_at_first_check() {
        let inst = BanditInstance::new(Family::Bernoulli, vec![0.9, 0.1, 0.2]).unwrap();
        let n = 20_000u64;
        let offline =
            OfflineDataset::new(vec![n; 3], inst.means().iter().map(|m| m * n as f64).collect()).unwrap();
        for index in [IndexFamily::HoeffdingBound, IndexFamily::KlBound] {
            let r = lucb_run(&inst, &offline, 0.05, index, 1, &RunOptions::default()).unwrap();
            assert_eq!(r.stop_time, 3);
            assert!(r.correct);
        }
    }

    #[test]
    fn lucb_rounds_pull_leader_and_challenger() {
        let inst = BanditInstance::new(Family::Bernoulli, vec![0.8, 0.5, 0.3]).unwrap();
        let mut lucb = Lucb::new(inst.family(), &OfflineDataset::empty(3), 0.05, IndexFamily::KlBound).unwrap();
        let mut source = ArmStreams::new(&inst, 4);
        for _ in 0..3 {
            let a = lucb.next_arm().unwrap();
            lucb.observe(a, source.sample(a));
        }
        for _ in 0..50 {
            assert!(lucb.gap_statistic().is_finite());
            let (l, c) = (lucb.leader(), lucb.challenger());
            assert_ne!(l, c);
            let (lower, upper) = lucb.bounds();
            assert!((lucb.gap_statistic() - (upper[c] - lower[l])).abs() < 1e-12);
            let before = lucb.time();
            for expected in [l, c] {
                let a = lucb.next_arm().unwrap();
                assert_eq!(a, expected);
                lucb.observe(a, source.sample(a));
            }
            assert_eq!(lucb.time(), before + 2);
        }
    }

    #[test]
    fn lucb_is_deterministic() {
        let inst = BanditInstance::new(Family::Bernoulli, vec![0.7, 0.4]).unwrap();
        let offline = OfflineDataset::empty(2);
        let a = lucb_run(&inst, &offline, 0.1, IndexFamily::HoeffdingBound, 9, &RunOptions::default()).unwrap();
        let b = lucb_run(&inst, &offline, 0.1, IndexFamily::HoeffdingBound, 9, &RunOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.stop_time - 2) % 2, 0);
    }

    #[test]
    fn empty_buffer_replay_matches_base() {
        let inst = BanditInstance::new(Family::Gaussian, vec![1.0, 0.0]).unwrap();
        let options = RunOptions::default();
        let direct = crate::tas::run(&inst, &OfflineDataset::empty(2), 0.01, 3, &options).unwrap();
        let mut base = BatchTas::new(inst.family(), &OfflineDataset::empty(2), 0.01).unwrap();
        let replay = artificial_replay_run(&inst, vec![vec![], vec![]], &mut base, 3, &options).unwrap();
        assert_eq!(replay.result.stop_time, direct.stop_time);
        assert_eq!(replay.result.final_counts, direct.final_counts);
        assert_eq!(replay.accounting.consumed_offline, vec![0, 0]);
    }

    #[test]
    fn replay_accounting_adds_up() {
        let inst = BanditInstance::new(Family::Gaussian, vec![1.0, 0.0]).unwrap();
        let buffer = vec![vec![1.0; 5], vec![0.1, -0.2]];
        let mut base = BatchTas::new(inst.family(), &OfflineDataset::empty(2), 0.01).unwrap();
        let run = artificial_replay_run(&inst, buffer, &mut base, 8, &RunOptions::default()).unwrap();
        let acc = &run.accounting;
        for a in 0..2 {
            assert_eq!(acc.consumed_offline[a] + acc.fresh_online[a], acc.base_demand[a]);
        }
        // Both buffers are exhausted long before stopping.
        assert_eq!(acc.consumed_offline, vec![5, 2]);
        assert_eq!(run.result.stop_time, acc.fresh_online.iter().sum::<u64>());
    }

    #[test]
    fn replay_buffer_is_fifo() {
        let mut buf = ReplayBuffer::new(vec![vec![1.0, 2.0], vec![]]);
        assert_eq!(buf.take(0), Some(1.0));
        assert_eq!(buf.take(1), None);
        assert_eq!(buf.take(0), Some(2.0));
        assert_eq!(buf.take(0), None);
        assert_eq!(buf.consumed(), &[2, 0]);
        assert_eq!(buf.remaining(0), 0);
    }

    #[test]
    fn ucb_regret_bookkeeping() {
        let inst = BanditInstance::new(Family::Gaussian, vec![0.5, 0.0, 0.25]).unwrap();
        let out = oo_ucb_regret_run(&inst, &OfflineDataset::empty(3), 2_000, 1).unwrap();
        assert_eq!(out.pulls.iter().sum::<u64>(), 2_000);
        assert!(out.pulls.iter().all(|&p| p >= 1));
        let expected = out.pulls[1] as f64 * 0.5 + out.pulls[2] as f64 * 0.25;
        assert_eq!(out.regret, expected);
        assert!(out.pulls[0] > out.pulls[1]);
    }

    #[test]
    fn ucb_large_offline_keeps_suboptimal_pulls_at_one() {
        let inst = BanditInstance::new(Family::Gaussian, vec![0.5, 0.0]).unwrap();
        let t = 10_000u64;
        let n2 = (8.0 * (t as f64).ln() / 0.25).ceil() as u64 + 1;
        let offline = OfflineDataset::new(vec![0, n2], vec![0.0, 0.0]).unwrap();
        let out = oo_ucb_regret_run(&inst, &offline, t, 2).unwrap();
        assert!(out.pulls[1] <= 3, "{:?}", out.pulls);
    }

    #[test]
    fn ucb_rejects_bernoulli() {
        let inst = BanditInstance::new(Family::Bernoulli, vec![0.5, 0.2]).unwrap();
        assert_eq!(
            oo_ucb_regret_run(&inst, &OfflineDataset::empty(2), 100, 0),
            Err(BaselineError::UnsupportedFamily(Family::Bernoulli))
        );
    }
}
