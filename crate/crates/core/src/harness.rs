//! Experiment orchestration: offline data generation, Monte-Carlo sweeps over
//! offline sample sizes, aggregation, CSV/JSON/SVG output and the invariant
//! battery behind `verify`.
//!
//! Seeding: trial `i` of a sweep uses seed `derive_seed([master_seed, i])` for
//! every algorithm and every offline size. Each arm draws from its own stream
//! (see [`crate::rewards`]); offline samples are the first rewards of those
//! streams and online pulls continue them. Runs that differ only in algorithm
//! or offline size therefore see the same reward sequence per arm.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    artificial_replay_with_source, lucb_run_with_source, oo_ucb_regret_with_source, BaselineError, IndexFamily,
};
use crate::oracle::{
    check_optimality, solve_p2, solve_p3, Allocation, AllocationProblem, BanditInstance, OfflineDataset, OracleError,
    SolverConfig, OPTIMALITY_TOLERANCE,
};
use crate::rewards::{derive_seed, ArmStreams, RewardSource};
use crate::spef::Family;
use crate::tas::{
    run_sampler, BatchTas, RunOptions, StoppingThreshold, TargetLevel, TasError, TraceRow, DEFAULT_MAX_STEPS,
};

const CUSTOM_POLICY_TAG: u64 = 0x0FF1_1CE5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Tas(#[from] TasError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmId {
    Tas,
    LucbH,
    LucbKl,
    Replay,
    UcbRegret,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 5] = [Self::Tas, Self::LucbH, Self::LucbKl, Self::Replay, Self::UcbRegret];

    pub fn name(self) -> &'static str {
        match self {
            Self::Tas => "tas",
            Self::LucbH => "lucb-h",
            Self::LucbKl => "lucb-kl",
            Self::Replay => "replay",
            Self::UcbRegret => "ucb-regret",
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OfflinePolicy {
    /// Round-robin over all arms.
    Uniform,
    /// Round-robin over every arm except the best one.
    UniformExcludeBest,
    /// Multinomial counts with these probabilities.
    Custom { weights: Vec<f64> },
}

impl OfflinePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::UniformExcludeBest => "uniform-exclude-best",
            Self::Custom { .. } => "custom",
        }
    }

    fn validate(&self, num_arms: usize) -> Result<(), HarnessError> {
        match self {
            Self::Uniform => Ok(()),
            Self::UniformExcludeBest if num_arms < 2 => {
                Err(HarnessError::Config("uniform-exclude-best needs at least two arms".into()))
            }
            Self::UniformExcludeBest => Ok(()),
            Self::Custom { weights } => {
                let sum: f64 = weights.iter().sum();
                if weights.len() != num_arms {
                    Err(HarnessError::Config(format!("{} custom weights for {num_arms} arms", weights.len())))
                } else if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    Err(HarnessError::Config(format!("custom weights {weights:?} are not on the simplex")))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn round_robin_arms(&self, instance: &BanditInstance) -> Option<Vec<usize>> {
        let k = instance.num_arms();
        match self {
            Self::Uniform => Some((0..k).collect()),
            Self::UniformExcludeBest => Some((0..k).filter(|&a| a != instance.best()).collect()),
            Self::Custom { .. } => None,
        }
    }
}

fn default_name() -> String {
    "experiment".into()
}

/// Sweep description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used in output file names.
    #[serde(default = "default_name")]
    pub name: String,
    pub family: Family,
    pub means: Vec<f64>,
    pub delta: f64,
    pub offline_policy: OfflinePolicy,
    pub offline_sizes: Vec<u64>,
    pub trials: usize,
    pub algorithms: Vec<AlgorithmId>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Online rounds for `ucb-regret`.
    #[serde(default)]
    pub horizon: Option<u64>,
    /// Record per-trial wall time; off keeps CSV output byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub stopping_threshold: StoppingThreshold,
    #[serde(default)]
    pub target_level: TargetLevel,
    #[serde(default)]
    pub max_steps: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn instance(&self) -> Result<BanditInstance, HarnessError> {
        Ok(BanditInstance::new(self.family, self.means.clone())?)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions { max_steps: self.max_steps.unwrap_or(DEFAULT_MAX_STEPS), record_trace: false }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let instance = self.instance()?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(HarnessError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        self.offline_policy.validate(instance.num_arms())?;
        if self.algorithms.contains(&AlgorithmId::UcbRegret) {
            match self.horizon {
                None => return Err(HarnessError::Config("ucb-regret needs `horizon`".into())),
                Some(h) if h < instance.num_arms() as u64 => {
                    return Err(HarnessError::Config(format!("horizon {h} is shorter than the number of arms")))
                }
                _ => {}
            }
            if self.family != Family::Gaussian {
                return Err(BaselineError::UnsupportedFamily(self.family).into());
            }
        }
        Ok(())
    }

    /// Seed shared by every run of trial `trial`.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(&[self.master_seed, trial as u64])
    }

    fn tas_sampler(&self, offline: &OfflineDataset) -> Result<BatchTas, TasError> {
        Ok(BatchTas::new(self.family, offline, self.delta)?
            .with_stopping_threshold(self.stopping_threshold)
            .with_target_level(self.target_level))
    }
}

/// Offline data for one trial, plus the reward streams positioned right after it.
#[derive(Debug, Clone)]
pub struct OfflineSample {
    pub dataset: OfflineDataset,
    /// Offline rewards per arm in the order they were drawn.
    pub rewards: Vec<Vec<f64>>,
    pub streams: ArmStreams,
}

/// Offline counts the policy assigns to `tau1` samples (custom weights are
/// multinomial and use `seed`).
pub fn offline_counts(
    policy: &OfflinePolicy,
    tau1: u64,
    instance: &BanditInstance,
    seed: u64,
) -> Result<Vec<u64>, HarnessError> {
    let k = instance.num_arms();
    policy.validate(k)?;
    let mut counts = vec![0u64; k];
    match (policy.round_robin_arms(instance), policy) {
        (Some(arms), _) => {
            let m = arms.len() as u64;
            for (i, &a) in arms.iter().enumerate() {
                counts[a] = tau1 / m + u64::from((i as u64) < tau1 % m);
            }
        }
        (None, OfflinePolicy::Custom { weights }) => {
            let dist = WeightedIndex::new(weights).map_err(|e| HarnessError::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, CUSTOM_POLICY_TAG]));
            for _ in 0..tau1 {
                counts[dist.sample(&mut rng)] += 1;
            }
        }
        (None, _) => unreachable!("only custom policies lack a round-robin order"),
    }
    Ok(counts)
}

/// Draws `tau1` offline samples under `policy` from the trial's arm streams.
pub fn generate_offline(
    policy: &OfflinePolicy,
    tau1: u64,
    instance: &BanditInstance,
    seed: u64,
) -> Result<OfflineSample, HarnessError> {
    let counts = offline_counts(policy, tau1, instance, seed)?;
    let mut streams = ArmStreams::new(instance, seed);
    let rewards: Vec<Vec<f64>> =
        counts.iter().enumerate().map(|(a, &n)| (0..n).map(|_| streams.sample(a)).collect()).collect();
    let sums = rewards.iter().map(|r| r.iter().sum()).collect();
    let dataset = OfflineDataset::new(counts, sums)?;
    Ok(OfflineSample { dataset, rewards, streams })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algorithm: AlgorithmId,
    pub tau1: u64,
    pub trial: usize,
    pub seed: u64,
    pub stop_time: u64,
    pub recommended_arm: usize,
    pub correct: bool,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    /// Tracking-band violations (Track-and-Stop only).
    pub tracking_violations: u64,
    /// The run hit the step budget or failed; its row counts as incorrect.
    pub failed: bool,
}

/// Runs one (algorithm, offline size, trial) cell of a sweep.
pub fn run_trial(
    config: &ExperimentConfig,
    instance: &BanditInstance,
    algorithm: AlgorithmId,
    tau1: u64,
    trial: usize,
) -> Result<TrialOutcome, HarnessError> {
    run_seeded(config, instance, algorithm, tau1, trial, config.trial_seed(trial), false).map(|(o, _)| o)
}

/// Runs one algorithm with an explicit trial seed, optionally keeping the
/// per-step trace (not available for `ucb-regret`).
pub fn run_seeded(
    config: &ExperimentConfig,
    instance: &BanditInstance,
    algorithm: AlgorithmId,
    tau1: u64,
    trial: usize,
    seed: u64,
    record_trace: bool,
) -> Result<(TrialOutcome, Option<Vec<TraceRow>>), HarnessError> {
    let started = Instant::now();
    let OfflineSample { dataset, rewards, mut streams } = generate_offline(&config.offline_policy, tau1, instance, seed)?;
    let options = RunOptions { record_trace, ..config.run_options() };
    let best = instance.best();
    let outcome = match algorithm {
        AlgorithmId::Tas => config.tas_sampler(&dataset).and_then(|s| run_sampler(s, best, &mut streams, &options)),
        AlgorithmId::LucbH | AlgorithmId::LucbKl => {
            let index =
                if algorithm == AlgorithmId::LucbH { IndexFamily::HoeffdingBound } else { IndexFamily::KlBound };
            lucb_run_with_source(instance, &dataset, config.delta, index, &mut streams, &options)
        }
        AlgorithmId::Replay => {
            let empty = OfflineDataset::empty(instance.num_arms());
            config.tas_sampler(&empty).and_then(|mut base| {
                artificial_replay_with_source(&mut base, rewards, &mut streams, best, &options).map(|r| r.result)
            })
        }
        AlgorithmId::UcbRegret => {
            let horizon = config.horizon.ok_or_else(|| HarnessError::Config("ucb-regret needs `horizon`".into()))?;
            let out = oo_ucb_regret_with_source(instance, &dataset, horizon, &mut streams)?;
            let most = crate::oracle::best_arm(&out.pulls.iter().map(|&p| p as f64).collect::<Vec<_>>());
            let record = TrialRecord {
                algorithm,
                tau1,
                trial,
                seed,
                stop_time: horizon,
                recommended_arm: most,
                correct: most == best,
                wall_time_ms: wall_time(config, started),
            };
            return Ok((TrialOutcome { record, tracking_violations: 0, failed: false }, None));
        }
    };
    let (mut result, failed) = match outcome {
        Ok(r) => (r, false),
        Err(TasError::BudgetExhausted { partial }) => {
            log::warn!("{algorithm} tau1={tau1} trial={trial}: step budget exhausted");
            let mut r = *partial;
            r.correct = false;
            (r, true)
        }
        Err(e) => return Err(e.into()),
    };
    let record = TrialRecord {
        algorithm,
        tau1,
        trial,
        seed,
        stop_time: result.stop_time,
        recommended_arm: result.recommended_arm,
        correct: result.correct,
        wall_time_ms: wall_time(config, started),
    };
    let trace = result.trace.take();
    Ok((TrialOutcome { record, tracking_violations: result.tracking_violations, failed }, trace))
}

fn wall_time(config: &ExperimentConfig, started: Instant) -> f64 {
    if config.record_wall_time {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

/// Per-(algorithm, tau1) summary of stop times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub algorithm: AlgorithmId,
    pub tau1: u64,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub error_rate: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Groups records by (algorithm, tau1). Sorting before summing makes the
/// result independent of record order.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateStats> {
    let mut keys: Vec<(AlgorithmId, u64)> = records.iter().map(|r| (r.algorithm, r.tau1)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(algorithm, tau1)| {
            let cell: Vec<&TrialRecord> =
                records.iter().filter(|r| r.algorithm == algorithm && r.tau1 == tau1).collect();
            let mut times: Vec<f64> = cell.iter().map(|r| r.stop_time as f64).collect();
            times.sort_by(f64::total_cmp);
            let n = times.len() as f64;
            let mean = times.iter().sum::<f64>() / n;
            let std = if times.len() > 1 {
                (times.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let errors = cell.iter().filter(|r| !r.correct).count();
            AggregateStats {
                algorithm,
                tau1,
                trials: times.len(),
                mean,
                std,
                q10: quantile(&times, 0.1),
                q50: quantile(&times, 0.5),
                q90: quantile(&times, 0.9),
                error_rate: errors as f64 / n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<AggregateStats>,
    pub tracking_violations: u64,
    pub failed_runs: usize,
}

/// Runs every (algorithm, offline size, trial) cell, in parallel, and
/// aggregates. Records come back ordered by algorithm, offline size, trial.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput, HarnessError> {
    config.validate()?;
    let instance = config.instance()?;
    let jobs: Vec<(AlgorithmId, u64, usize)> = config
        .algorithms
        .iter()
        .flat_map(|&a| config.offline_sizes.iter().flat_map(move |&t| (0..config.trials).map(move |i| (a, t, i))))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(a, t, i)| run_trial(config, &instance, a, t, i))
        .collect::<Result<_, _>>()?;
    let tracking_violations = outcomes.iter().map(|o| o.tracking_violations).sum();
    let failed_runs = outcomes.iter().filter(|o| o.failed).count();
    let records: Vec<TrialRecord> = outcomes.into_iter().map(|o| o.record).collect();
    let aggregates = aggregate(&records);
    Ok(SweepOutput { records, aggregates, tracking_violations, failed_runs })
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates(path: &Path, aggregates: &[AggregateStats]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for a in aggregates {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trials.csv`, `aggregates.csv` and the plot into `dir`; returns the
/// paths written.
pub fn write_sweep(config: &ExperimentConfig, output: &SweepOutput, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let trials = dir.join("trials.csv");
    let aggregates = dir.join("aggregates.csv");
    write_records(&trials, &output.records)?;
    write_aggregates(&aggregates, &output.aggregates)?;
    let title = format!("{} ({}, {} offline policy, delta = {})", config.name, config.family, config.offline_policy.name(), config.delta);
    let mut written = vec![trials, aggregates];
    written.extend(emit_plots(&output.aggregates, dir, &config.name, &title)?);
    Ok(written)
}

pub fn write_manifest(dir: &Path, manifest: &serde_json::Value) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    let mut f = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, manifest)?;
    writeln!(f)?;
    Ok(path)
}

const PLOT_COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Stop time against offline sample size: one SVG with a mean line and a
/// 10%-90% quantile band per algorithm.
pub fn emit_plots(
    aggregates: &[AggregateStats],
    dir: &Path,
    name: &str,
    title: &str,
) -> Result<Vec<PathBuf>, HarnessError> {
    if aggregates.is_empty() {
        log::warn!("no aggregates to plot");
        return Ok(Vec::new());
    }
    let (w, h, left, right, top, bottom) = (720.0, 440.0, 80.0, 160.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let x_max = aggregates.iter().map(|a| a.tau1).max().unwrap_or(0).max(1) as f64;
    let y_max = aggregates.iter().map(|a| a.q90.max(a.mean)).fold(1.0, f64::max) * 1.05;
    let sx = |x: f64| left + pw * x / x_max;
    let sy = |y: f64| top + ph * (1.0 - y / y_max);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!("<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>\n", w / 2.0, xml_escape(title)));
    svg.push_str(&format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let (xv, yv) = (x_max * i as f64 / 4.0, y_max * i as f64 / 4.0);
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xv:.0}</text>\n",
            sx(xv),
            top + ph + 18.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{yv:.0}</text>\n",
            left - 6.0,
            sy(yv) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">offline samples</text>\n",
        left + pw / 2.0,
        h - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">online samples to stop</text>\n",
        top + ph / 2.0,
        top + ph / 2.0
    ));

    let mut algorithms: Vec<AlgorithmId> = aggregates.iter().map(|a| a.algorithm).collect();
    algorithms.sort();
    algorithms.dedup();
    for (i, alg) in algorithms.iter().enumerate() {
        let color = PLOT_COLORS[i % PLOT_COLORS.len()];
        let mut cells: Vec<&AggregateStats> = aggregates.iter().filter(|a| a.algorithm == *alg).collect();
        cells.sort_by_key(|a| a.tau1);
        let upper = cells.iter().map(|a| format!("{:.2},{:.2}", sx(a.tau1 as f64), sy(a.q90)));
        let lower = cells.iter().rev().map(|a| format!("{:.2},{:.2}", sx(a.tau1 as f64), sy(a.q10)));
        let band: Vec<String> = upper.chain(lower).collect();
        svg.push_str(&format!(
            "<polygon class=\"band\" data-series=\"{alg}\" points=\"{}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
            band.join(" ")
        ));
        let line: Vec<String> = cells.iter().map(|a| format!("{:.2},{:.2}", sx(a.tau1 as f64), sy(a.mean))).collect();
        svg.push_str(&format!(
            "<polyline class=\"mean\" data-series=\"{alg}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            line.join(" ")
        ));
        let ly = top + 14.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{0:.1}\" y1=\"{ly:.1}\" x2=\"{1:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            left + pw + 12.0,
            left + pw + 36.0
        ));
        svg.push_str(&format!(
            "<text class=\"label\" x=\"{:.1}\" y=\"{:.1}\">{alg}</text>\n",
            left + pw + 42.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");

    fs::create_dir_all(dir)?;
    let path = dir.join(format!("stop_time_{}.svg", sanitize(name)));
    fs::write(&path, svg)?;
    Ok(vec![path])
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, residual: f64, tolerance: f64, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed: residual <= tolerance, residual, detail: detail.into() });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{status}  {:<28} residual {:.3e}  {}", c.name, c.residual, c.detail)?;
        }
        Ok(())
    }
}

/// Relative gap used by the per-arm comparisons.
pub fn relative_gap(got: f64, expected: f64) -> f64 {
    (got - expected).abs() / expected.abs().max(1.0)
}

fn max_relative_gap(got: &Allocation, expected: &[f64]) -> f64 {
    expected.iter().enumerate().map(|(a, &e)| relative_gap(got[a], e)).fold(0.0, f64::max)
}

const ROUND_TRIP_TOLERANCE: f64 = 1e-3;

/// Invariant battery for the allocation solvers at one offline dataset.
pub fn verify(instance: &BanditInstance, offline: &OfflineDataset, delta: f64) -> Result<VerifyReport, HarnessError> {
    let mut report = VerifyReport::default();
    let k = instance.num_arms();
    let config = SolverConfig::plug_in(delta)?;
    let zero = OfflineDataset::empty(k);

    let alloc = solve_p2(instance, offline, &config)?;
    let r = check_optimality(instance, offline, &alloc, &config);
    report.push(
        "P2 optimality",
        r.max_constraint_violation,
        OPTIMALITY_TOLERANCE,
        format!("total {:.4}, A1 {:?}, A2 {:?}", alloc.total(), r.active_set_a1, r.tight_zero_set_a2),
    );

    let online = solve_p2(instance, &zero, &config)?;
    let r = check_optimality(instance, &zero, &online, &config);
    report.push("P2 optimality (no offline)", r.max_constraint_violation, OPTIMALITY_TOLERANCE, format!("total {:.4}", online.total()));

    let dominance = (alloc.total() - online.total()).max(0.0) / online.total().max(1.0);
    report.push(
        "offline data never hurts",
        dominance,
        1e-9,
        format!("{:.4} with offline vs {:.4} without", alloc.total(), online.total()),
    );

    let tau1 = offline.tau1();
    if tau1 > 0 {
        let p = offline.proportions().expect("tau1 > 0");
        let solution = solve_p3(instance, &p, tau1 as f64, delta)?;
        let rebuilt = solution.to_allocation(tau1 as f64);
        let gap = if solution.z >= 1.0 {
            alloc.total() / alloc.total().max(1.0)
        } else {
            max_relative_gap(&rebuilt, &alloc.0)
        };
        report.push("normalized round trip", gap, ROUND_TRIP_TOLERANCE, format!("z* = {:.6}", solution.z));
    } else {
        report.push("normalized round trip", 0.0, ROUND_TRIP_TOLERANCE, "skipped: no offline data");
    }

    let counts = offline.counts_f64();
    let covers = (0..k).all(|a| counts[a] >= online[a]);
    let covered = (0..k).all(|a| counts[a] <= online[a]);
    if covers {
        report.push("offline covers optimum", alloc.total(), 1e-9, "no online samples needed");
    } else if covered {
        let expected: Vec<f64> = (0..k).map(|a| online[a] - counts[a]).collect();
        report.push(
            "offline below optimum",
            max_relative_gap(&alloc, &expected),
            ROUND_TRIP_TOLERANCE,
            "allocation equals optimum minus offline",
        );
    } else {
        report.push("boundary cases", 0.0, 0.0, "not applicable: offline neither covers nor is covered");
    }
    let best = instance.best();
    if counts[best] > online[best] {
        report.push("best arm oversupplied", alloc[best], 1e-9 * online[best].max(1.0), "best arm gets no online samples");
    }

    // The solver's answer must match a direct objective evaluation at its own n1.
    let problem = AllocationProblem::new(instance.family(), instance.means(), &counts, config)?;
    if let Some(objective) = problem.objective(alloc[best])? {
        report.push(
            "objective consistency",
            relative_gap(objective, alloc.total()),
            1e-9,
            format!("objective at n1 = {:.4}", alloc[best]),
        );
    }
    Ok(report)
}

/// Offline counts the config's policy would produce at `tau1` (custom weights
/// use the seed of trial 0).
pub fn expected_offline(config: &ExperimentConfig, tau1: u64) -> Result<OfflineDataset, HarnessError> {
    let instance = config.instance()?;
    let counts = offline_counts(&config.offline_policy, tau1, &instance, config.trial_seed(0))?;
    Ok(OfflineDataset::from_counts(counts))
}
