use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use oobai::harness::{
    expected_offline, run_seeded, run_sweep, verify, write_manifest, write_sweep, AlgorithmId, ExperimentConfig,
};
use oobai::oracle::{check_optimality, solve_p1, solve_p2, solve_p3, OfflineDataset, SolverConfig};

/// Fixed-confidence best-arm identification with offline and online samples.
#[derive(Debug, Parser)]
#[command(name = "oobai", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the allocation problems for the configured instance.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
        /// Offline counts per arm, comma separated (default: none).
        #[arg(long, value_delimiter = ',')]
        offline: Option<Vec<u64>>,
    },
    /// Run one algorithm once and print its result as a one-row CSV.
    Run {
        #[arg(long)]
        algo: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Offline sample size (default: first entry of `offline_sizes`).
        #[arg(long)]
        tau1: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Write the per-step trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the Monte-Carlo sweep and write CSVs, plots and a manifest.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        /// Overrides the config's `output_dir`.
        #[arg(long, env = "OOBAI_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Run the solver invariant battery at every configured offline size.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
    },
}

fn load(path: &PathBuf, delta: Option<f64>, trials: Option<usize>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(d) = delta {
        config.delta = d;
    }
    if let Some(t) = trials {
        config.trials = t;
    }
    config.validate()?;
    Ok(config)
}

fn solve(config: &ExperimentConfig, offline: Option<Vec<u64>>) -> Result<()> {
    let instance = config.instance()?;
    let k = instance.num_arms();
    let counts = offline.unwrap_or_else(|| vec![0; k]);
    if counts.len() != k {
        bail!("{} offline counts for {k} arms", counts.len());
    }
    let offline = OfflineDataset::from_counts(counts.clone());
    let solver = SolverConfig::plug_in(config.delta)?;
    let alloc = solve_p2(&instance, &offline, &solver)?;
    let (lower, lower_total) = solve_p1(&instance, &offline.counts_f64(), config.delta)?;
    println!("instance: {} means {:?}, delta {}", instance.family(), instance.means(), config.delta);
    println!("offline counts: {counts:?}");
    println!("online allocation (plug-in threshold {:.6}): {:?}", solver.threshold, alloc.0);
    println!("online total: {:.6}", alloc.total());
    println!("lower-bound allocation: {:?}", lower.0);
    println!("lower-bound total T*: {lower_total:.6}");
    if let Some(p) = offline.proportions() {
        let sol = solve_p3(&instance, &p, offline.tau1() as f64, config.delta)?;
        println!("normalized solution: z* = {:.6}, w* = {:?}", sol.z, sol.w);
    } else {
        let sol = solve_p3(&instance, &vec![1.0 / k as f64; k], 0.0, config.delta)?;
        println!("normalized solution: z* = 0, w* = {:?}", sol.w);
    }
    let report = check_optimality(&instance, &offline, &alloc, &solver);
    println!(
        "optimality: A1 {:?}, A2 {:?}, ratio sum A1 {:.6}, ratio sum A {:.6}, max violation {:.3e}",
        report.active_set_a1,
        report.tight_zero_set_a2,
        report.ratio_sum_a1,
        report.ratio_sum_a,
        report.max_constraint_violation
    );
    Ok(())
}

fn run(config: &ExperimentConfig, algo: &str, seed: u64, tau1: Option<u64>, trace: Option<PathBuf>) -> Result<()> {
    let algorithm: AlgorithmId = algo.parse()?;
    let instance = config.instance()?;
    let tau1 = tau1.or_else(|| config.offline_sizes.first().copied()).unwrap_or(0);
    let (outcome, rows) = run_seeded(config, &instance, algorithm, tau1, 0, seed, trace.is_some())?;
    let mut w = csv::Writer::from_writer(io::stdout());
    w.serialize(&outcome.record)?;
    w.flush()?;
    if let Some(path) = trace {
        let rows = rows.with_context(|| format!("{algorithm} does not produce a trace"))?;
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn sweep(config: ExperimentConfig, flags: serde_json::Value) -> Result<()> {
    let output = run_sweep(&config)?;
    let dir = config.output_dir.clone();
    let written = write_sweep(&config, &output, &dir)?;
    let manifest = json!({
        "command": "sweep",
        "flags": flags,
        "config": config,
        "records": output.records.len(),
        "failed_runs": output.failed_runs,
        "tracking_violations": output.tracking_violations,
        "files": written,
    });
    let manifest_path = write_manifest(&dir, &manifest)?;
    for a in &output.aggregates {
        println!(
            "{:<10} tau1={:<6} mean={:>10.1} std={:>9.1} q10={:>9.1} q50={:>9.1} q90={:>9.1} error_rate={:.3}",
            a.algorithm.name(),
            a.tau1,
            a.mean,
            a.std,
            a.q10,
            a.q50,
            a.q90,
            a.error_rate
        );
    }
    println!("wrote {} files and {}", written.len(), manifest_path.display());
    Ok(())
}

fn verify_all(config: &ExperimentConfig) -> Result<bool> {
    let instance = config.instance()?;
    let mut ok = true;
    let sizes = if config.offline_sizes.is_empty() { vec![0] } else { config.offline_sizes.clone() };
    for tau1 in sizes {
        let offline = expected_offline(config, tau1)?;
        let report = verify(&instance, &offline, config.delta)?;
        println!("offline counts {:?}", offline.counts());
        print!("{report}");
        ok &= report.passed();
    }
    println!("{}", if ok { "all checks passed" } else { "some checks FAILED" });
    Ok(ok)
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config, delta, offline } => solve(&load(&config, delta, None)?, offline)?,
        Command::Run { algo, config, seed, tau1, delta, trace } => {
            run(&load(&config, delta, None)?, &algo, seed, tau1, trace)?
        }
        Command::Sweep { config: path, trials, delta, output_dir } => {
            let mut config = load(&path, delta, trials)?;
            if let Some(dir) = &output_dir {
                config.output_dir = dir.clone();
            }
            let flags = json!({
                "config": path,
                "trials": trials,
                "delta": delta,
                "output_dir": output_dir,
            });
            sweep(config, flags)?
        }
        Command::Verify { config, delta } => {
            if !verify_all(&load(&config, delta, None)?)? {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
