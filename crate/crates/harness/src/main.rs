use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use chebmap_harness::config::ExperimentConfig;
use chebmap_harness::report::ExperimentReport;
use chebmap_harness::{models, runner};

#[derive(Parser)]
#[command(name = "chebmap", about = "Chebyshev MAP estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in models and their parameters.
    ListModels,
    /// Re-run one realisation of a stored report and check it reproduces.
    Replay {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        run: usize,
    },
}

fn run(config: PathBuf, seed: Option<u64>, runs: Option<usize>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(l) = runs {
        cfg.runs = l;
    }
    let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let (report, timing) = runner::run_monte_carlo(&cfg)?;
    report.write(&dir)?;
    timing.write(&dir)?;
    println!("{:<22} {:>12}  ARMSE per component", "estimator", "s/run");
    for (label, m) in &report.estimators {
        let armse: Vec<String> = m.armse.iter().map(|v| format!("{v:.4e}")).collect();
        let failed = if m.failed_runs.is_empty() {
            String::new()
        } else {
            format!("  ({} failed)", m.failed_runs.len())
        };
        println!(
            "{label:<22} {:>12.4}  [{}]{failed}",
            timing.mean_seconds.get(label).copied().unwrap_or(0.0),
            armse.join(", ")
        );
    }
    if let Some(c) = &report.crlb {
        let v: Vec<String> = c.rmse.iter().map(|v| format!("{v:.4e}")).collect();
        println!("{:<22} {:>12}  [{}]", "crlb", "", v.join(", "));
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn replay(path: PathBuf, index: usize) -> anyhow::Result<()> {
    let report = ExperimentReport::load(&path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = &report.config;
    if index >= report.measurement_hashes.len() {
        bail!("run {index} out of range (report has {})", report.measurement_hashes.len());
    }
    let data = runner::run_single(cfg, index)?;
    let mut ok = data.measurement_hash == report.measurement_hashes[index];
    println!("measurement hash {}", if ok { "matches" } else { "DIFFERS" });
    let times = cfg.measurement_times();
    for (label, stored) in &report.estimators {
        let fresh = data.estimates.get(label);
        let fresh_rmse = fresh.and_then(|r| r.as_ref().ok()).map(|series| {
            let n = report.state_dim;
            (0..n)
                .map(|i| {
                    let s: f64 = series
                        .states
                        .iter()
                        .zip(&data.truth_at_epochs)
                        .map(|(x, t)| (x[i] - t[i]).powi(2))
                        .sum();
                    (s / times.len() as f64).sqrt()
                })
                .collect::<Vec<f64>>()
        });
        let same = match (&stored.rmse_per_run[index], &fresh_rmse) {
            (Some(a), Some(b)) => a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1e-300)),
            (None, None) => true,
            _ => false,
        };
        ok &= same;
        println!("{label:<22} {}  rmse {:?}", if same { "reproduced" } else { "DIFFERS" }, fresh_rmse);
    }
    if !ok {
        bail!("replay of run {index} does not match the report");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, runs, out } => run(config, seed, runs, out),
        Command::ListModels => {
            for m in models::MODELS {
                println!("{} (n = {}): {}", m.name, m.state_dim, m.description);
                for (key, default) in m.parameters {
                    println!("    {key} = {default}");
                }
            }
            Ok(())
        }
        Command::Replay { report, run } => replay(report, run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
