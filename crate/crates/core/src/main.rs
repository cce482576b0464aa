use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use retrokit::bench::scenario::{run_scenario, ScenarioSpec};
use retrokit::bench::suites::{validate, Suite};
use retrokit::bench::sweep::{sweep_performance, write_sweep, SweepConfig};
use retrokit::error::{Error, Result};
use retrokit::io::write_json;
use retrokit::par::Execution;

#[derive(Parser)]
#[command(name = "retrokit", version, about = "Retrofit controller synthesis, simulation and validation")]
struct Cli {
    /// Run batches on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario and write trajectories.csv, report.json, plot.svg.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep controller gains and write sweep.csv, sweep.json, sweep.svg.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run validation suites (`all` or a comma-separated list).
    Validate {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "validate-out")]
        out: PathBuf,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.cmd {
        Cmd::Run { scenario, out, seed } => {
            let mut spec: ScenarioSpec = read_json(&scenario)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let start = Instant::now();
            let mut report = run_scenario(&spec, &out)?;
            report.wall_time_s = Some(start.elapsed().as_secs_f64());
            write_json(&out.join("report.json"), &report)?;
            println!(
                "{}: stable={:?} diverged={} peak_ratio={:.4} ({:.2}s) -> {}",
                report.name,
                report.stable,
                report.diverged,
                report.peak_ratio,
                report.wall_time_s.unwrap_or(0.0),
                out.display()
            );
            Ok(true)
        }
        Cmd::Sweep { config, out } => {
            let cfg: SweepConfig = read_json(&config)?;
            let report = sweep_performance(&cfg, exec)?;
            write_sweep(&report, &out)?;
            println!("open loop J_all = {:.6}", report.open_loop_j_all);
            for p in &report.points {
                let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
                let flag = if p.flagged() { " [flagged]" } else { "" };
                println!("q = {:<10} J1 = {:<12} J_all = {}{flag}", p.q, show(p.j1), show(p.j_all));
            }
            Ok(true)
        }
        Cmd::Validate { suite, seed, out } => {
            let suites = Suite::parse_list(&suite)?;
            let report = validate(&suites, seed, exec)?;
            std::fs::create_dir_all(&out)?;
            write_json(&out.join("report.json"), &report)?;
            for s in &report.suites {
                println!("[{}] {}", if s.passed { "PASS" } else { "FAIL" }, s.suite);
                for c in &s.checks {
                    println!("    {c}");
                }
            }
            println!("{}", if report.passed { "all suites passed" } else { "validation failed" });
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
