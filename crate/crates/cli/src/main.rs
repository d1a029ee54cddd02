//! `swarm-mpc`: run scenarios, benchmark suites and list builtins.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;
use serde_json::json;
use swarm_mpc::bench::{self, BenchError, RunRecord, Scenario};
use swarm_mpc::sampler::Workers;

#[derive(Parser, Debug)]
#[command(name = "swarm-mpc", version, about = "Sampling-based multi-agent MPC")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one episode and write trajectory.jsonl and metrics.json.
    Run {
        /// Builtin scenario name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        /// mppi, cem or tsallis.
        #[arg(long)]
        optimizer: Option<String>,
        /// centralized or distributed.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        admm_iters: Option<usize>,
        /// Episode length in steps.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every scenario of a suite with each optimizer and mode.
    Bench {
        /// desk, full or smoke.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the builtin scenarios.
    List,
}

/// Failure with the exit code it maps to.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn workers() -> Result<Workers, Failure> {
    let threads = match std::env::var("SWARM_MPC_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Failure::Config(anyhow::anyhow!("SWARM_MPC_THREADS must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    Workers::new(threads).map_err(|e| Failure::Runtime(e.into()))
}

fn prepare_out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .and_then(|_| {
            let probe = dir.join(".write-test");
            File::create(&probe)?;
            fs::remove_file(probe)
        })
        .with_context(|| format!("output directory `{}` is not writable", dir.display()))
        .map_err(Failure::Config)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            scenario,
            optimizer,
            mode,
            seed,
            samples,
            admm_iters,
            steps,
            out,
        } => {
            let mut s = bench::load_scenario(&scenario)?;
            if let Some(o) = optimizer {
                s.set_optimizer(&o)?;
            }
            if let Some(m) = mode {
                s.set_mode(&m)?;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = samples {
                s.sampler.m_sample = v;
            }
            if let Some(v) = admm_iters {
                s.consensus.admm_iters = v;
            }
            if let Some(v) = steps {
                s.horizons.steps = v;
            }
            s.validate()?;
            prepare_out_dir(&out)?;
            run(&s, &out)
        }
        Command::Bench { suite, out } => {
            let runs = bench::suite_runs(&suite)?;
            prepare_out_dir(&out)?;
            let workers = workers()?;
            let mut records = Vec::with_capacity(runs.len());
            for s in &runs {
                info!("running {} / {} / {}", s.name, s.planner_mode().name(), s.optimizer()?);
                let result = bench::run_scenario(s, &workers)?;
                records.push(RunRecord::new(s, result.metrics));
            }
            let (table, jsonl) = bench::report(&records);
            print!("{table}");
            write(&out.join("report.txt"), &table)?;
            write(&out.join("report.jsonl"), &jsonl)?;
            Ok(())
        }
        Command::List => {
            for (name, s) in bench::builtin_scenarios()? {
                println!(
                    "{name:<26} {:<11} agents={:<3} T={:<4} mode={}",
                    format!("{:?}", s.model).to_lowercase(),
                    s.agents.len(),
                    s.horizons.steps,
                    s.planner_mode().name()
                );
            }
            Ok(())
        }
    }
}

fn run(s: &Scenario, out: &Path) -> Result<(), Failure> {
    let workers = workers()?;
    info!(
        "running {} with {} agents, {} steps, {} workers",
        s.name,
        s.agents.len(),
        s.horizons.steps,
        workers.threads()
    );
    let result = bench::run_scenario(s, &workers)?;
    let path = out.join("trajectory.jsonl");
    let file = File::create(&path)
        .with_context(|| format!("cannot create `{}`", path.display()))
        .map_err(Failure::Runtime)?;
    bench::write_trajectory_log(BufWriter::new(file), &result.log, s, &result.metrics)?;
    let metrics = json!({
        "scenario": s.name,
        "optimizer": s.optimizer()?,
        "mode": s.planner_mode().name(),
        "aborted": result.log.aborted,
        "metrics": result.metrics,
        "config": s,
    });
    write(&out.join("metrics.json"), &serde_json::to_string_pretty(&metrics).expect("metrics serialise"))?;
    let m = &result.metrics;
    println!(
        "{}: completion {:.1}%, inter-agent collisions {}, obstacle collisions {}, trajectory cost {:.4e}, planning time {:.2} s",
        s.name,
        100.0 * m.completion_rate,
        m.inter_agent_collisions,
        m.obstacle_collisions,
        m.trajectory_cost,
        m.wall_time
    );
    if let Some(reason) = &result.log.aborted {
        return Err(Failure::Runtime(anyhow::anyhow!("episode aborted: {reason}")));
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("cannot write `{}`", path.display()))
        .map_err(Failure::Runtime)
}
