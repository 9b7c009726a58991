//! Command-line entry points.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::checks;
use super::config::{load_config, RunConfig};
use super::output::{write_check_summary, write_oracle, write_report, write_trajectory};
use super::scenarios::{oracle_audit, oracle_evolution, run_ladder};
use crate::linearize::convergence_report;
use crate::solver::{run_evolution, Model};
use crate::{Error, Result};

/// Tolerance of the greedy-versus-exhaustive audit.
pub const ORACLE_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "fraclin", version, about = "Quasistatic brittle fracture runs, linearization ladders and checks")]
pub struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed, overriding `solve.rng_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, overriding the config (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Print the default configuration and exit.
    #[arg(long)]
    pub print_defaults: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured model(s) and write trajectory files.
    Simulate,
    /// Sweep the eps ladder against the linear model and write the report.
    Ladder,
    /// Compare greedy steps with the exhaustive minimizer on a small mesh.
    Oracle,
    /// Run the acceptance suite and write a pass/fail summary.
    Check,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ladder => "ladder",
            Command::Oracle => "oracle",
            Command::Check => "check",
        }
    }
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.outputs.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.solve.rng_seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn eps_tag(eps: f64) -> String {
    format!("{eps}").replace('.', "p")
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.outputs.dir;
    for model in cfg.model.models() {
        let traj = run_evolution(&cfg.evolution(model, None)?)?;
        let last = traj.steps.last().expect("partition has nodes");
        let name = match model {
            Model::Nonlinear => "nonlinear",
            Model::Linear => "linear",
        };
        println!(
            "{name}: {} steps, final total energy {:.6e}, crack length {:.4}",
            traj.steps.len() - 1,
            last.energy.total,
            last.energy.surface / traj.params.kappa
        );
        if cfg.outputs.trajectory {
            let path = dir.join(format!("trajectory_{name}.json"));
            write_trajectory(&path, &traj)?;
            println!("wrote {}", path.display());
        }
    }
    if cfg.outputs.oracle_check {
        oracle(cfg, true)?;
    }
    Ok(())
}

fn ladder(cfg: &RunConfig) -> Result<()> {
    if cfg.ladder.is_empty() {
        return Err(Error::ConfigValidation("ladder is empty".into()));
    }
    let base = cfg.evolution(Model::Linear, None)?;
    let (runs, reference) = run_ladder(&base, &cfg.ladder)?;
    let report = convergence_report(&runs, &reference, &cfg.report_times)?;
    println!("{:>8} {:>6} {:>12} {:>12} {:>12} {:>12}", "eps", "t", "total gap", "hessian", "disp error", "balance");
    for r in &report.rows {
        println!(
            "{:>8} {:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.epsilon, r.time, r.total_gap, r.hessian_term, r.displacement_error, r.balance_residual
        );
    }
    let dir = &cfg.outputs.dir;
    if cfg.outputs.report {
        let path = dir.join("report.csv");
        write_report(&path, &report)?;
        println!("wrote {}", path.display());
    }
    if cfg.outputs.trajectory {
        write_trajectory(&dir.join("trajectory_linear.json"), &reference)?;
        for run in &runs {
            write_trajectory(&dir.join(format!("trajectory_eps_{}.json", eps_tag(run.params.epsilon))), run)?;
        }
    }
    if cfg.outputs.oracle_check {
        oracle(cfg, true)?;
    }
    Ok(())
}

/// Audits the configured problem when a config file was given, the built-in
/// 4 x 4 fixture otherwise.
fn oracle(cfg: &RunConfig, from_file: bool) -> Result<bool> {
    let evo = if from_file {
        cfg.evolution(cfg.model.models()[0], None)?
    } else {
        let mut evo = oracle_evolution(Model::Linear);
        evo.options.rng_seed = cfg.solve.rng_seed;
        evo
    };
    let audit = oracle_audit(&evo)?;
    for s in &audit.steps {
        println!(
            "t = {:.4}: greedy {:.10e}, brute force {:.10e}, relative gap {:.2e}",
            s.time, s.greedy, s.brute_force, s.relative_gap
        );
    }
    let passed = audit.max_relative_gap <= ORACLE_TOL;
    println!(
        "max relative gap {:.2e} {} {ORACLE_TOL:e}",
        audit.max_relative_gap,
        if passed { "<=" } else { ">" }
    );
    let path = cfg.outputs.dir.join("oracle.json");
    write_oracle(&path, &audit.steps, audit.max_relative_gap)?;
    Ok(passed)
}

fn check(dir: &Path) -> Result<bool> {
    let outcomes: Vec<_> = checks::CRITERIA
        .iter()
        .filter_map(|c| {
            let out = checks::run_check(c.0)?;
            println!("{}", out.line());
            Some(out)
        })
        .collect();
    let path = dir.join("check_summary.json");
    write_check_summary(&path, &outcomes)?;
    let passed = outcomes.iter().all(|o| o.passed);
    println!(
        "{} of {} criteria passed; wrote {}",
        outcomes.iter().filter(|o| o.passed).count(),
        outcomes.len(),
        path.display()
    );
    Ok(passed)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if cli.print_defaults {
        print!("{}", RunConfig::defaults_toml());
        return 0;
    }
    let Some(command) = &cli.command else {
        eprintln!("fraclin: no subcommand given (see --help)");
        return 2;
    };
    let outcome = config(&cli).and_then(|cfg| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::ConfigValidation(format!("cannot start {} workers: {e}", cfg.workers)))?;
        pool.install(|| match command {
            Command::Simulate => simulate(&cfg).map(|_| true),
            Command::Ladder => ladder(&cfg).map(|_| true),
            Command::Oracle => oracle(&cfg, cli.config.is_some()),
            Command::Check => check(&cfg.outputs.dir),
        })
    });
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("fraclin {}: {e}", command.name());
            e.exit_code()
        }
    }
}

pub fn main_from_env() -> i32 {
    run(Cli::parse())
}
