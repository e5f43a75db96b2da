use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use uee_cli::validate::run_checks;
use uee_cli::{
    run_points, sweep_points, write_rows, Algorithm, Axis, ConfigError, Format, RunConfig,
};
use uee_core::outer::Status;

/// Utility-energy-efficiency resource allocation experiments.
///
/// Log verbosity follows UEE_LOG (error, warn, info, debug, trace).
#[derive(Parser, Debug)]
#[command(name = "uee", version)]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `scenario.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.path`; standard output when neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one instance with the proposed algorithm.
    Solve {
        /// Also write the full report (φ trace, line-search history) as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the proposed algorithm and the three baselines on one instance.
    Compare,
    /// Vary one scenario parameter and run the chosen algorithms at each value.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated points; group entries within a point use ':'.
        #[arg(long)]
        values: String,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = Algorithm::ALL.to_vec())]
        algorithms: Vec<Algorithm>,
    },
    /// Run the property checks and print a pass/fail table.
    Validate {
        /// Repeat the checks on this many consecutive seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.scenario.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.path = Some(o.clone());
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if cli.jobs == 0 {
        return Err(ConfigError("--jobs must be at least 1".into()));
    }
    Ok(cfg)
}

/// Solver-side failure already reported to the user; exit status 1.
#[derive(Debug)]
struct Failed(String);

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failed {}

fn run(cli: Cli) -> Result<()> {
    let cfg = load(&cli)?;
    let out = cfg.output.path.as_deref();
    match cli.command {
        Command::Solve { report } => {
            let points = vec![("base".to_string(), cfg.scenario.clone())];
            let res = run_points(&points, &[Algorithm::Proposed], &cfg, 1)?;
            let r = &res[0].report;
            write_rows(&res[0].rows("none"), cfg.output.format, out)?;
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(r)?;
                std::fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            eprintln!(
                "status {} after {} iterations, objective {}, kkt {:e}",
                r.status.as_str(),
                r.outer_iterations,
                r.objective,
                r.kkt_residual.unwrap_or(f64::NAN)
            );
            if r.status != Status::Converged {
                return Err(
                    Failed(r.message.clone().unwrap_or_else(|| "not converged".into())).into(),
                );
            }
        }
        Command::Compare => {
            let points = vec![("base".to_string(), cfg.scenario.clone())];
            let res = run_points(&points, &Algorithm::ALL, &cfg, cli.jobs)?;
            let rows: Vec<_> = res.iter().flat_map(|r| r.rows("none")).collect();
            write_rows(&rows, cfg.output.format, out)?;
            eprintln!(
                "{:<10} {:>16} {:>12} {:>6}  status",
                "algorithm", "objective", "wall_s", "iters"
            );
            for r in &res {
                eprintln!(
                    "{:<10} {:>16.9e} {:>12.6} {:>6}  {}",
                    r.algorithm.as_str(),
                    r.report.objective,
                    r.report.wall_time,
                    r.report.outer_iterations,
                    r.report.status.as_str()
                );
            }
        }
        Command::Sweep {
            axis,
            values,
            algorithms,
        } => {
            let points = sweep_points(&cfg.scenario, axis, &values)?;
            info!("{} points x {} algorithms", points.len(), algorithms.len());
            let res = run_points(&points, &algorithms, &cfg, cli.jobs)?;
            let rows: Vec<_> = res.iter().flat_map(|r| r.rows(axis.as_str())).collect();
            write_rows(&rows, cfg.output.format, out)?;
        }
        Command::Validate {
            seeds,
            inject_fault,
        } => {
            let mut failed = 0;
            let base = cfg.scenario.seed;
            for s in base..base + seeds.max(1) {
                let mut c = cfg.clone();
                c.scenario.seed = s;
                for check in run_checks(&c, inject_fault) {
                    let mark = if check.passed { "PASS" } else { "FAIL" };
                    println!("{mark}  seed {s:<4} {:<24} {}", check.name, check.detail);
                    failed += usize::from(!check.passed);
                }
            }
            if failed > 0 {
                return Err(Failed(format!("{failed} checks failed")).into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("UEE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ConfigError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
