mod config;
mod runner;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use locsim::capacity::{capacity_report, max_lambda};
use locsim::metrics::write_rows;
use locsim::policies::PolicyKind;

use config::{ExperimentConfig, Scenario};

/// Simulator and capacity analyzer for rack-structured clusters with local,
/// rack-local and remote service.
#[derive(Parser)]
#[command(name = "locsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy and seed at one lambda and write summary CSV rows.
    Simulate(Common),
    /// Run a lambda grid (sweep section or --lambdas) and write summary CSV rows.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated lambda grid, strictly increasing.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        /// Treat grid values as fractions of the capacity boundary.
        #[arg(long)]
        relative: bool,
    },
    /// Print the capacity report (boundary, classification, regime check) as JSON.
    Capacity(Common),
    /// Check a config without running anything.
    Validate(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["s1", "s2", "custom"])]
    scenario: Option<String>,
    /// Policy to run; repeat for several.
    #[arg(long = "policy")]
    policies: Vec<PolicyKind>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    racks: Option<usize>,
    #[arg(long)]
    servers_per_rack: Option<usize>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    /// Seed; repeat for several.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    decimation: Option<u64>,
    /// Skip classification and collapse diagnostics.
    #[arg(long)]
    no_diagnostics: bool,
    /// Output file (CSV for simulate/sweep, JSON for capacity); stdout if absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads for the run grid.
    #[arg(long)]
    workers: Option<usize>,
}

/// Process exit status by failure kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Failure = 1,
    Config = 2,
    Invariant = 3,
    Regime = 4,
}

struct Failed(Status, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failed {
    fn from(e: E) -> Self {
        let e = e.into();
        let status = match e.downcast_ref::<locsim::Error>() {
            Some(
                locsim::Error::Config(_)
                | locsim::Error::ServerOutOfRange { .. }
                | locsim::Error::RackOutOfRange { .. },
            ) => Status::Config,
            Some(
                locsim::Error::Unsupported(_)
                | locsim::Error::Infeasible(_)
                | locsim::Error::ZeroDirection
                | locsim::Error::TooManyTypes { .. },
            ) => Status::Regime,
            _ => Status::Failure,
        };
        Failed(status, e)
    }
}

fn config_error(msg: impl Into<String>) -> Failed {
    Failed(Status::Config, anyhow::anyhow!(msg.into()))
}

fn resolve(common: &Common) -> Result<ExperimentConfig, Failed> {
    let mut cfg = config::load(common.config.as_deref()).map_err(|e| Failed(Status::Config, e))?;
    if let Some(s) = &common.scenario {
        cfg.traffic.scenario = match s.as_str() {
            "s1" => Scenario::S1,
            "s2" => Scenario::S2,
            _ => Scenario::Custom,
        };
    }
    if !common.policies.is_empty() {
        cfg.policy.kinds = common.policies.clone();
    }
    if let Some(l) = common.lambda {
        cfg.traffic.lambda = l;
    }
    if let Some(r) = common.racks {
        cfg.cluster.racks = r;
        cfg.cluster.rack_sizes = None;
    }
    if let Some(n) = common.servers_per_rack {
        cfg.cluster.servers_per_rack = n;
        cfg.cluster.rack_sizes = None;
    }
    if let Some(s) = common.slots {
        cfg.run.slots = s;
    }
    if let Some(w) = common.warmup {
        cfg.run.warmup = w;
    }
    if !common.seeds.is_empty() {
        cfg.run.seeds = common.seeds.clone();
    }
    if let Some(d) = common.decimation {
        cfg.run.decimation = d;
    }
    if common.no_diagnostics {
        cfg.run.diagnostics = false;
    }
    Ok(cfg)
}

fn check(cfg: &ExperimentConfig, needs_grid: bool) -> Result<(), Failed> {
    let problems = cfg.problems(needs_grid);
    if problems.is_empty() {
        return Ok(());
    }
    Err(config_error(format!("invalid configuration:\n  {}", problems.join("\n  "))))
}

fn set_workers(n: Option<usize>) -> Result<(), Failed> {
    if let Some(n) = n {
        if n == 0 {
            return Err(config_error("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failed> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn simulate(cfg: &ExperimentConfig, lambdas: &[f64], out: Option<&PathBuf>) -> Result<(), Failed> {
    let cluster = cfg.build_cluster()?;
    let outcome = runner::run_grid(cfg, &cluster, lambdas)?;
    write_rows(writer(out.or(cfg.output.csv.as_ref()))?, &outcome.rows)?;
    let bad: Vec<_> = outcome.summaries.iter().filter(|s| s.violations > 0).collect();
    if !bad.is_empty() {
        for s in &bad {
            for v in s.violation_log.iter().take(5) {
                eprintln!("{} seed {}: {v}", s.policy, s.seed);
            }
        }
        return Err(Failed(Status::Invariant, anyhow::anyhow!("{} runs violated slot invariants", bad.len())));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failed> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = resolve(&common)?;
            check(&cfg, false)?;
            set_workers(common.workers)?;
            simulate(&cfg, &[cfg.traffic.lambda], common.out.as_ref())
        }
        Command::Sweep { common, lambdas, relative } => {
            let mut cfg = resolve(&common)?;
            if !lambdas.is_empty() {
                cfg.sweep.lambdas = lambdas;
            }
            cfg.sweep.relative |= relative;
            check(&cfg, true)?;
            set_workers(common.workers)?;
            let mut grid = cfg.grid();
            if cfg.sweep.relative {
                let cluster = cfg.build_cluster()?;
                let star = max_lambda(&cluster, &cfg.build_traffic(&cluster, 1.0)?)?;
                eprintln!("capacity boundary lambda* = {star:.6}");
                grid.iter_mut().for_each(|f| *f *= star);
            }
            simulate(&cfg, &grid, common.out.as_ref())
        }
        Command::Capacity(common) => {
            let cfg = resolve(&common)?;
            check(&cfg, false)?;
            let cluster = cfg.build_cluster()?;
            let traffic = cfg.build_traffic(&cluster, cfg.traffic.lambda)?;
            let report = capacity_report(&cluster, &traffic)?;
            let mut w = writer(common.out.as_ref().or(cfg.output.json.as_ref()))?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            Ok(())
        }
        Command::Validate(common) => {
            let cfg = resolve(&common)?;
            check(&cfg, false)?;
            println!("configuration is valid");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failed(status, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(status as u8)
        }
    }
}
