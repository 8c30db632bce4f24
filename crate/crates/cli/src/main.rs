//! `ohlink` command-line tool.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use ohlink::config::ExperimentConfig;
use ohlink::constellation::{ConstellationSnapshot, RoutePath};
use ohlink::workflows::{self, Fault, HopSpacing, RelaySweep, Suite, ThresholdSweep, WorkflowError};


#[derive(Debug, Parser)]
#[command(name = "ohlink", version, about = "Optical hard-limiter relay link experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration; missing keys take the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-relay error against the hard-limiter threshold.
    SweepThreshold {
        #[arg(long)]
        length_m: Option<f64>,
        #[arg(long)]
        sigma_theta_rad: Option<f64>,
        /// Add the Monte Carlo amplify-and-forward column.
        #[arg(long)]
        with_af: bool,
    },
    /// End-to-end error against the number of relays.
    SweepRelays {
        /// Fixed per-hop length instead of a fixed total distance.
        #[arg(long)]
        fixed_hop_m: Option<f64>,
        #[arg(long)]
        with_af: bool,
    },
    /// Generates a constellation snapshot and its scenario route.
    Snapshot {
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Where to write the route; the snapshot goes to --out.
        #[arg(long)]
        route_out: PathBuf,
    },
    /// Optimizes every link of a stored route.
    OptimizePath {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        route: PathBuf,
    },
    /// Proposed against exhaustive optimization over several snapshots.
    SnapshotStudy {
        #[arg(long, default_value_t = 4)]
        count: u64,
        /// Fill the wall-clock columns (not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Tunable-lens focal length for a receiver beam radius.
    Lens {
        #[arg(long)]
        beam_radius_m: f64,
        #[arg(long)]
        length_m: Option<f64>,
    },
    /// Oracle cross-checks; exits with 4 when any check fails.
    Validate {
        #[arg(long, value_enum)]
        suite: Vec<SuiteArg>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Numerics,
    Channel,
    Hop,
    Chain,
    Optimizer,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Numerics => Suite::Numerics,
            SuiteArg::Channel => Suite::Channel,
            SuiteArg::Hop => Suite::Hop,
            SuiteArg::Chain => Suite::Chain,
            SuiteArg::Optimizer => Suite::Optimizer,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    ClosedFormCoefficient,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), WorkflowError> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| WorkflowError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| WorkflowError::Usage(format!("stdout: {e}"))),
    }
}

fn run(cli: Cli) -> Result<i32, WorkflowError> {
    let mut cfg = match &cli.global.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = cli.global.out.as_deref();
    let mut status = 0;
    let text = match cli.command {
        Command::SweepThreshold { length_m, sigma_theta_rad, with_af } => {
            let opts = ThresholdSweep { length_m, sigma_theta_rad, with_af };
            workflows::sweep_threshold(&cfg, &opts)?.to_csv()
        }
        Command::SweepRelays { fixed_hop_m, with_af } => {
            let spacing = match fixed_hop_m {
                Some(l) if l > 0.0 => HopSpacing::FixedHop(l),
                Some(l) => return Err(WorkflowError::Usage(format!("hop length {l} must be positive"))),
                None => HopSpacing::FixedTotal,
            };
            workflows::sweep_relays(&cfg, &RelaySweep { spacing, with_af })?.to_csv()
        }
        Command::Snapshot { index, route_out } => {
            let (snap, path) = workflows::scenario_route(&cfg, index)?;
            info!("snapshot {index}: {} links, {:.0} m", path.relay_count, path.total_length_m);
            write_output(Some(&route_out), &path.to_json())?;
            snap.to_json()
        }
        Command::OptimizePath { snapshot, route } => {
            let snap = ConstellationSnapshot::load(&snapshot)?;
            let path = RoutePath::load(&route)?;
            workflows::optimize_path(&cfg, &snap, &path)?.to_csv()
        }
        Command::SnapshotStudy { count, timing } => workflows::snapshot_study(&cfg, count, timing)?.to_csv(),
        Command::Lens { beam_radius_m, length_m } => {
            workflows::lens_report(&cfg, beam_radius_m, length_m.unwrap_or(cfg.link_length_m))?.to_text()
        }
        Command::Validate { suite, inject_fault } => {
            let suites: Vec<Suite> = if suite.is_empty() {
                Suite::ALL.to_vec()
            } else {
                suite.into_iter().map(Suite::from).collect()
            };
            let fault = inject_fault.map(|FaultArg::ClosedFormCoefficient| Fault::ClosedFormCoefficient);
            let outcome = workflows::validate(&cfg, &suites, fault)?;
            if !outcome.all_passed() {
                status = 4;
            }
            outcome.to_text()
        }
    };
    write_output(out, &text)?;
    Ok(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
