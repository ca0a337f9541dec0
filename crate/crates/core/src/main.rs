//! `leofair` command line: run episodes, sweep parameters, inspect slots.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use leofair::simrunner::{
    inspect_slot, run_episode, sweep, Algorithm, ScenarioSpec, SweepParam,
};
use leofair::SimError;

#[derive(Parser)]
#[command(
    name = "leofair",
    about = "Fair, handover-aware LEO downlink resource allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its artifacts.
    Simulate {
        /// Scenario JSON; omitted fields take the benchmark defaults.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured algorithm (global | distributed).
        #[arg(long)]
        algorithm: Option<Algorithm>,
        /// Override the handover cost.
        #[arg(long = "h-cost")]
        h_cost: Option<f64>,
        /// Override the reweighting iteration count.
        #[arg(long = "n-iter")]
        n_iter: Option<u32>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the population seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one episode per parameter value, sharing geometry.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// h_cost or n_iter.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0,0.1,0.2,0.3,0.4,0.5.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print visible-set size and rate-table statistics for one slot.
    InspectSlot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        slot: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({
                "error": err.to_string(),
                "kind": error_kind(&err),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn error_kind(err: &SimError) -> &'static str {
    match err {
        SimError::Config(_) => "config",
        SimError::Ingestion { .. } => "ingestion",
        SimError::Domain(_) => "domain",
        SimError::Solver(_) => "solver",
        SimError::Slot { .. } => "slot",
        SimError::Io(_) => "io",
    }
}

fn dispatch(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Simulate {
            config,
            algorithm,
            h_cost,
            n_iter,
            out,
            seed,
        } => {
            let mut spec = ScenarioSpec::from_file(&config)?;
            if let Some(a) = algorithm {
                spec.algorithm = a;
            }
            if let Some(h) = h_cost {
                spec.handover_cost = h;
            }
            if let Some(n) = n_iter {
                spec.solver.n_iter = n;
            }
            if let Some(dir) = out {
                spec.output_dir = Some(dir);
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let report = run_episode(&spec)?;
            println!(
                "episode done: {} slots, mean throughput {:.3e} bit/s/user, median Jain {:.4}, {} handovers",
                report.slots.len(),
                report.mean_throughput_bps(),
                report.median_jain(),
                report.total_handovers()
            );
            if let Some(dir) = &spec.output_dir {
                println!("artifacts in {}", dir.display());
            }
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let mut spec = ScenarioSpec::from_file(&config)?;
            if let Some(dir) = out {
                spec.output_dir = Some(dir);
            }
            let param: SweepParam = param.parse()?;
            let results = sweep(&spec, param, &values)?;
            println!("value,mean_avg_bps,median_jain,total_handovers");
            for (v, report) in &results {
                println!(
                    "{},{:.3},{:.6},{}",
                    v,
                    report.mean_throughput_bps(),
                    report.median_jain(),
                    report.total_handovers()
                );
            }
            Ok(())
        }
        Command::InspectSlot { config, slot } => {
            let spec = ScenarioSpec::from_file(&config)?;
            let info = inspect_slot(&spec, slot)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&info)
                    .map_err(|e| SimError::config(format!("inspection serialization: {e}")))?
            );
            Ok(())
        }
    }
}
