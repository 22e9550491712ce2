//! Command-line front end for the benchmark harness.

use clap::{Parser, Subcommand};
use pgas_sim::harness::{
    self, emit_csv, run_kernel, Kernel, RunConfig, RunMode, OUT_DIR_ENV,
};
use pgas_sim::machine::InstrClass;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pgas-sim", about = "PGAS shared-address hardware-support simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark kernel and report instruction counts and cycles.
    Run {
        /// Kernel to run: vecadd, matmul or traverse.
        #[arg(long)]
        kernel: Kernel,
        /// Number of simulated SPMD threads.
        #[arg(long, default_value_t = 4)]
        threads: u64,
        /// Problem size: element count for vecadd/traverse, matrix
        /// dimension for matmul.
        #[arg(long)]
        elems: u64,
        /// Lowering mode: sw, hw or both.
        #[arg(long, default_value = "both")]
        mode: RunMode,
        /// Topology file: one `<thread> <controller> <node>` line per thread.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Write the per-class CSV report here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write a per-instruction execution trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Override the cycle cost of division/modulo instructions.
        #[arg(long)]
        div_cost: Option<u64>,
    },
}

/// Relative output paths land in $PGAS_SIM_OUT_DIR when it is set.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(path),
        None => path.to_path_buf(),
    }
}

fn run(cli: Cli) -> pgas_sim::Result<()> {
    let Command::Run {
        kernel,
        threads,
        elems,
        mode,
        topology,
        csv,
        trace,
        div_cost,
    } = cli.command;

    let mut cfg = RunConfig::new(kernel, threads, elems, mode);
    if let Some(cost) = div_cost {
        cfg.cost.set_cost(InstrClass::Div, cost)?;
    }
    if let Some(path) = topology {
        cfg.topology = Some(std::fs::read_to_string(path)?);
    }

    let mut trace_file = match trace {
        Some(path) => Some(File::create(resolve_out(&path))?),
        None => None,
    };
    let report = run_kernel(
        &cfg,
        trace_file.as_mut().map(|f| f as &mut dyn Write),
    )?;

    println!("{report}");
    match csv {
        Some(path) => emit_csv(&report, &resolve_out(&path))?,
        None => print!("{}", harness::csv_string(&report)),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
