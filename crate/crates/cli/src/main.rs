use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use qoshare::PriorMode;
use qoshare_cli::commands::{self, RunOptions};
use qoshare_cli::{exit, output, CliError};

#[derive(Parser)]
#[command(name = "qoshare", version, about = "QoS-aware sharing of radio infrastructure between clients")]
struct Cli {
    /// More output; -v also writes per-frame solver traces.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerSlot,
    FrameConstant,
}

impl From<Mode> for PriorMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PerSlot => PriorMode::PerSlot,
            Mode::FrameConstant => PriorMode::FrameConstant,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and the feasibility of its QoS requirements.
    Validate {
        scenario: PathBuf,
        /// Write the linearized QoS polyhedron as text triplets.
        #[arg(long, value_name = "PATH")]
        dump_polyhedron: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "frame-constant")]
        mode: Mode,
    },
    /// Print theoretical bounds and constants as JSON.
    Bounds {
        scenario: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Simulate every policy of a scenario.
    Run {
        scenario: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Replaces the scenario's seeds; repeatable.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Only run this policy; repeatable.
        #[arg(long = "policy")]
        policies: Vec<String>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Re-check the linearized slack of every decision and abort on violation.
        #[arg(long)]
        debug_slack: bool,
    },
    /// Join two runs' frame tables into a paired difference table.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Validate {
            scenario,
            dump_polyhedron,
            mode,
        } => {
            let c = qoshare_cli::load(&scenario)?;
            let report = commands::validate(&c)?;
            println!(
                "{}: ok ({} pairs, {} flows, {} with QoS), margin zeta = {:.6}",
                report.scenario, report.pairs, report.flows, report.active_pairs, report.zeta
            );
            for w in &report.warnings {
                println!("warning: {w}");
            }
            if let Some(path) = dump_polyhedron {
                commands::dump_polyhedron(&c, mode.into(), &path)?;
                if verbose > 0 {
                    eprintln!("wrote {}", path.display());
                }
            }
            Ok(())
        }
        Command::Bounds { scenario, out } => {
            let c = qoshare_cli::load(&scenario)?;
            let report = commands::bounds(&c)?;
            let text = serde_json::to_string_pretty(&report).context("serializing bounds")?;
            match out {
                Some(path) => std::fs::write(&path, text + "\n")
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Run {
            scenario,
            out,
            seeds,
            policies,
            horizon,
            jobs,
            debug_slack,
        } => {
            let c = qoshare_cli::load(&scenario)?;
            let opts = RunOptions {
                out,
                seeds,
                horizon,
                policies,
                jobs,
                debug_slack,
                solver_trace: verbose > 0,
            };
            let outcomes = commands::run(&c, &opts)?;
            commands::print_overview(std::io::stdout().lock(), &outcomes).context("writing overview")?;
            if verbose > 0 {
                for o in &outcomes {
                    eprintln!("{}", o.dir.display());
                }
            }
            Ok(())
        }
        Command::Compare { run_a, run_b, out } => {
            let rows = match out {
                Some(path) => {
                    let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    output::compare_runs(&run_a, &run_b, std::io::BufWriter::new(f))?
                }
                None => {
                    let stdout = std::io::stdout().lock();
                    let n = output::compare_runs(&run_a, &run_b, stdout)?;
                    std::io::stdout().flush().ok();
                    n
                }
            };
            if verbose > 0 {
                eprintln!("{rows} paired rows");
            }
            Ok(())
        }
    }
}
