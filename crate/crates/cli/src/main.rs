//! `stab`: eigenvalue tables, open/closed-loop simulations, solution
//! convergence tables and cost reports for the coupled parabolic control
//! system, driven by a TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stab_core::experiments::{
    run_convergence, run_cost, run_eigs, run_simulation, ExperimentConfig, Precision,
};

#[derive(Parser)]
#[command(name = "stab", version, about = "Feedback stabilization experiments for a coupled parabolic system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// `full` switches CSV output to round-trip precision.
    #[arg(long)]
    precision: Option<String>,
}

impl Common {
    fn load(&self) -> stab_core::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        match self.precision.as_deref() {
            None => {}
            Some("full") => cfg.precision = Precision::Full,
            Some("standard") => cfg.precision = Precision::Standard,
            Some(other) => {
                return Err(stab_core::Error::Config(format!(
                    "unknown precision {other:?} (expected full or standard)"
                )))
            }
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue errors and convergence orders; writes eigs.csv.
    Eigs {
        #[command(flatten)]
        common: Common,
    },
    /// Time integration per level; writes energy_*.csv and checkpoints.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Synthesize and apply the stabilizing feedback.
        #[arg(long)]
        controlled: bool,
        /// Run only this refinement level.
        #[arg(long)]
        level: Option<u32>,
        /// Dump Au, Bu, Qu, P in MatrixMarket format into this directory.
        #[arg(long, value_name = "DIR")]
        dump_riccati: Option<PathBuf>,
    },
    /// Inter-level solution/control errors at eval_time; writes table2.csv.
    Convergence {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-horizon quadratic cost per level; writes cost.csv.
    Cost {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> stab_core::Result<()> {
    match cli.command {
        Command::Eigs { common } => {
            let cfg = common.load()?;
            let table = run_eigs(&cfg)?;
            print!("{}", table.render());
            println!("wrote {}", cfg.output_dir.join("eigs.csv").display());
        }
        Command::Simulate { common, controlled, level, dump_riccati } => {
            let cfg = common.load()?;
            let runs = run_simulation(&cfg, controlled, level, dump_riccati.as_deref())?;
            for r in &runs {
                if let Some(n) = &r.notice {
                    println!("{n}");
                }
                let last = r.series.state_energy.last().unwrap();
                let t_last = r.series.times.last().unwrap();
                if controlled {
                    println!(
                        "level {}: {} unstable eigenvalue(s), ||Y({t_last})|| = {last:.6e}",
                        r.level, r.unstable_count
                    );
                } else {
                    println!("level {}: open loop, ||Y({t_last})|| = {last:.6e}", r.level);
                }
            }
            println!("wrote energy CSVs to {}", cfg.output_dir.display());
        }
        Command::Convergence { common } => {
            let cfg = common.load()?;
            let table = run_convergence(&cfg)?;
            print!("{}", table.render());
            println!("wrote {}", cfg.output_dir.join("table2.csv").display());
        }
        Command::Cost { common } => {
            let cfg = common.load()?;
            let report = run_cost(&cfg)?;
            println!("{:<8}{:<12}{:<16}diff_to_previous", "level", "h", "cost");
            for (i, (level, h, j)) in report.rows.iter().enumerate() {
                let d = if i == 0 {
                    "---".to_string()
                } else {
                    format!("{:.6e}", report.diffs[i - 1])
                };
                println!("{level:<8}{h:<12.6}{j:<16.8}{d}");
            }
            println!("wrote {}", cfg.output_dir.join("cost.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
