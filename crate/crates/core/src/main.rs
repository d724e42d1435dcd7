// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rydberg_mcwf::cli::{commands, parse_config};
use rydberg_mcwf::Result;

#[derive(Parser)]
#[command(name = "rydberg-mcwf", version, about = "Quantum-jump simulation of driven dissipative Rydberg ensembles")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `run.workers`; results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble time series of excitation statistics.
    Dynamics(Common),
    /// Steady state from long time averages.
    Steady(Common),
    /// One steady-state run per value of the `[sweep]` axis.
    Sweep(Common),
    /// Compare trajectory averages with the dense master equation (N <= 10).
    OracleCompare(Common),
    /// Rerun a reduced ensemble at increasing excitation cutoffs.
    Convergence(Common),
    /// Print derived scales and problem size.
    Info {
        config: PathBuf,
    },
}

fn load(common: &Common) -> Result<rydberg_mcwf::cli::RunConfig> {
    let mut config = parse_config(&common.config)?;
    commands::output_dir_override(&mut config, common.out.as_deref());
    if common.workers.is_some() {
        config.run.workers = common.workers;
    }
    config.validate()?;
    Ok(config)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Dynamics(c) => {
            let (summary, writer) = commands::cmd_dynamics(&load(&c)?.resolve()?)?;
            commands::flush(writer)?;
            println!(
                "final <n_R> = {:.4} +- {:.4} ({} trajectories, dim {})",
                summary.final_mean, summary.final_mean_stderr, summary.trajectories, summary.dim
            );
        }
        Command::Steady(c) => {
            let (s, writer) = commands::cmd_steady(&load(&c)?.resolve()?)?;
            commands::flush(writer)?;
            println!("<n_R> = {:.4} +- {:.4}, Q = {:?}, D_rho = {:?}", s.mean, s.mean_stderr, s.q, s.d_rho);
        }
        Command::Sweep(c) => {
            let (rows, writer) = commands::cmd_sweep(&load(&c)?)?;
            if let Some(w) = writer {
                commands::flush(w)?;
            }
            for r in rows {
                println!("{} -> <n_R> = {:.4}, Q = {:?}", r.value, r.summary.mean, r.summary.q);
            }
        }
        Command::OracleCompare(c) => {
            let (report, writer) = commands::cmd_oracle_compare(&load(&c)?.resolve()?)?;
            commands::flush(writer)?;
            let worst = report
                .rows
                .iter()
                .map(|r| r.trace_distance / r.bootstrap_error)
                .fold(0.0, f64::max);
            println!(
                "{}: max D/err = {:.3} over {} samples, max |d<n_R>| = {:.4}",
                if report.pass { "PASS" } else { "FAIL" },
                worst,
                report.rows.len(),
                report.max_mean_deviation
            );
        }
        Command::Convergence(c) => {
            let (report, writer) = commands::cmd_convergence(&load(&c)?.resolve()?)?;
            commands::flush(writer)?;
            println!(
                "levels {:?}: max |d<n_R>| {:?}, converged at {:?}",
                report.n_max_levels, report.max_mean_difference, report.converged_at
            );
        }
        Command::Info { config } => {
            print!("{}", commands::cmd_info(&parse_config(&config)?.resolve()?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
