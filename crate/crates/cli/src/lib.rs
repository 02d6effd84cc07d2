//! Command-line front end: configuration, scenario runners and writers.

#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "predprey",
    version,
    about = "Age-structured predator-prey chemostat model"
)]
pub struct Cli {
    /// TOML configuration file; defaults reproduce the reference runs.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plot: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady state, adjoint weights and summary values.
    Equilibrium,
    /// Closed- or open-loop simulation.
    Simulate,
    /// Region-of-attraction estimate for the configured law.
    Roa,
    /// Cartesian sweep over the `[sweep]` lists, run in parallel.
    Sweep,
    /// Acceptance suite.
    Verify,
    /// Print the effective configuration.
    Config,
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = config::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.output.plot |= cli.plot;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::Equilibrium => {
            let s = commands::equilibrium(&cfg, &out)?;
            println!(
                "zeta = ({:.6}, {:.6}), lambda = ({:.5}, {:.5}), x*(0) = ({:.4}, {:.4}), u* in ({:.4}, {:.4})",
                s.zeta[0],
                s.zeta[1],
                s.lambda[0],
                s.lambda[1],
                s.x0_star[0],
                s.x0_star[1],
                s.feasible_interval.0,
                s.feasible_interval.1
            );
        }
        Command::Simulate => {
            let s = commands::simulate(&cfg, &out)?;
            for r in &s.runs {
                println!(
                    "{} / {}: min u {:.5}, |eta(T)| {:.3e}, settling time {}",
                    r.controller,
                    r.solver,
                    r.min_u,
                    r.final_eta_norm,
                    r.settling_time.map_or("none".into(), |t| format!("{t:.3}"))
                );
            }
            if let Some(d) = s.cross_validation {
                println!("solver discrepancy {d:.3e}");
            }
        }
        Command::Roa => commands::roa(&cfg, &out)?,
        Command::Sweep => {
            let rows = commands::sweep(&cfg, &out)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!(
                "{} runs, {failed} failed; see {}",
                rows.len(),
                out.join("sweep.csv").display()
            );
        }
        Command::Verify => {
            commands::verify(&cfg, &out)?;
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}
