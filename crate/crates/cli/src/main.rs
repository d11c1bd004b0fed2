use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tcl_cli::scenario::{self, AuditFile, PlanFile};
use tcl_cli::{broadcast, io, CliError, Resolved};

/// Plan, broadcast and audit randomized switching policies for a fleet of
/// thermostatically controlled loads.
#[derive(Parser)]
#[command(name = "tclctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the planning program; writes plan.json and plan.csv.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay a plan on the simulated fleet; writes trace.csv and audit.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the aggregate model with simulated fleets under a fixed κ schedule.
    ValidateModel {
        #[arg(long)]
        config: PathBuf,
        /// Overrides validate.n_tcl.
        #[arg(long)]
        n_tcl: Option<usize>,
        /// Overrides validate.seeds.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the per-step broadcast payload of a plan.
    ExportBroadcast {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "out/broadcast.csv")]
        out: PathBuf,
    },
    /// Check an audit report; exits with 4 on any QoS violation.
    Audit {
        #[arg(long)]
        report: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan { config, out } => {
            let res = Resolved::load(&config)?;
            let outcome = scenario::run_plan(&res)?;
            scenario::write_plan(&out, &res, &outcome.file)?;
            let d = &outcome.file.diagnostics;
            println!(
                "plan: {} variables, {} constraints, {} iterations, {:.1} s",
                d.n_vars, d.n_constraints, d.iterations, d.seconds
            );
            println!(
                "cost {:.6e} kW^2, extracted rollout gap {:.2e}",
                outcome.file.cost_kw2, outcome.file.equivalence.relative_gap
            );
        }
        Command::Simulate { config, plan, out } => {
            let res = Resolved::load(&config)?;
            let plan: PlanFile = io::read_json(&plan)?;
            let sim = scenario::run_simulation(&res, &plan)?;
            scenario::write_simulation(&out, &res, &sim)?;
            let r = &sim.report;
            println!(
                "simulated {} units for {} steps: RMSE {:.1} kW ({:.3}% of capacity), mean TV {:.4}",
                r.n_tcl,
                r.steps,
                r.rmse_kw,
                100.0 * r.rmse_fraction,
                r.tv_mean
            );
        }
        Command::ValidateModel { config, n_tcl, seeds, out } => {
            let res = Resolved::load(&config)?;
            let v = &res.config.validate;
            let seeds: Vec<u64> = (0..seeds.unwrap_or(v.seeds)).collect();
            let rep = scenario::validate_model(&res, n_tcl.unwrap_or(v.n_tcl), &seeds)?;
            std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            io::write_json(&out.join("validation.json"), &(&res.config, &rep))?;
            println!(
                "{} units, {} seeds: mean TV {:.4} (max over steps and seeds {:.4})",
                rep.n_tcl,
                rep.seeds.len(),
                rep.tv_mean,
                rep.tv_max
            );
        }
        Command::ExportBroadcast { plan, out } => {
            let plan: PlanFile = io::read_json(&plan)?;
            let g = &plan.config.grid;
            let grid = tcl_core::grid::build_grid(g.lambda_min, g.lambda_max, g.q, g.m)
                .map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            }
            broadcast::export(&out, &plan.config.header(), &grid, &plan.schedule)?;
            println!(
                "{} steps, {} numbers per step",
                plan.schedule.len(),
                broadcast::payload_len(&grid)
            );
        }
        Command::Audit { report } => {
            let file: AuditFile = io::read_json(&report)?;
            let r = &file.report;
            println!(
                "min switch gap {} min (lockout {} min), {} cycling violations",
                r.min_switch_gap_minutes.map_or("n/a".to_string(), |g| g.to_string()),
                r.tau_minutes,
                r.cycling_violations
            );
            println!(
                "excursion max {:.4} °C, p99.9 {:.4} °C, bound {:.4} °C",
                r.excursion.max, r.excursion.p999, r.excursion.bound
            );
            println!("tracking RMSE {:.3}% of capacity, mean TV {:.4}", 100.0 * r.rmse_fraction, r.tv_mean);
            scenario::check_qos(r)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tclctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
