//! End-to-end scenarios: plan, simulate with audit, and model validation.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tcl_core::expanded::{rollout, stationary, ExpandedMarginal, PolicyPair, StepModel};
use tcl_core::generator::fleet_baseline;
use tcl_core::fleet::{audit, run_schedule, AuditReport, Fleet, FleetConfig, FleetTrace};
use tcl_core::synthesis::{
    plan, verify_equivalence, EquivalenceReport, PlanProblem, PlanSolution, SolveDiagnostics,
};

use crate::config::{Resolved, ScenarioConfig};
use crate::{io, CliError};

/// Fleet after the thermostat-only warm-up. Deterministic in the seed, so
/// planning and simulation see the same units.
pub fn warmed_fleet(res: &Resolved) -> Result<Fleet, CliError> {
    let f = &res.config.fleet;
    let mut fleet = Fleet::uniform(res.fleet_config(), f.n_tcl, f.seed)?;
    let steps = (f.warmup_minutes / res.config.plan.dt_minutes).round() as usize;
    let ts = PolicyPair::thermostat(&res.grid);
    for _ in 0..steps {
        fleet.step(&ts, res.theta_a[0])?;
    }
    fleet.reset_ledger();
    Ok(fleet)
}

/// Everything later subcommands need from a plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    pub config: ScenarioConfig,
    pub nu_hat: ExpandedMarginal,
    pub theta_a: Vec<f64>,
    pub r_ba: Vec<f64>,
    /// Planned aggregate power, kW.
    pub reference: Vec<f64>,
    pub schedule: Vec<PolicyPair>,
    pub cost_kw2: f64,
    pub diagnostics: SolveDiagnostics,
    pub equivalence: EquivalenceReport,
}

pub struct PlanOutcome {
    pub problem: PlanProblem,
    pub solution: PlanSolution,
    pub file: PlanFile,
}

pub fn plan_problem(res: &Resolved, nu_hat: ExpandedMarginal) -> PlanProblem {
    PlanProblem {
        grid: res.grid.clone(),
        params: res.params,
        tau: res.tau,
        dt_minutes: res.config.plan.dt_minutes,
        r_ba: res.r_ba.clone(),
        theta_a: res.theta_a.clone(),
        nu_hat,
        n_tcl: res.config.fleet.n_tcl,
        monotonicity: res.config.plan.monotonicity,
        forbid_early_forced_switch: res.config.plan.forbid_early_forced_switch,
    }
}

pub fn run_plan(res: &Resolved) -> Result<PlanOutcome, CliError> {
    let nu_hat = warmed_fleet(res)?.snapshot().histogram;
    let problem = plan_problem(res, nu_hat);
    let solution = plan(&problem, &res.config.settings())?;
    let equivalence = verify_equivalence(&solution, &problem)?;
    let file = PlanFile {
        config: res.config.clone(),
        nu_hat: problem.nu_hat.clone(),
        theta_a: problem.theta_a.clone(),
        r_ba: problem.r_ba.clone(),
        reference: solution.reference.clone(),
        schedule: solution.schedule.clone(),
        cost_kw2: solution.cost,
        diagnostics: solution.diagnostics.clone(),
        equivalence,
    };
    Ok(PlanOutcome { problem, solution, file })
}

/// `plan.json` and `plan.csv` (k, ambient, fleet baseline, r^BA, planned r).
pub fn write_plan(dir: &Path, res: &Resolved, file: &PlanFile) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    io::write_json(&dir.join("plan.json"), file)?;
    let rows: Vec<Vec<f64>> = (0..file.reference.len())
        .map(|k| {
            let base = fleet_baseline(res.config.fleet.n_tcl, file.theta_a[k], &res.params);
            vec![k as f64, file.theta_a[k], base, file.r_ba[k], file.reference[k]]
        })
        .collect();
    io::write_table(&dir.join("plan.csv"), &res.header(), &["k", "theta_a", "baseline", "r_ba", "r"], &rows)
}

pub struct SimOutcome {
    pub trace: FleetTrace,
    pub report: AuditReport,
    /// Per step: k, r^BA, r, y, γ^E, TV.
    pub rows: Vec<Vec<f64>>,
}

pub const TRACE_COLUMNS: [&str; 6] = ["k", "r_ba", "r", "y", "gamma_e", "tv"];

/// Replays the plan on the warmed-up fleet and audits it against the
/// planned reference and the chain's prediction.
pub fn run_simulation(res: &Resolved, plan: &PlanFile) -> Result<SimOutcome, CliError> {
    let mut fleet = warmed_fleet(res)?;
    if fleet.snapshot().histogram != plan.nu_hat {
        return Err(CliError::Config(
            "the fleet built from this config does not reproduce the plan's initial histogram (different seed, size or warm-up?)".into(),
        ));
    }
    let t = plan.reference.len();
    if plan.schedule.len() != t || plan.theta_a.len() != t {
        return Err(CliError::Config("plan file is inconsistent: schedule, weather and reference lengths differ".into()));
    }
    let models = plan
        .theta_a
        .iter()
        .map(|&ta| StepModel::new(&res.grid, &res.params, res.tau, res.config.plan.dt_minutes, ta))
        .collect::<tcl_core::Result<Vec<_>>>()?;
    let marginals = rollout(&plan.nu_hat, &res.grid, &models[..t - 1], &plan.schedule[..t - 1])?;
    let trace = run_schedule(&mut fleet, &plan.schedule[..t - 1], &plan.theta_a[..t - 1])?;
    let cfg = res.fleet_config();
    let report = audit(&trace, &cfg, &plan.reference, &marginals);
    let p_agg = res.p_agg();
    let rows = (0..t)
        .map(|k| {
            vec![
                k as f64,
                plan.r_ba[k],
                plan.reference[k],
                trace.snapshots[k].power,
                p_agg * marginals[k].on_mass(),
                report.tv[k],
            ]
        })
        .collect();
    Ok(SimOutcome { trace, report, rows })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditFile {
    pub config: ScenarioConfig,
    pub report: AuditReport,
}

pub fn write_simulation(dir: &Path, res: &Resolved, sim: &SimOutcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    io::write_table(&dir.join("trace.csv"), &res.header(), &TRACE_COLUMNS, &sim.rows)?;
    io::write_json(
        &dir.join("audit.json"),
        &AuditFile {
            config: res.config.clone(),
            report: sim.report.clone(),
        },
    )
}

/// Human-readable QoS verdict of an audit; `Err` names the violation.
pub fn check_qos(report: &AuditReport) -> Result<(), CliError> {
    if report.cycling_violations > 0 {
        return Err(CliError::Qos(format!(
            "{} switches closer than the {} min lockout, in {} units",
            report.cycling_violations, report.tau_minutes, report.tcls_with_violations
        )));
    }
    if report.excursion.over_bound > 0 {
        return Err(CliError::Qos(format!(
            "temperature excursion {:.4} °C exceeds the bound {:.4} °C",
            report.excursion.max, report.excursion.bound
        )));
    }
    Ok(())
}

/// The validation schedule: κ oscillates around its base value.
pub fn kappa_schedule(res: &Resolved, steps: usize) -> Result<Vec<PolicyPair>, CliError> {
    let v = &res.config.validate;
    let dt = res.config.plan.dt_minutes;
    let n_on = res.grid.free_off_bins().count();
    let n_off = res.grid.free_on_bins().count();
    (0..steps)
        .map(|k| {
            let phase = 2.0 * PI * k as f64 * dt / v.period_minutes;
            let on = v.kappa_on * (1.0 + v.swing * phase.sin());
            let off = v.kappa_off * (1.0 + v.swing * phase.cos());
            Ok(PolicyPair::from_kappa(&res.grid, &vec![on; n_on], &vec![off; n_off])?)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_tcl: usize,
    pub steps: usize,
    pub seeds: Vec<u64>,
    /// Mean over the horizon of TV(h_k, ν^E_k), per seed.
    pub tv_mean_per_seed: Vec<f64>,
    pub tv_mean: f64,
    pub tv_max: f64,
    /// RMSE of fleet power against the chain output, over P_agg, per seed.
    pub power_rmse_fraction: Vec<f64>,
}

/// Runs the κ schedule on the chain and on fleets sampled i.i.d. from the
/// chain's stationary marginal under the first policy.
pub fn validate_model(res: &Resolved, n_tcl: usize, seeds: &[u64]) -> Result<ValidationReport, CliError> {
    let v = &res.config.validate;
    let dt = res.config.plan.dt_minutes;
    let schedule = kappa_schedule(res, v.steps)?;
    let ambient: Vec<f64> = (0..v.steps).map(|k| res.theta_a[k.min(res.theta_a.len() - 1)]).collect();
    let models = ambient
        .iter()
        .map(|&ta| StepModel::new(&res.grid, &res.params, res.tau, dt, ta))
        .collect::<tcl_core::Result<Vec<_>>>()?;
    let layout = tcl_core::expanded::Layout::new(res.grid.n, res.tau);
    let uniform = ExpandedMarginal {
        layout,
        values: vec![1.0 / layout.len() as f64; layout.len()],
    };
    let nu_hat = stationary(&uniform, &res.grid, &models[0], &schedule[0], 1e-13, 200_000)?;
    let marginals = rollout(&nu_hat, &res.grid, &models, &schedule)?;
    let cfg = FleetConfig {
        noise: v.noise,
        ..res.fleet_config()
    };
    let p_agg = tcl_core::generator::aggregate_capacity(n_tcl, &res.params);
    let mut tv_mean_per_seed = Vec::with_capacity(seeds.len());
    let mut power_rmse_fraction = Vec::with_capacity(seeds.len());
    let mut tv_max = 0.0f64;
    for &seed in seeds {
        let mut fleet = Fleet::from_marginal(cfg.clone(), n_tcl, &nu_hat, seed)?;
        let trace = run_schedule(&mut fleet, &schedule, &ambient)?;
        let gamma: Vec<f64> = marginals.iter().map(|m| p_agg * m.on_mass()).collect();
        let rep = audit(&trace, &cfg, &gamma, &marginals);
        tv_max = rep.tv.iter().copied().fold(tv_max, f64::max);
        tv_mean_per_seed.push(rep.tv_mean);
        power_rmse_fraction.push(rep.rmse_fraction);
    }
    let tv_mean = tv_mean_per_seed.iter().sum::<f64>() / seeds.len().max(1) as f64;
    Ok(ValidationReport {
        n_tcl,
        steps: v.steps,
        seeds: seeds.to_vec(),
        tv_mean_per_seed,
        tv_mean,
        tv_max,
        power_rmse_fraction,
    })
}
