//! Scenario configuration (TOML) and its resolution against the input files.
//!
//! Every section has defaults matching the reference scenario, so a config
//! only needs to name its weather and target files. Relative paths are taken
//! relative to the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcl_core::expanded::StepModel;
use tcl_core::fleet::{FleetConfig, Noise};
use tcl_core::generator::{aggregate_capacity, TclParams};
use tcl_core::grid::{build_grid, GridSpec};
use tcl_core::solver::{Method, Settings};

use crate::io;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TclSection {
    pub r: f64,
    pub c: f64,
    pub p0: f64,
    pub eta: f64,
    /// °C²/h.
    pub sigma2: f64,
    pub lambda_set: f64,
}

impl Default for TclSection {
    fn default() -> Self {
        let p = TclParams::reference();
        Self {
            r: p.r,
            c: p.c,
            p0: p.p0,
            eta: p.eta,
            sigma2: p.sigma2,
            lambda_set: p.lambda_set,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub q: usize,
    pub m: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            lambda_min: 20.0,
            lambda_max: 22.0,
            q: 10,
            m: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSection {
    pub n_tcl: usize,
    pub seed: u64,
    pub noise: Noise,
    pub substeps: usize,
    /// Thermostat-only run before the snapshot that gives the initial marginal.
    pub warmup_minutes: f64,
}

impl Default for FleetSection {
    fn default() -> Self {
        Self {
            n_tcl: 20_000,
            seed: 1,
            noise: Noise::Ode,
            substeps: 1,
            warmup_minutes: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub dt_minutes: f64,
    pub horizon: usize,
    /// Lockout in steps. Give this or `lockout_minutes`, not both.
    pub tau: Option<usize>,
    pub lockout_minutes: Option<f64>,
    /// CSV of (minute, °C).
    pub weather: PathBuf,
    /// CSV of (step, kW).
    pub reference: PathBuf,
    pub monotonicity: bool,
    pub forbid_early_forced_switch: bool,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            dt_minutes: 1.0,
            horizon: 360,
            tau: None,
            lockout_minutes: None,
            weather: PathBuf::from("weather.csv"),
            reference: PathBuf::from("reference.csv"),
            monotonicity: true,
            forbid_early_forced_switch: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    InteriorPoint,
    Admm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: SolverMethod,
    /// Convergence tolerance (scaled residuals).
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: SolverMethod::InteriorPoint,
            eps: 1e-10,
            max_iter: 200,
        }
    }
}

/// Model-validation run: a κ schedule oscillating around a base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub n_tcl: usize,
    pub seeds: u64,
    pub steps: usize,
    pub kappa_on: f64,
    pub kappa_off: f64,
    /// Relative swing of κ over one period.
    pub swing: f64,
    pub period_minutes: f64,
    pub noise: Noise,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            n_tcl: 10_000,
            seeds: 10,
            steps: 360,
            kappa_on: 0.05,
            kappa_off: 0.05,
            swing: 0.5,
            period_minutes: 60.0,
            noise: Noise::Sde,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub tcl: TclSection,
    pub grid: GridSection,
    pub fleet: FleetSection,
    pub plan: PlanSection,
    pub solver: SolverSection,
    pub validate: ValidateSection,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn params(&self) -> TclParams {
        let t = &self.tcl;
        TclParams {
            r: t.r,
            c: t.c,
            p0: t.p0,
            eta: t.eta,
            sigma2: t.sigma2,
            lambda_set: t.lambda_set,
        }
    }

    /// Lockout in steps.
    pub fn tau(&self) -> Result<usize, CliError> {
        let dt = self.plan.dt_minutes;
        match (self.plan.tau, self.plan.lockout_minutes) {
            (Some(_), Some(_)) => Err(CliError::Config("give plan.tau or plan.lockout_minutes, not both".into())),
            (Some(t), None) => Ok(t),
            (None, Some(min)) => {
                let steps = min / dt;
                if !(steps.is_finite() && steps >= 1.0) || (steps - steps.round()).abs() > 1e-9 {
                    return Err(CliError::Config(format!(
                        "lockout of {min} min is not a positive whole number of {dt}-min steps"
                    )));
                }
                Ok(steps.round() as usize)
            }
            (None, None) => Ok(5),
        }
    }

    pub fn settings(&self) -> Settings {
        let s = &self.solver;
        match s.method {
            SolverMethod::InteriorPoint => Settings {
                method: Method::InteriorPoint,
                ipm_eps: s.eps,
                ipm_max_iter: s.max_iter,
                ..Settings::default()
            },
            SolverMethod::Admm => Settings {
                method: Method::Admm,
                eps_abs: s.eps,
                eps_rel: s.eps,
                max_iter: s.max_iter,
                ..Settings::default()
            },
        }
    }

    /// The config as `# `-prefixed TOML lines.
    pub fn header(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        let mut out = String::from("# resolved configuration\n");
        for line in body.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// A config checked against every module precondition, with its inputs
/// loaded onto the step grid.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ScenarioConfig,
    pub grid: GridSpec,
    pub params: TclParams,
    pub tau: usize,
    /// Ambient temperature per planning step.
    pub theta_a: Vec<f64>,
    /// Balancing-authority target per planning step, kW.
    pub r_ba: Vec<f64>,
}

impl Resolved {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = ScenarioConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.plan.weather, &mut config.plan.reference] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Self::from_config(config)
    }

    /// Runs every precondition before any computation.
    pub fn from_config(mut config: ScenarioConfig) -> Result<Self, CliError> {
        let cfg_err = |e: tcl_core::Error| CliError::Config(e.to_string());
        let params = config.params();
        params.validate().map_err(cfg_err)?;
        let g = &config.grid;
        let grid = build_grid(g.lambda_min, g.lambda_max, g.q, g.m).map_err(cfg_err)?;
        let tau = config.tau()?;
        config.plan.tau = Some(tau);
        config.plan.lockout_minutes = None;
        let p = &config.plan;
        if tau == 0 {
            return Err(CliError::Config("lockout tau must be at least one step".into()));
        }
        if !(p.dt_minutes.is_finite() && p.dt_minutes > 0.0) {
            return Err(CliError::Config(format!("plan.dt_minutes must be positive, got {}", p.dt_minutes)));
        }
        if p.horizon < 2 {
            return Err(CliError::Config("plan.horizon must be at least 2 steps".into()));
        }
        let f = &config.fleet;
        if f.n_tcl == 0 {
            return Err(CliError::Config("fleet.n_tcl must be positive".into()));
        }
        if !(f.warmup_minutes.is_finite() && f.warmup_minutes >= 0.0) {
            return Err(CliError::Config("fleet.warmup_minutes must be nonnegative".into()));
        }
        let v = &config.validate;
        for (name, k) in [("validate.kappa_on", v.kappa_on), ("validate.kappa_off", v.kappa_off)] {
            let lo = k * (1.0 - v.swing.abs());
            let hi = k * (1.0 + v.swing.abs());
            if !(lo >= 0.0 && hi <= 1.0) {
                return Err(CliError::Config(format!("{name} with swing {} leaves [0, 1]", v.swing)));
            }
        }
        if v.n_tcl == 0 || v.seeds == 0 || v.steps == 0 || !(v.period_minutes > 0.0) {
            return Err(CliError::Config("validate needs positive n_tcl, seeds, steps and period".into()));
        }
        if !(config.solver.eps > 0.0) || config.solver.max_iter == 0 {
            return Err(CliError::Config("solver needs a positive eps and max_iter".into()));
        }
        let theta_a = io::read_weather(&p.weather, p.dt_minutes, p.horizon)?;
        let r_ba = io::read_reference(&p.reference, p.horizon)?;
        let fleet = FleetConfig {
            grid: grid.clone(),
            params,
            tau,
            dt_minutes: p.dt_minutes,
            noise: f.noise,
            substeps: f.substeps,
        };
        fleet.validate().map_err(cfg_err)?;
        // Remark-4 bound, drift signs and CFL at every step's weather.
        for (k, &ta) in theta_a.iter().enumerate() {
            StepModel::new(&grid, &params, tau, p.dt_minutes, ta)
                .map_err(|e| CliError::Config(format!("step {k} (ambient {ta} °C): {e}")))?;
        }
        Ok(Self {
            config,
            grid,
            params,
            tau,
            theta_a,
            r_ba,
        })
    }

    pub fn fleet_config(&self) -> FleetConfig {
        FleetConfig {
            grid: self.grid.clone(),
            params: self.params,
            tau: self.tau,
            dt_minutes: self.config.plan.dt_minutes,
            noise: self.config.fleet.noise,
            substeps: self.config.fleet.substeps,
        }
    }

    pub fn p_agg(&self) -> f64 {
        aggregate_capacity(self.config.fleet.n_tcl, &self.params)
    }

    pub fn header(&self) -> String {
        self.config.header()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_scenario() {
        let c = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(c.grid.q, 10);
        assert_eq!(c.tau().unwrap(), 5);
        assert_eq!(c.fleet.n_tcl, 20_000);
        assert_eq!(c.params(), TclParams::reference());
    }

    #[test]
    fn lockout_minutes_convert_to_steps() {
        let c = ScenarioConfig::from_toml("[plan]\nlockout_minutes = 6.0\ndt_minutes = 2.0\n").unwrap();
        assert_eq!(c.tau().unwrap(), 3);
        let c = ScenarioConfig::from_toml("[plan]\nlockout_minutes = 5.0\ndt_minutes = 2.0\n").unwrap();
        assert!(c.tau().is_err());
        let c = ScenarioConfig::from_toml("[plan]\nlockout_minutes = 5.0\ntau = 5\n").unwrap();
        assert!(c.tau().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ScenarioConfig::from_toml("[grid]\nbins = 4\n").is_err());
    }

    #[test]
    fn header_round_trips() {
        let c = ScenarioConfig::default();
        let h = c.header();
        assert!(h.lines().all(|l| l.starts_with("# ")));
        let body: String = h.lines().skip(1).map(|l| format!("{}\n", &l[2..])).collect();
        assert_eq!(ScenarioConfig::from_toml(&body).unwrap(), c);
    }
}
