//! Monte Carlo fleet of TCLs executing broadcast randomized policies.
//!
//! Each TCL owns a ChaCha stream keyed by (master seed, index), so results do
//! not depend on how rayon partitions the fleet. Within a step the TCL reads
//! its bin, draws its next mode (broadcast policy when unlocked, thermostat
//! otherwise) and then integrates its temperature under the new mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expanded::{advance_counter, ExpandedMarginal, Layout, PolicyPair};
use crate::generator::{drift, max_deadband_drift, TclParams};
use crate::grid::GridSpec;
use crate::{Error, Mode, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    /// Deterministic temperature, forward Euler.
    Ode,
    /// Euler–Maruyama with the model's σ².
    Sde,
}

#[derive(Debug, Clone)]
pub struct FleetConfig {
    pub grid: GridSpec,
    pub params: TclParams,
    pub tau: usize,
    pub dt_minutes: f64,
    pub noise: Noise,
    /// Integrator substeps per policy step.
    pub substeps: usize,
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.tau < 1 {
            return Err(Error::InvalidParameter("lockout tau must be at least 1".into()));
        }
        if self.substeps < 1 {
            return Err(Error::InvalidParameter("at least one integrator substep is needed".into()));
        }
        if !(self.dt_minutes.is_finite() && self.dt_minutes > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {} min", self.dt_minutes)));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.grid.n, self.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TclState {
    pub theta: f64,
    pub mode: Mode,
    pub lockout: usize,
    pub stream: u64,
}

/// Per-TCL QoS bookkeeping.
#[derive(Debug, Clone, Copy, Default)]
struct Ledger {
    last_switch: Option<usize>,
    min_gap: Option<usize>,
    violations: usize,
    switches: usize,
    max_excursion: f64,
}

#[derive(Debug, Clone)]
struct Tcl {
    state: TclState,
    rng: ChaCha8Rng,
    ledger: Ledger,
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone)]
pub struct Fleet {
    pub config: FleetConfig,
    tcls: Vec<Tcl>,
    /// Steps taken so far.
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetSnapshot {
    pub k: usize,
    pub n_on: usize,
    /// `P0 · (number on)`, kW.
    pub power: f64,
    pub histogram: ExpandedMarginal,
}

impl Fleet {
    /// Samples `(mode, bin, counter)` i.i.d. from `nu_hat`, temperature
    /// uniform within the bin.
    pub fn from_marginal(config: FleetConfig, n_tcl: usize, nu_hat: &ExpandedMarginal, seed: u64) -> Result<Self> {
        config.validate()?;
        nu_hat.validate(1e-9)?;
        if nu_hat.layout != config.layout() {
            return Err(Error::Dimension("initial marginal layout does not match the fleet".into()));
        }
        let mut cdf = Vec::with_capacity(nu_hat.values.len());
        let mut acc = 0.0;
        for v in &nu_hat.values {
            acc += v.max(0.0);
            cdf.push(acc);
        }
        let layout = nu_hat.layout;
        let grid = &config.grid;
        let tcls = (0..n_tcl)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, i as u64);
                let u: f64 = rng.gen::<f64>() * acc;
                let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                let (mode, bin, l) = layout.state(idx);
                let (lo, hi) = grid.bin_edges(mode, bin);
                let theta = lo + rng.gen::<f64>() * (hi - lo);
                Tcl {
                    state: TclState {
                        theta,
                        mode,
                        lockout: l,
                        stream: i as u64,
                    },
                    rng,
                    ledger: Ledger::default(),
                }
            })
            .collect();
        Ok(Self { config, tcls, k: 0 })
    }

    /// Temperatures uniform over the deadband, modes a fair coin, unlocked.
    pub fn uniform(config: FleetConfig, n_tcl: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let (lo, hi) = (config.grid.lambda_min, config.grid.lambda_max);
        let tcls = (0..n_tcl)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, i as u64);
                let theta = lo + rng.gen::<f64>() * (hi - lo);
                let mode = if rng.gen::<bool>() { Mode::On } else { Mode::Off };
                Tcl {
                    state: TclState {
                        theta,
                        mode,
                        lockout: 0,
                        stream: i as u64,
                    },
                    rng,
                    ledger: Ledger::default(),
                }
            })
            .collect();
        Ok(Self { config, tcls, k: 0 })
    }

    pub fn len(&self) -> usize {
        self.tcls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tcls.is_empty()
    }

    pub fn states(&self) -> Vec<TclState> {
        self.tcls.iter().map(|t| t.state).collect()
    }

    pub fn snapshot(&self) -> FleetSnapshot {
        let layout = self.config.layout();
        let mut counts = vec![0usize; layout.len()];
        let mut n_on = 0;
        for t in &self.tcls {
            let s = &t.state;
            let bin = self.config.grid.bin(s.theta, s.mode);
            counts[layout.index(s.mode, bin, s.lockout)] += 1;
            n_on += (s.mode == Mode::On) as usize;
        }
        let n = self.tcls.len().max(1) as f64;
        FleetSnapshot {
            k: self.k,
            n_on,
            power: self.config.params.p0 * n_on as f64,
            histogram: ExpandedMarginal {
                layout,
                values: counts.into_iter().map(|c| c as f64 / n).collect(),
            },
        }
    }

    /// One policy step at ambient `theta_a`.
    pub fn step(&mut self, gs: &PolicyPair, theta_a: f64) -> Result<()> {
        let cfg = &self.config;
        gs.validate(&cfg.grid)?;
        let k = self.k;
        let (lmin, lmax) = (cfg.grid.lambda_min, cfg.grid.lambda_max);
        let h = cfg.dt_minutes / 60.0 / cfg.substeps as f64;
        let noise_sd = (cfg.params.sigma2 * h).sqrt();
        let n = cfg.grid.n;
        self.tcls.par_iter_mut().for_each(|t| {
            let s = &mut t.state;
            let excursion = (s.theta - lmax).max(lmin - s.theta).max(0.0);
            t.ledger.max_excursion = t.ledger.max_excursion.max(excursion);
            let bin = cfg.grid.bin(s.theta, s.mode);
            let p = match (s.lockout, s.mode) {
                (0, Mode::Off) => gs.switch_on[bin - 1],
                (0, Mode::On) => gs.switch_off[bin - 1],
                (_, Mode::Off) => (bin == n) as u8 as f64,
                (_, Mode::On) => (bin == 1) as u8 as f64,
            };
            let u: f64 = t.rng.gen();
            if u < p {
                s.mode = s.mode.flip();
                s.lockout = 1;
                let l = &mut t.ledger;
                if let Some(prev) = l.last_switch {
                    let gap = k - prev;
                    l.min_gap = Some(l.min_gap.map_or(gap, |g| g.min(gap)));
                    if gap < cfg.tau {
                        l.violations += 1;
                    }
                }
                l.last_switch = Some(k);
                l.switches += 1;
            } else {
                s.lockout = advance_counter(s.lockout, cfg.tau);
            }
            for _ in 0..cfg.substeps {
                s.theta += drift(s.theta, s.mode, theta_a, &cfg.params) * h;
                if cfg.noise == Noise::Sde {
                    let z: f64 = t.rng.sample(StandardNormal);
                    s.theta += noise_sd * z;
                }
            }
        });
        self.k += 1;
        Ok(())
    }

    /// Forgets switch and excursion history (e.g. after a warm-up), keeping
    /// the last switch time so gaps across the boundary still count.
    pub fn reset_ledger(&mut self) {
        for t in &mut self.tcls {
            t.ledger = Ledger {
                last_switch: t.ledger.last_switch,
                ..Ledger::default()
            };
        }
    }

    pub fn qos(&self) -> FleetQos {
        let mut q = FleetQos {
            min_gap_steps: None,
            cycling_violations: 0,
            tcls_with_violations: 0,
            switches: 0,
            excursions: Vec::with_capacity(self.tcls.len()),
        };
        for t in &self.tcls {
            let l = &t.ledger;
            if let Some(g) = l.min_gap {
                q.min_gap_steps = Some(q.min_gap_steps.map_or(g, |m: usize| m.min(g)));
            }
            q.cycling_violations += l.violations;
            q.tcls_with_violations += (l.violations > 0) as usize;
            q.switches += l.switches;
            q.excursions.push(l.max_excursion);
        }
        q
    }
}

/// QoS counters gathered while stepping.
#[derive(Debug, Clone)]
pub struct FleetQos {
    pub min_gap_steps: Option<usize>,
    pub cycling_violations: usize,
    pub tcls_with_violations: usize,
    pub switches: usize,
    /// Largest excursion beyond the deadband per TCL, °C, seen at step times.
    pub excursions: Vec<f64>,
}

/// Everything the audit needs from a run.
#[derive(Debug, Clone)]
pub struct FleetTrace {
    /// Snapshot before each policy step and one after the last.
    pub snapshots: Vec<FleetSnapshot>,
    pub qos: FleetQos,
    pub theta_a: Vec<f64>,
}

/// Runs `schedule` (one policy per step) and records snapshots.
/// The final snapshot is taken so the ledger sees the final temperatures.
pub fn run_schedule(fleet: &mut Fleet, schedule: &[PolicyPair], theta_a: &[f64]) -> Result<FleetTrace> {
    if theta_a.len() < schedule.len() {
        return Err(Error::Dimension(format!(
            "{} ambient samples for {} policy steps",
            theta_a.len(),
            schedule.len()
        )));
    }
    let mut snapshots = Vec::with_capacity(schedule.len() + 1);
    for (gs, &ta) in schedule.iter().zip(theta_a) {
        snapshots.push(fleet.snapshot());
        fleet.step(gs, ta)?;
    }
    snapshots.push(fleet.snapshot());
    // Fold the last temperatures into the excursion ledger.
    let (lmin, lmax) = (fleet.config.grid.lambda_min, fleet.config.grid.lambda_max);
    for t in &mut fleet.tcls {
        let e = (t.state.theta - lmax).max(lmin - t.state.theta).max(0.0);
        t.ledger.max_excursion = t.ledger.max_excursion.max(e);
    }
    Ok(FleetTrace {
        snapshots,
        qos: fleet.qos(),
        theta_a: theta_a[..schedule.len()].to_vec(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcursionStats {
    pub max: f64,
    pub p50: f64,
    pub p99: f64,
    pub p999: f64,
    /// Allowed excursion: one step of the largest deadband drift (plus four
    /// noise standard deviations under the SDE).
    pub bound: f64,
    pub over_bound: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_tcl: usize,
    pub steps: usize,
    pub tau_minutes: f64,
    pub min_switch_gap_minutes: Option<f64>,
    pub cycling_violations: usize,
    pub tcls_with_violations: usize,
    pub switches: usize,
    pub excursion: ExcursionStats,
    pub rmse_kw: f64,
    /// RMSE divided by `P_agg`.
    pub rmse_fraction: f64,
    pub tv: Vec<f64>,
    pub tv_mean: f64,
}

impl AuditReport {
    pub fn qos_ok(&self) -> bool {
        self.cycling_violations == 0 && self.excursion.over_bound == 0
    }
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// QoS and tracking report. `reference` (kW) and `model` are compared with
/// the snapshots step by step over their common length.
pub fn audit(trace: &FleetTrace, config: &FleetConfig, reference: &[f64], model: &[ExpandedMarginal]) -> AuditReport {
    let n_tcl = trace.qos.excursions.len();
    let mut ex = trace.qos.excursions.clone();
    ex.sort_by(f64::total_cmp);
    let dt_h = config.dt_minutes / 60.0;
    let drift_bound = trace
        .theta_a
        .iter()
        .map(|&ta| max_deadband_drift(&config.grid, ta, &config.params))
        .fold(0.0, f64::max)
        * dt_h;
    let bound = match config.noise {
        Noise::Ode => drift_bound,
        Noise::Sde => drift_bound + 4.0 * (config.params.sigma2 * dt_h).sqrt(),
    };
    // A float tolerance on the bound, far below any physical scale.
    let over_bound = match config.noise {
        Noise::Ode => ex.iter().filter(|&&e| e > bound + 1e-9).count(),
        Noise::Sde => (percentile(&ex, 0.999) > bound) as usize,
    };
    let steps = trace.snapshots.len();
    let n_err = reference.len().min(steps);
    let rmse_kw = if n_err == 0 {
        0.0
    } else {
        (trace.snapshots[..n_err]
            .iter()
            .zip(reference)
            .map(|(s, r)| (s.power - r).powi(2))
            .sum::<f64>()
            / n_err as f64)
            .sqrt()
    };
    let p_agg = config.params.p0 * n_tcl as f64;
    let tv: Vec<f64> = trace
        .snapshots
        .iter()
        .zip(model)
        .map(|(s, m)| s.histogram.tv_distance(m))
        .collect();
    let tv_mean = if tv.is_empty() { 0.0 } else { tv.iter().sum::<f64>() / tv.len() as f64 };
    AuditReport {
        n_tcl,
        steps,
        tau_minutes: config.tau as f64 * config.dt_minutes,
        min_switch_gap_minutes: trace.qos.min_gap_steps.map(|g| g as f64 * config.dt_minutes),
        cycling_violations: trace.qos.cycling_violations,
        tcls_with_violations: trace.qos.tcls_with_violations,
        switches: trace.qos.switches,
        excursion: ExcursionStats {
            max: ex.last().copied().unwrap_or(0.0),
            p50: percentile(&ex, 0.5),
            p99: percentile(&ex, 0.99),
            p999: percentile(&ex, 0.999),
            bound,
            over_bound,
        },
        rmse_kw,
        rmse_fraction: if p_agg > 0.0 { rmse_kw / p_agg } else { 0.0 },
        tv,
        tv_mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn config(tau: usize, noise: Noise) -> FleetConfig {
        FleetConfig {
            grid: build_grid(20.0, 22.0, 10, 2).unwrap(),
            params: TclParams::reference(),
            tau,
            dt_minutes: 1.0,
            noise,
            substeps: 1,
        }
    }

    #[test]
    fn point_mass_initialization() {
        let cfg = config(5, Noise::Ode);
        let nu = ExpandedMarginal::point_mass(cfg.layout(), Mode::Off, 7, 0);
        let f = Fleet::from_marginal(cfg.clone(), 500, &nu, 3).unwrap();
        let (lo, hi) = cfg.grid.bin_edges(Mode::Off, 7);
        for s in f.states() {
            assert_eq!(s.mode, Mode::Off);
            assert_eq!(s.lockout, 0);
            assert!(s.theta >= lo && s.theta < hi);
            assert_eq!(cfg.grid.bin(s.theta, Mode::Off), 7);
        }
    }

    #[test]
    fn same_seed_same_fleet() {
        let cfg = config(5, Noise::Sde);
        let nu = ExpandedMarginal {
            layout: cfg.layout(),
            values: vec![1.0 / cfg.layout().len() as f64; cfg.layout().len()],
        };
        let mut a = Fleet::from_marginal(cfg.clone(), 1000, &nu, 9).unwrap();
        let mut b = Fleet::from_marginal(cfg.clone(), 1000, &nu, 9).unwrap();
        let gs = PolicyPair::from_kappa(&cfg.grid, &vec![0.1; 9], &vec![0.05; 8]).unwrap();
        for _ in 0..20 {
            a.step(&gs, 32.0).unwrap();
            b.step(&gs, 32.0).unwrap();
        }
        assert_eq!(a.states(), b.states());
        let c = Fleet::from_marginal(cfg, 1000, &nu, 10).unwrap();
        assert_ne!(a.states()[0].theta, c.states()[0].theta);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = config(5, Noise::Sde);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut f = Fleet::uniform(cfg.clone(), 3000, 1).unwrap();
                let gs = PolicyPair::from_kappa(&cfg.grid, &vec![0.2; 9], &vec![0.1; 8]).unwrap();
                for _ in 0..30 {
                    f.step(&gs, 31.0).unwrap();
                }
                f.states()
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn thermostat_keeps_interior_units() {
        let cfg = config(5, Noise::Ode);
        let mut f = Fleet::uniform(cfg.clone(), 2000, 5).unwrap();
        // Keep only units well inside the deadband.
        f.tcls.retain(|t| (20.5..21.5).contains(&t.state.theta));
        let before = f.states();
        f.step(&PolicyPair::thermostat(&cfg.grid), 32.0).unwrap();
        for (a, b) in before.iter().zip(f.states()) {
            assert_eq!(a.mode, b.mode);
        }
    }

    #[test]
    fn top_off_bin_always_switches() {
        let cfg = config(5, Noise::Ode);
        let nu = ExpandedMarginal::point_mass(cfg.layout(), Mode::Off, 12, 0);
        let mut f = Fleet::from_marginal(cfg.clone(), 300, &nu, 1).unwrap();
        let gs = PolicyPair::from_kappa(&cfg.grid, &vec![0.0; 9], &vec![0.7; 8]).unwrap();
        f.step(&gs, 32.0).unwrap();
        assert!(f.states().iter().all(|s| s.mode == Mode::On && s.lockout == 1));
    }

    #[test]
    fn power_counts_on_units() {
        let cfg = config(5, Noise::Ode);
        let mut f = Fleet::uniform(cfg, 4, 0).unwrap();
        for (t, m) in f.tcls.iter_mut().zip([Mode::On, Mode::Off, Mode::On, Mode::On]) {
            t.state.mode = m;
        }
        let s = f.snapshot();
        assert_eq!(s.n_on, 3);
        assert!((s.power - 16.5).abs() < 1e-12);
        assert!((s.histogram.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thermostat_run_respects_qos() {
        let cfg = config(5, Noise::Ode);
        let mut f = Fleet::uniform(cfg.clone(), 2000, 2).unwrap();
        let ta: Vec<f64> = (0..300).map(|k| 30.0 + 3.0 * (k as f64 / 50.0).sin()).collect();
        let sched = vec![PolicyPair::thermostat(&cfg.grid); 300];
        let trace = run_schedule(&mut f, &sched, &ta).unwrap();
        let rep = audit(&trace, &cfg, &[], &[]);
        assert_eq!(rep.cycling_violations, 0);
        assert!(rep.min_switch_gap_minutes.unwrap() >= 5.0);
        assert_eq!(rep.excursion.over_bound, 0, "{:?}", rep.excursion);
        assert!(rep.excursion.max > 0.0);
    }

    #[test]
    fn exact_tracking_has_zero_error() {
        let cfg = config(5, Noise::Ode);
        let mut f = Fleet::uniform(cfg.clone(), 100, 4).unwrap();
        let sched = vec![PolicyPair::thermostat(&cfg.grid); 10];
        let trace = run_schedule(&mut f, &sched, &[32.0; 10]).unwrap();
        let r: Vec<f64> = trace.snapshots.iter().map(|s| s.power).collect();
        let rep = audit(&trace, &cfg, &r, &[]);
        assert_eq!(rep.rmse_kw, 0.0);
    }

    #[test]
    fn short_gaps_are_counted() {
        let cfg = config(5, Noise::Ode);
        let nu = ExpandedMarginal::point_mass(cfg.layout(), Mode::On, 1, 2);
        let mut f = Fleet::from_marginal(cfg.clone(), 10, &nu, 1).unwrap();
        for t in &mut f.tcls {
            t.ledger.last_switch = Some(0);
        }
        f.k = 2;
        f.step(&PolicyPair::thermostat(&cfg.grid), 32.0).unwrap();
        let q = f.qos();
        assert_eq!(q.cycling_violations, 10);
        assert_eq!(q.min_gap_steps, Some(2));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert!((percentile(&v, 0.99) - 3.96).abs() < 1e-12);
    }
}
