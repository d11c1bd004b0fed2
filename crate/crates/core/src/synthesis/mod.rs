//! Planning over joint distributions.
//!
//! The non-convex problem (choose policies, propagate marginals) becomes a
//! convex QP in the joint masses `J = diag(ν)·Φ`. Only the counter-0 joints
//! are free; locked states follow the thermostat, so their joints are linear
//! in the marginal and are substituted away. Per step the decision vector is
//!
//! ```text
//! [ ν (2N(τ+1)) | off-stay (N) | off-switch (N) | on-switch (N) | on-stay (N) ]
//! ```
//!
//! which gives `2N(τ+3)` variables per step. Targets are divided by `P_agg`
//! so the program works with fractions of the fleet.

use serde::{Deserialize, Serialize};

use crate::expanded::{rollout, ExpandedMarginal, Layout, PolicyPair, StepModel};
use crate::generator::{aggregate_capacity, TclParams};
use crate::grid::GridSpec;
use crate::markov::{thermostat_policy, OFF_OFF, OFF_ON, ON_OFF, ON_ON};
use crate::solver::{self, CscMatrix, QpProblem, Settings};
use crate::{Error, Mode, Result};

/// Marginal mass below which extraction falls back to the default rows.
pub const MASS_EPS: f64 = 1e-10;
/// Constraint tolerance accepted by [`extract_policies`].
pub const EXTRACT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct PlanProblem {
    pub grid: GridSpec,
    pub params: TclParams,
    pub tau: usize,
    pub dt_minutes: f64,
    /// Balancing-authority target per step, kW.
    pub r_ba: Vec<f64>,
    /// Ambient temperature per step, °C.
    pub theta_a: Vec<f64>,
    pub nu_hat: ExpandedMarginal,
    pub n_tcl: usize,
    pub monotonicity: bool,
    /// Forbid planned mass in forced-switch states while still locked.
    pub forbid_early_forced_switch: bool,
}

impl PlanProblem {
    pub fn horizon(&self) -> usize {
        self.r_ba.len()
    }

    pub fn p_agg(&self) -> f64 {
        aggregate_capacity(self.n_tcl, &self.params)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.grid.n, self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon() == 0 {
            return Err(Error::InvalidParameter("planning horizon must be at least one step".into()));
        }
        if self.theta_a.len() != self.horizon() {
            return Err(Error::Dimension(format!(
                "{} ambient samples for a {}-step horizon",
                self.theta_a.len(),
                self.horizon()
            )));
        }
        if self.nu_hat.layout != self.layout() {
            return Err(Error::Dimension("initial marginal layout does not match grid and tau".into()));
        }
        if self.n_tcl == 0 {
            return Err(Error::InvalidParameter("fleet size must be positive".into()));
        }
        if let Some(v) = self.r_ba.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("target {v} is not finite")));
        }
        self.nu_hat.validate(1e-9)
    }

    /// One chain model per planning step.
    pub fn step_models(&self) -> Result<Vec<StepModel>> {
        self.theta_a
            .iter()
            .map(|&t| StepModel::new(&self.grid, &self.params, self.tau, self.dt_minutes, t))
            .collect()
    }
}

/// Index map of the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub chain: Layout,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Joint {
    OffStay,
    OffSwitch,
    OnSwitch,
    OnStay,
}

impl VarLayout {
    pub fn per_step(&self) -> usize {
        self.chain.len() + 4 * self.chain.n_bins
    }

    pub fn len(&self) -> usize {
        self.per_step() * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nu(&self, k: usize, state: usize) -> usize {
        k * self.per_step() + state
    }

    pub fn joint(&self, k: usize, which: Joint, bin: usize) -> usize {
        let n = self.chain.n_bins;
        let block = match which {
            Joint::OffStay => 0,
            Joint::OffSwitch => 1,
            Joint::OnSwitch => 2,
            Joint::OnStay => 3,
        };
        k * self.per_step() + self.chain.len() + block * n + bin - 1
    }
}

/// Counter-0 joint masses of one step, indexed by bin - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepJoint {
    pub off_stay: Vec<f64>,
    pub off_switch: Vec<f64>,
    pub on_switch: Vec<f64>,
    pub on_stay: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AssembledQp {
    pub qp: QpProblem,
    pub vars: VarLayout,
    /// Logical variable -> QP column.
    pub column: Vec<usize>,
    /// Targets as fractions of `P_agg`.
    pub target: Vec<f64>,
    pub models: Vec<StepModel>,
    /// Thermostat trajectory as a QP point (in QP column order).
    pub witness: Vec<f64>,
    pub n_dynamics_rows: usize,
    pub n_monotonicity_rows: usize,
    pub n_locked_forced_bounds: usize,
}

/// Variable ordering for assembly; a permutation only relabels columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VariableOrder {
    Natural,
    /// `perm[logical] = column`.
    Permuted(Vec<usize>),
}

/// Switching probability a locked state (or the thermostat) applies, per bin - 1.
fn thermostat_probs(grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let ts = thermostat_policy(grid);
    (ts.off_to_on, ts.on_to_off)
}

pub fn assemble(problem: &PlanProblem) -> Result<AssembledQp> {
    assemble_with_order(problem, &VariableOrder::Natural)
}

pub fn assemble_with_order(problem: &PlanProblem, order: &VariableOrder) -> Result<AssembledQp> {
    problem.validate()?;
    let models = problem.step_models()?;
    let grid = &problem.grid;
    let n = grid.n;
    let tau = problem.tau;
    let chain = problem.layout();
    let h = chain.half();
    let t_plan = problem.horizon();
    let vars = VarLayout { chain, horizon: t_plan };
    let nv = vars.len();
    let column: Vec<usize> = match order {
        VariableOrder::Natural => (0..nv).collect(),
        VariableOrder::Permuted(p) => {
            let mut seen = vec![false; nv];
            if p.len() != nv || p.iter().any(|&c| c >= nv || std::mem::replace(&mut seen[c], true)) {
                return Err(Error::Dimension(format!("variable permutation must be a bijection on {nv} columns")));
            }
            p.clone()
        }
    };
    let p_agg = problem.p_agg();
    let target: Vec<f64> = problem.r_ba.iter().map(|r| r / p_agg).collect();
    let (ts_on, ts_off) = thermostat_probs(grid);

    // Thermostat witness trajectory (also a warm start).
    let ts_policies = vec![PolicyPair::thermostat(grid); t_plan.saturating_sub(1)];
    let ts_marg = rollout(&problem.nu_hat, grid, &models, &ts_policies)?;
    let witness = pack(&vars, &column, &ts_marg, &ts_policies, grid);

    let mut a_t: Vec<(usize, usize, f64)> = Vec::new();
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    let mut add_row = |entries: &[(usize, f64)], l: f64, u: f64, a_t: &mut Vec<(usize, usize, f64)>| {
        let r = lo.len();
        for &(v, c) in entries {
            a_t.push((r, column[v], c));
        }
        lo.push(l);
        hi.push(u);
    };

    // Box rows, one per variable, carrying the initial condition, the zero
    // ties of non-switching bins and the locked forced-switch bounds.
    let mut box_lo = vec![0.0; nv];
    let mut box_hi = vec![1.0; nv];
    for s in 0..chain.len() {
        box_lo[vars.nu(0, s)] = problem.nu_hat.values[s];
        box_hi[vars.nu(0, s)] = problem.nu_hat.values[s];
    }
    for k in 0..t_plan {
        for b in 1..=n {
            if !grid.free_off_bins().contains(&b) && b != n {
                box_hi[vars.joint(k, Joint::OffSwitch, b)] = 0.0;
            }
            if !grid.free_on_bins().contains(&b) && b != 1 {
                box_hi[vars.joint(k, Joint::OnSwitch, b)] = 0.0;
            }
        }
    }
    let mut n_locked = 0;
    if problem.forbid_early_forced_switch {
        for k in 1..t_plan {
            for l in 1..tau {
                for (mode, b) in [(Mode::Off, n), (Mode::On, 1)] {
                    let v = vars.nu(k, chain.index(mode, b, l));
                    box_hi[v] = ts_marg[k].values[chain.index(mode, b, l)];
                    n_locked += 1;
                }
            }
        }
    }
    for v in 0..nv {
        add_row(&[(v, 1.0)], box_lo[v], box_hi[v], &mut a_t);
    }

    for k in 0..t_plan {
        // Row mass: counter-0 marginal splits into stay and switch.
        for b in 1..=n {
            add_row(
                &[
                    (vars.nu(k, chain.index(Mode::Off, b, 0)), 1.0),
                    (vars.joint(k, Joint::OffStay, b), -1.0),
                    (vars.joint(k, Joint::OffSwitch, b), -1.0),
                ],
                0.0,
                0.0,
                &mut a_t,
            );
            add_row(
                &[
                    (vars.nu(k, chain.index(Mode::On, b, 0)), 1.0),
                    (vars.joint(k, Joint::OnStay, b), -1.0),
                    (vars.joint(k, Joint::OnSwitch, b), -1.0),
                ],
                0.0,
                0.0,
                &mut a_t,
            );
        }
        // Forced switches at the boundary bins.
        add_row(
            &[(vars.joint(k, Joint::OffSwitch, n), 1.0), (vars.nu(k, chain.index(Mode::Off, n, 0)), -1.0)],
            0.0,
            0.0,
            &mut a_t,
        );
        add_row(
            &[(vars.joint(k, Joint::OnSwitch, 1), 1.0), (vars.nu(k, chain.index(Mode::On, 1, 0)), -1.0)],
            0.0,
            0.0,
            &mut a_t,
        );
    }

    // Dynamics: ν_{k+1} = (joint masses at k) · G^E_k.
    let mut n_dyn = 0;
    for k in 0..t_plan.saturating_sub(1) {
        let g = &models[k].g_e;
        let mut rows: Vec<Vec<(usize, f64)>> = (0..chain.len()).map(|t| vec![(vars.nu(k + 1, t), 1.0)]).collect();
        for r in 0..h {
            let (_, b, l) = chain.state(r);
            let off_state = vars.nu(k, r);
            let on_state = vars.nu(k, h + r);
            // (joint column of G^E, source variable, coefficient)
            let sources: [(usize, usize, f64); 4] = if l == 0 {
                [
                    (OFF_OFF * h + r, vars.joint(k, Joint::OffStay, b), 1.0),
                    (OFF_ON * h + r, vars.joint(k, Joint::OffSwitch, b), 1.0),
                    (ON_OFF * h + r, vars.joint(k, Joint::OnSwitch, b), 1.0),
                    (ON_ON * h + r, vars.joint(k, Joint::OnStay, b), 1.0),
                ]
            } else {
                [
                    (OFF_OFF * h + r, off_state, 1.0 - ts_on[b - 1]),
                    (OFF_ON * h + r, off_state, ts_on[b - 1]),
                    (ON_OFF * h + r, on_state, ts_off[b - 1]),
                    (ON_ON * h + r, on_state, 1.0 - ts_off[b - 1]),
                ]
            };
            for (jc, var, coef) in sources {
                if coef == 0.0 {
                    continue;
                }
                for (t, gv) in g.row(jc) {
                    rows[t].push((var, -coef * gv));
                }
            }
        }
        for entries in rows {
            add_row(&entries, 0.0, 0.0, &mut a_t);
            n_dyn += 1;
        }
    }

    // Monotone switching mass across the free bins.
    let mut n_mono = 0;
    if problem.monotonicity {
        for k in 0..t_plan {
            let free: Vec<usize> = grid.free_off_bins().collect();
            for w in free.windows(2) {
                add_row(
                    &[(vars.joint(k, Joint::OffSwitch, w[0]), 1.0), (vars.joint(k, Joint::OffSwitch, w[1]), -1.0)],
                    f64::NEG_INFINITY,
                    0.0,
                    &mut a_t,
                );
                n_mono += 1;
            }
            let free: Vec<usize> = grid.free_on_bins().collect();
            for w in free.windows(2) {
                add_row(
                    &[(vars.joint(k, Joint::OnSwitch, w[1]), 1.0), (vars.joint(k, Joint::OnSwitch, w[0]), -1.0)],
                    f64::NEG_INFINITY,
                    0.0,
                    &mut a_t,
                );
                n_mono += 1;
            }
        }
    }

    // Objective Σ_k (ρ_k − on-mass_k)², up to the constant Σ ρ_k².
    let mut p_t = Vec::new();
    let mut q = vec![0.0; nv];
    for k in 0..t_plan {
        let on_cols: Vec<usize> = (h..chain.len()).map(|s| column[vars.nu(k, s)]).collect();
        for (i, &a) in on_cols.iter().enumerate() {
            q[a] = -2.0 * target[k];
            for &b in &on_cols[i..] {
                p_t.push((a.min(b), a.max(b), 2.0));
            }
        }
    }

    let m = lo.len();
    let qp = QpProblem {
        p: CscMatrix::from_triplets(nv, nv, &p_t),
        q,
        a: CscMatrix::from_triplets(m, nv, &a_t),
        l: lo,
        u: hi,
    };
    Ok(AssembledQp {
        qp,
        vars,
        column,
        target,
        models,
        witness,
        n_dynamics_rows: n_dyn,
        n_monotonicity_rows: n_mono,
        n_locked_forced_bounds: n_locked,
    })
}

/// QP point (in column order) of marginals driven by `policies`; the last
/// step, which has no successor, is split with the thermostat.
fn pack(vars: &VarLayout, column: &[usize], marg: &[ExpandedMarginal], policies: &[PolicyPair], grid: &GridSpec) -> Vec<f64> {
    let n = grid.n;
    let chain = vars.chain;
    let ts = PolicyPair::thermostat(grid);
    let mut x = vec![0.0; vars.len()];
    for (k, nu) in marg.iter().enumerate() {
        let pol = policies.get(k).unwrap_or(&ts);
        for s in 0..chain.len() {
            x[column[vars.nu(k, s)]] = nu.values[s];
        }
        for b in 1..=n {
            let off = nu.get(Mode::Off, b, 0);
            let on = nu.get(Mode::On, b, 0);
            x[column[vars.joint(k, Joint::OffSwitch, b)]] = pol.switch_on[b - 1] * off;
            x[column[vars.joint(k, Joint::OffStay, b)]] = (1.0 - pol.switch_on[b - 1]) * off;
            x[column[vars.joint(k, Joint::OnSwitch, b)]] = pol.switch_off[b - 1] * on;
            x[column[vars.joint(k, Joint::OnStay, b)]] = (1.0 - pol.switch_off[b - 1]) * on;
        }
    }
    x
}

impl AssembledQp {
    /// QP point of the chain rolled out from `nu_hat` under `policies`.
    pub fn point_from_policies(&self, problem: &PlanProblem, policies: &[PolicyPair]) -> Result<Vec<f64>> {
        let marg = rollout(&problem.nu_hat, &problem.grid, &self.models, policies)?;
        Ok(pack(&self.vars, &self.column, &marg, policies, &problem.grid))
    }

    /// Per-row violations, largest first, as (row, amount).
    pub fn violations(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let ax = self.qp.a.mul(x);
        let mut v: Vec<(usize, f64)> = ax
            .iter()
            .zip(self.qp.l.iter().zip(&self.qp.u))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .enumerate()
            .filter(|(_, a)| *a > 0.0)
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        v
    }

    pub fn n_vars(&self) -> usize {
        self.qp.n()
    }

    /// Largest bound violation of a point (in QP column order).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let ax = self.qp.a.mul(x);
        ax.iter()
            .zip(self.qp.l.iter().zip(&self.qp.u))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }

    fn logical(&self, x: &[f64]) -> Vec<f64> {
        self.column.iter().map(|&c| x[c]).collect()
    }

    /// Normalized cost `Σ (ρ_k − on-mass_k)²` of a point.
    pub fn cost(&self, x: &[f64]) -> f64 {
        let xl = self.logical(x);
        let chain = self.vars.chain;
        (0..self.vars.horizon)
            .map(|k| {
                let on: f64 = (chain.half()..chain.len()).map(|s| xl[self.vars.nu(k, s)]).sum();
                (self.target[k] - on).powi(2)
            })
            .sum()
    }

    /// Splits a solution into per-step marginals and counter-0 joints.
    pub fn unpack(&self, x: &[f64]) -> (Vec<ExpandedMarginal>, Vec<StepJoint>) {
        let xl = self.logical(x);
        let chain = self.vars.chain;
        let n = chain.n_bins;
        let mut marg = Vec::with_capacity(self.vars.horizon);
        let mut joints = Vec::with_capacity(self.vars.horizon);
        for k in 0..self.vars.horizon {
            marg.push(ExpandedMarginal {
                layout: chain,
                values: (0..chain.len()).map(|s| xl[self.vars.nu(k, s)]).collect(),
            });
            let pick = |w: Joint| (1..=n).map(|b| xl[self.vars.joint(k, w, b)]).collect::<Vec<f64>>();
            joints.push(StepJoint {
                off_stay: pick(Joint::OffStay),
                off_switch: pick(Joint::OffSwitch),
                on_switch: pick(Joint::OnSwitch),
                on_stay: pick(Joint::OnStay),
            });
        }
        (marg, joints)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub n_vars: usize,
    pub n_constraints: usize,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho_updates: usize,
    pub polished: bool,
    pub factor_nnz: usize,
    pub seconds: f64,
    /// Largest constraint violation of the returned point.
    pub max_violation: f64,
}

#[derive(Debug, Clone)]
pub struct PlanSolution {
    /// Planned aggregate power per step, kW.
    pub reference: Vec<f64>,
    pub marginals: Vec<ExpandedMarginal>,
    pub joints: Vec<StepJoint>,
    pub schedule: Vec<PolicyPair>,
    /// Optimal cost, kW².
    pub cost: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Solves an assembled program; the schedule is extracted from the optimum.
pub fn solve(asm: &AssembledQp, problem: &PlanProblem, settings: &Settings) -> Result<PlanSolution> {
    let sol = solver::solve(&asm.qp, settings, Some((&asm.witness, &vec![0.0; asm.qp.m()])))?;
    let max_violation = asm.max_violation(&sol.x);
    let (marginals, joints) = asm.unpack(&sol.x);
    let p_agg = problem.p_agg();
    let reference = marginals.iter().map(|nu| p_agg * nu.on_mass().clamp(0.0, 1.0)).collect();
    let tol = if sol.polished { EXTRACT_TOL } else { EXTRACT_TOL.max(10.0 * max_violation) };
    let schedule = joints
        .iter()
        .zip(&marginals)
        .map(|(j, nu)| extract_policies_with_tol(j, nu, &problem.grid, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanSolution {
        reference,
        marginals,
        joints,
        schedule,
        cost: p_agg * p_agg * asm.cost(&sol.x),
        diagnostics: SolveDiagnostics {
            n_vars: asm.qp.n(),
            n_constraints: asm.qp.m(),
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            rho_updates: sol.rho_updates,
            polished: sol.polished,
            factor_nnz: sol.factor_nnz,
            seconds: sol.seconds,
            max_violation,
        },
    })
}

/// Assemble, solve and extract in one call.
pub fn plan(problem: &PlanProblem, settings: &Settings) -> Result<PlanSolution> {
    let asm = assemble(problem)?;
    solve(&asm, problem, settings)
}

/// Recovers the broadcast policy of one step from its joints:
/// `κ = J/ν` where the marginal carries mass, the fixed structural value
/// for non-switching and boundary bins, and 1/2 for massless free bins.
pub fn extract_policies(joint: &StepJoint, nu: &ExpandedMarginal, grid: &GridSpec) -> Result<PolicyPair> {
    extract_policies_with_tol(joint, nu, grid, EXTRACT_TOL)
}

pub fn extract_policies_with_tol(joint: &StepJoint, nu: &ExpandedMarginal, grid: &GridSpec, tol: f64) -> Result<PolicyPair> {
    let n = grid.n;
    let (ts_on, ts_off) = thermostat_probs(grid);
    let residual = |what: &str, r: f64| -> Result<()> {
        if r.abs() > tol || !r.is_finite() {
            Err(Error::ConstraintResidual {
                what: what.to_string(),
                residual: r.abs(),
                tolerance: tol,
            })
        } else {
            Ok(())
        }
    };
    let mut switch_on = vec![0.0; n];
    let mut switch_off = vec![0.0; n];
    for b in 1..=n {
        let nu_off = nu.get(Mode::Off, b, 0);
        let nu_on = nu.get(Mode::On, b, 0);
        residual("off row mass", nu_off - joint.off_stay[b - 1] - joint.off_switch[b - 1])?;
        residual("on row mass", nu_on - joint.on_stay[b - 1] - joint.on_switch[b - 1])?;
        for v in [joint.off_stay[b - 1], joint.off_switch[b - 1], joint.on_stay[b - 1], joint.on_switch[b - 1]] {
            residual("joint below 0", v.min(0.0))?;
        }
        let free_off = grid.free_off_bins().contains(&b);
        let free_on = grid.free_on_bins().contains(&b);
        if !free_off {
            residual("fixed switch-on tie", joint.off_switch[b - 1] - ts_on[b - 1] * nu_off)?;
        }
        if !free_on {
            residual("fixed switch-off tie", joint.on_switch[b - 1] - ts_off[b - 1] * nu_on)?;
        }
        switch_on[b - 1] = if !free_off {
            ts_on[b - 1]
        } else if nu_off > MASS_EPS {
            (joint.off_switch[b - 1] / nu_off).clamp(0.0, 1.0)
        } else {
            0.5
        };
        switch_off[b - 1] = if !free_on {
            ts_off[b - 1]
        } else if nu_on > MASS_EPS {
            (joint.on_switch[b - 1] / nu_on).clamp(0.0, 1.0)
        } else {
            0.5
        };
    }
    let p = PolicyPair { switch_on, switch_off };
    p.validate(grid)?;
    Ok(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// Cost of the extracted policies propagated through the chain, kW².
    pub rollout_cost: f64,
    pub qp_cost: f64,
    pub relative_gap: f64,
    /// Largest |rollout − QP| marginal entry over all steps.
    pub max_marginal_deviation: f64,
}

pub fn verify_equivalence(solution: &PlanSolution, problem: &PlanProblem) -> Result<EquivalenceReport> {
    let models = problem.step_models()?;
    let t_plan = problem.horizon();
    let roll = rollout(&problem.nu_hat, &problem.grid, &models, &solution.schedule[..t_plan - 1])?;
    let p_agg = problem.p_agg();
    let rollout_cost: f64 = roll
        .iter()
        .zip(&problem.r_ba)
        .map(|(nu, r)| (r - p_agg * nu.on_mass()).powi(2))
        .sum();
    let max_marginal_deviation = roll
        .iter()
        .zip(&solution.marginals)
        .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    Ok(EquivalenceReport {
        rollout_cost,
        qp_cost: solution.cost,
        relative_gap: (rollout_cost - solution.cost).abs() / solution.cost.max(1.0),
        max_marginal_deviation,
    })
}
