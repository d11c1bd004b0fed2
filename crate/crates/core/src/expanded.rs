//! Lockout-augmented chain over X = (mode, bin, counter).
//!
//! Marginal layout: the off block then the on block, each counter-major
//! (`l·N + j - 1` for bin `j`, counter `l`). Counter 0 means free to follow
//! the broadcast policy; counters `1..=τ` are locked and follow the thermostat.

use serde::{Deserialize, Serialize};

use crate::generator::{build_rate_matrix_for_step, TclParams};
use crate::grid::GridSpec;
use crate::linalg::{CsrMatrix, DenseMatrix};
use crate::markov::{factorize, transition_matrix, TransitionFactors, OFF_OFF, OFF_ON, ON_OFF, ON_ON};
use crate::{Error, Mode, Result};

/// Shape of the augmented state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_bins: usize,
    pub tau: usize,
}

impl Layout {
    pub fn new(n_bins: usize, tau: usize) -> Self {
        Self { n_bins, tau }
    }

    /// States per mode, `N(τ+1)`.
    pub fn half(&self) -> usize {
        self.n_bins * (self.tau + 1)
    }

    /// `|X| = 2N(τ+1)`.
    pub fn len(&self) -> usize {
        2 * self.half()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, mode: Mode, bin: usize, l: usize) -> usize {
        debug_assert!((1..=self.n_bins).contains(&bin) && l <= self.tau);
        let base = match mode {
            Mode::Off => 0,
            Mode::On => self.half(),
        };
        base + l * self.n_bins + bin - 1
    }

    /// Inverse of [`Layout::index`].
    pub fn state(&self, idx: usize) -> (Mode, usize, usize) {
        let (mode, r) = if idx < self.half() {
            (Mode::Off, idx)
        } else {
            (Mode::On, idx - self.half())
        };
        (mode, r % self.n_bins + 1, r / self.n_bins)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedMarginal {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl ExpandedMarginal {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    pub fn point_mass(layout: Layout, mode: Mode, bin: usize, l: usize) -> Self {
        let mut m = Self::zeros(layout);
        m.values[layout.index(mode, bin, l)] = 1.0;
        m
    }

    pub fn get(&self, mode: Mode, bin: usize, l: usize) -> f64 {
        self.values[self.layout.index(mode, bin, l)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Probability mass in on states.
    pub fn on_mass(&self) -> f64 {
        self.values[self.layout.half()..].iter().sum()
    }

    /// Checks entries in `[0, 1]` and total mass 1 within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.values.len() != self.layout.len() {
            return Err(Error::Dimension(format!(
                "marginal has {} entries, layout needs {}",
                self.values.len(),
                self.layout.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= -tol && **v <= 1.0 + tol)) {
            return Err(Error::InvalidParameter(format!("marginal entry {v} outside [0,1]")));
        }
        let s = self.total();
        if (s - 1.0).abs() > tol {
            return Err(Error::InvalidParameter(format!("marginal sums to {s}")));
        }
        Ok(())
    }

    pub fn tv_distance(&self, other: &ExpandedMarginal) -> f64 {
        0.5 * self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Grid-support switching probabilities per bin (index bin - 1), including
/// the entries the structure fixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPair {
    /// `φ_off(on | j)`: κ^on on off bins `m+1..N-1`, 1 at N, 0 elsewhere.
    pub switch_on: Vec<f64>,
    /// `φ_on(off | j)`: κ^off on on bins `2..q-1`, 1 at bin 1, 0 elsewhere.
    pub switch_off: Vec<f64>,
}

impl PolicyPair {
    /// The thermostat as a grid-support policy (all κ zero).
    pub fn thermostat(grid: &GridSpec) -> Self {
        Self::from_kappa(grid, &vec![0.0; grid.n - grid.m - 1], &vec![0.0; grid.q - 2])
            .expect("zero kappa is always valid")
    }

    /// From the free entries only: `kappa_on` for off bins `m+1..N-1`,
    /// `kappa_off` for on bins `2..q-1`.
    pub fn from_kappa(grid: &GridSpec, kappa_on: &[f64], kappa_off: &[f64]) -> Result<Self> {
        let free_on = grid.free_off_bins();
        let free_off = grid.free_on_bins();
        if kappa_on.len() != free_on.clone().count() || kappa_off.len() != free_off.clone().count() {
            return Err(Error::Dimension(format!(
                "expected {} switch-on and {} switch-off probabilities, got {} and {}",
                free_on.count(),
                free_off.count(),
                kappa_on.len(),
                kappa_off.len()
            )));
        }
        let mut switch_on = vec![0.0; grid.n];
        let mut switch_off = vec![0.0; grid.n];
        switch_on[grid.n - 1] = 1.0;
        switch_off[0] = 1.0;
        for (b, &k) in free_on.zip(kappa_on) {
            switch_on[b - 1] = k;
        }
        for (b, &k) in free_off.zip(kappa_off) {
            switch_off[b - 1] = k;
        }
        let p = Self { switch_on, switch_off };
        p.validate(grid)?;
        Ok(p)
    }

    pub fn kappa_on(&self, grid: &GridSpec) -> Vec<f64> {
        grid.free_off_bins().map(|b| self.switch_on[b - 1]).collect()
    }

    pub fn kappa_off(&self, grid: &GridSpec) -> Vec<f64> {
        grid.free_on_bins().map(|b| self.switch_off[b - 1]).collect()
    }

    /// Checks probabilities and the fixed entries of the switching support.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let n = grid.n;
        if self.switch_on.len() != n || self.switch_off.len() != n {
            return Err(Error::Dimension(format!("policy vectors must have {n} entries")));
        }
        for (name, v, free) in [
            ("switch-on", &self.switch_on, grid.free_off_bins()),
            ("switch-off", &self.switch_off, grid.free_on_bins()),
        ] {
            for b in 1..=n {
                let x = v[b - 1];
                let fixed = if name == "switch-on" { (b == n) as u8 as f64 } else { (b == 1) as u8 as f64 };
                if free.contains(&b) {
                    if !(0.0..=1.0).contains(&x) {
                        return Err(Error::InvalidParameter(format!("{name} probability {x} at bin {b}")));
                    }
                } else if x != fixed {
                    return Err(Error::StructureViolation(format!(
                        "{name} probability at bin {b} must be {fixed}, got {x}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Counter dynamics while staying in a mode (`C_τ`) and the displayed
/// switch matrix `D_τ = 1ᵀ ⊗ e_2` (column convention).
#[derive(Debug, Clone, PartialEq)]
pub struct LockoutMatrices {
    pub c: DenseMatrix,
    pub d: DenseMatrix,
}

impl LockoutMatrices {
    /// Row-convention counter transition on a switch: every l goes to 1.
    pub fn switch_transition(&self) -> DenseMatrix {
        self.d.transpose()
    }
}

pub fn lockout_matrices(tau: usize) -> Result<LockoutMatrices> {
    if tau < 1 {
        return Err(Error::InvalidParameter("lockout tau must be at least 1".into()));
    }
    let k = tau + 1;
    let mut c = DenseMatrix::zeros(k, k);
    let mut d = DenseMatrix::zeros(k, k);
    c[(0, 0)] = 1.0;
    for l in 1..tau {
        c[(l, l + 1)] = 1.0;
    }
    c[(tau, 0)] = 1.0;
    for l in 0..k {
        d[(1, l)] = 1.0;
    }
    Ok(LockoutMatrices { c, d })
}

/// Counter after a step without a switch.
pub fn advance_counter(l: usize, tau: usize) -> usize {
    match l {
        0 => 0,
        l if l >= tau => 0,
        l => l + 1,
    }
}

/// Switching probability of every augmented state: the broadcast policy at
/// counter 0, the thermostat otherwise. Indexed like the marginal.
pub fn switch_probabilities(gs: &PolicyPair, grid: &GridSpec, tau: usize) -> Vec<f64> {
    let layout = Layout::new(grid.n, tau);
    let mut p = vec![0.0; layout.len()];
    for l in 0..=tau {
        for b in 1..=grid.n {
            let (on, off) = if l == 0 {
                (gs.switch_on[b - 1], gs.switch_off[b - 1])
            } else {
                ((b == grid.n) as u8 as f64, (b == 1) as u8 as f64)
            };
            p[layout.index(Mode::Off, b, l)] = on;
            p[layout.index(Mode::On, b, l)] = off;
        }
    }
    p
}

/// `|X| × 2|X|` policy matrix with column blocks off→off, off→on, on→off, on→on.
pub fn policy_matrix_from_probs(layout: Layout, switch: &[f64]) -> CsrMatrix {
    let h = layout.half();
    let mut t = Vec::with_capacity(2 * layout.len());
    for r in 0..h {
        t.push((r, OFF_OFF * h + r, 1.0 - switch[r]));
        t.push((r, OFF_ON * h + r, switch[r]));
        t.push((h + r, ON_OFF * h + r, switch[h + r]));
        t.push((h + r, ON_ON * h + r, 1.0 - switch[h + r]));
    }
    CsrMatrix::from_triplets(layout.len(), 2 * layout.len(), &t)
}

pub fn expand_policy(gs: &PolicyPair, grid: &GridSpec, tau: usize) -> Result<CsrMatrix> {
    gs.validate(grid)?;
    let layout = Layout::new(grid.n, tau);
    Ok(policy_matrix_from_probs(layout, &switch_probabilities(gs, grid, tau)))
}

/// `2|X| × |X|` dynamics factor: `C⊗P_off`, `D'⊗S_off`, `D'⊗S_on`, `C⊗P_on`.
pub fn build_g_e(f: &TransitionFactors, tau: usize) -> Result<CsrMatrix> {
    let lm = lockout_matrices(tau)?;
    let n = f.p_off.rows();
    let layout = Layout::new(n, tau);
    let h = layout.half();
    let sw = lm.switch_transition();
    let blocks = [
        (OFF_OFF, lm.c.kron(&f.p_off), 0),
        (OFF_ON, sw.kron(&f.s_off), h),
        (ON_OFF, sw.kron(&f.s_on), 0),
        (ON_ON, lm.c.kron(&f.p_on), h),
    ];
    let mut t = Vec::new();
    for (b, m, col0) in &blocks {
        for i in 0..h {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    t.push((b * h + i, col0 + j, v));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(2 * layout.len(), layout.len(), &t))
}

/// Output weights: 0 on off states, `P_agg` on on states.
pub fn output_vector(layout: Layout, p_agg: f64) -> Vec<f64> {
    let mut c = vec![0.0; layout.len()];
    c[layout.half()..].iter_mut().for_each(|v| *v = p_agg);
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedFactors {
    pub phi_e: CsrMatrix,
    pub g_e: CsrMatrix,
    pub c_e: Vec<f64>,
}

pub fn step(nu: &ExpandedMarginal, phi_e: &CsrMatrix, g_e: &CsrMatrix) -> Result<ExpandedMarginal> {
    let len = nu.layout.len();
    if phi_e.rows() != len || phi_e.cols() != 2 * len || g_e.rows() != 2 * len || g_e.cols() != len {
        return Err(Error::Dimension(format!(
            "step needs {len}x{} and {}x{len} factors",
            2 * len,
            2 * len
        )));
    }
    Ok(ExpandedMarginal {
        layout: nu.layout,
        values: g_e.vec_mul(&phi_e.vec_mul(&nu.values)),
    })
}

/// Aggregate power `ν·C_E`, kW.
pub fn output(nu: &ExpandedMarginal, p_agg: f64) -> f64 {
    p_agg * nu.on_mass()
}

/// Everything the chain needs for one time step at a given ambient temperature.
#[derive(Debug, Clone)]
pub struct StepModel {
    pub theta_a: f64,
    pub factors: TransitionFactors,
    pub g_e: CsrMatrix,
}

impl StepModel {
    pub fn new(grid: &GridSpec, params: &TclParams, tau: usize, dt_minutes: f64, theta_a: f64) -> Result<Self> {
        let a = build_rate_matrix_for_step(grid, params, theta_a, dt_minutes)?;
        let p = transition_matrix(&a, dt_minutes)?;
        let factors = factorize(&p, grid)?;
        let g_e = build_g_e(&factors, tau)?;
        Ok(Self { theta_a, factors, g_e })
    }

    /// One step under a (validated) grid-support policy.
    pub fn advance(&self, nu: &ExpandedMarginal, grid: &GridSpec, gs: &PolicyPair) -> Result<ExpandedMarginal> {
        let phi = expand_policy(gs, grid, nu.layout.tau)?;
        step(nu, &phi, &self.g_e)
    }
}

/// Propagates `nu0` through `policies[k]` with `models[k]`; returns all
/// `policies.len() + 1` marginals.
pub fn rollout(nu0: &ExpandedMarginal, grid: &GridSpec, models: &[StepModel], policies: &[PolicyPair]) -> Result<Vec<ExpandedMarginal>> {
    if models.len() < policies.len() {
        return Err(Error::Dimension(format!(
            "{} step models for {} policies",
            models.len(),
            policies.len()
        )));
    }
    let mut out = Vec::with_capacity(policies.len() + 1);
    out.push(nu0.clone());
    for (m, gs) in models.iter().zip(policies) {
        let next = m.advance(out.last().unwrap(), grid, gs)?;
        out.push(next);
    }
    Ok(out)
}

/// Stationary marginal of a time-invariant step under a fixed policy, by
/// power iteration from `start` until the L1 change drops below `tol`.
pub fn stationary(start: &ExpandedMarginal, grid: &GridSpec, model: &StepModel, gs: &PolicyPair, tol: f64, max_iter: usize) -> Result<ExpandedMarginal> {
    let phi = expand_policy(gs, grid, start.layout.tau)?;
    let kernel = phi.matmul(&model.g_e);
    let mut nu = start.values.clone();
    for _ in 0..max_iter {
        let next = kernel.vec_mul(&nu);
        let change: f64 = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
        nu = next;
        if change < tol {
            break;
        }
    }
    Ok(ExpandedMarginal {
        layout: start.layout,
        values: nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn setup(tau: usize) -> (GridSpec, StepModel) {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let m = StepModel::new(&g, &TclParams::reference(), tau, 1.0, 32.0).unwrap();
        (g, m)
    }

    #[test]
    fn lockout_matrices_tau2() {
        let lm = lockout_matrices(2).unwrap();
        let c = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        let d = DenseMatrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]]);
        assert_eq!(lm.c, c);
        assert_eq!(lm.d, d);
        assert!(lm.c.row_sums().iter().all(|&s| s == 1.0));
        assert!(lockout_matrices(0).is_err());
    }

    #[test]
    fn layout_round_trip() {
        let l = Layout::new(12, 5);
        assert_eq!(l.len(), 144);
        for i in 0..l.len() {
            let (m, b, c) = l.state(i);
            assert_eq!(l.index(m, b, c), i);
        }
        assert_eq!(l.index(Mode::Off, 1, 1), 12);
        assert_eq!(l.index(Mode::On, 1, 0), 72);
    }

    #[test]
    fn zero_kappa_is_thermostat() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let p = expand_policy(&PolicyPair::thermostat(&g), &g, 3).unwrap();
        let layout = Layout::new(g.n, 3);
        let h = layout.half();
        for r in 0..layout.len() {
            let (mode, b, _) = layout.state(r);
            let sw = match mode {
                Mode::Off => p.get(r, OFF_ON * h + r),
                Mode::On => p.get(r, ON_OFF * h + r - h),
            };
            let expect = match mode {
                Mode::Off => (b == g.n) as u8 as f64,
                Mode::On => (b == 1) as u8 as f64,
            };
            assert_eq!(sw, expect);
        }
        assert!(p.row_sums().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn locked_rows_ignore_kappa() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let gs = PolicyPair::from_kappa(&g, &[0.7; 9], &[0.3; 8]).unwrap();
        let probs = switch_probabilities(&gs, &g, 5);
        let layout = Layout::new(g.n, 5);
        for b in 1..=g.n {
            assert_eq!(probs[layout.index(Mode::Off, b, 3)], (b == g.n) as u8 as f64);
            assert_eq!(probs[layout.index(Mode::On, b, 3)], (b == 1) as u8 as f64);
        }
        assert_eq!(probs[layout.index(Mode::Off, 5, 0)], 0.7);
    }

    #[test]
    fn structure_violations_are_rejected() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let mut gs = PolicyPair::thermostat(&g);
        gs.switch_on[1] = 0.2;
        assert!(matches!(expand_policy(&gs, &g, 2), Err(Error::StructureViolation(_))));
        let mut gs = PolicyPair::thermostat(&g);
        gs.switch_off[g.q - 1] = 0.1;
        assert!(matches!(gs.validate(&g), Err(Error::StructureViolation(_))));
        assert!(PolicyPair::from_kappa(&g, &[1.5; 9], &[0.0; 8]).is_err());
    }

    #[test]
    fn output_map() {
        let layout = Layout::new(12, 5);
        assert_eq!(output(&ExpandedMarginal::point_mass(layout, Mode::On, 4, 2), 110.0), 110.0);
        assert_eq!(output(&ExpandedMarginal::point_mass(layout, Mode::Off, 4, 0), 110.0), 0.0);
        let c = output_vector(layout, 110.0);
        assert_eq!(c.iter().sum::<f64>(), 110.0 * 72.0);
    }

    #[test]
    fn lockout_cycle_at_measure_level() {
        let tau = 4;
        let (g, m) = setup(tau);
        // On bin 5 with a policy that always switches off where allowed.
        let gs = PolicyPair::from_kappa(&g, &[0.0; 9], &[1.0; 8]).unwrap();
        let layout = Layout::new(g.n, tau);
        let mut nu = ExpandedMarginal::point_mass(layout, Mode::On, 5, 0);
        nu = m.advance(&nu, &g, &gs).unwrap();
        let counter_mass = |nu: &ExpandedMarginal, mode: Mode, l: usize| -> f64 {
            (1..=g.n).map(|b| nu.get(mode, b, l)).sum()
        };
        assert!((counter_mass(&nu, Mode::Off, 1) - 1.0).abs() < 1e-14);
        for l in 2..=tau {
            nu = m.advance(&nu, &g, &gs).unwrap();
            assert!((counter_mass(&nu, Mode::Off, l) - 1.0).abs() < 1e-14, "l = {l}");
        }
        nu = m.advance(&nu, &g, &gs).unwrap();
        assert!((counter_mass(&nu, Mode::Off, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rows_are_stochastic() {
        let (g, m) = setup(5);
        let gs = PolicyPair::from_kappa(&g, &[0.2; 9], &[0.9; 8]).unwrap();
        let k = expand_policy(&gs, &g, 5).unwrap().matmul(&m.g_e);
        for s in k.row_sums() {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
