//! Thermal model of a single load and the transition-rate matrix of the
//! finite-volume (upwind) discretization of the population density.
//!
//! State index convention for the 2N-dimensional chain: off bin `j` is row
//! `j - 1`, on bin `j` is row `N + j - 1`. Rates are per hour.

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::linalg::CsrMatrix;
use crate::{Error, Mode, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TclParams {
    /// Thermal resistance, °C/kW.
    pub r: f64,
    /// Thermal capacitance, kWh/°C.
    pub c: f64,
    /// Rated electrical power, kW.
    pub p0: f64,
    /// Coefficient of performance.
    pub eta: f64,
    /// Brownian variance, °C²/h.
    pub sigma2: f64,
    /// Thermostat setpoint, °C.
    pub lambda_set: f64,
}

impl TclParams {
    /// Nominal air-conditioner parameters of the reference scenario.
    pub fn reference() -> Self {
        Self {
            r: 2.0,
            c: 1.0,
            p0: 5.5,
            eta: 2.5,
            sigma2: 0.01,
            lambda_set: 21.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("R", self.r), ("C", self.c), ("P0", self.p0), ("eta", self.eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be nonnegative, got {}",
                self.sigma2
            )));
        }
        if !self.lambda_set.is_finite() {
            return Err(Error::InvalidParameter("lambda_set must be finite".into()));
        }
        Ok(())
    }
}

/// Temperature drift `dθ/dt` in °C/h.
pub fn drift(theta: f64, mode: Mode, theta_a: f64, p: &TclParams) -> f64 {
    -(theta - theta_a) / (p.r * p.c) - mode.indicator() * p.eta * p.p0 / p.c
}

/// Power (kW) that holds one load at its setpoint.
pub fn baseline_power(theta_a: f64, p: &TclParams) -> f64 {
    (theta_a - p.lambda_set) / (p.eta * p.r)
}

pub fn fleet_baseline(n_tcl: usize, theta_a: f64, p: &TclParams) -> f64 {
    n_tcl as f64 * baseline_power(theta_a, p)
}

/// Power drawn when every load is on.
pub fn aggregate_capacity(n_tcl: usize, p: &TclParams) -> f64 {
    n_tcl as f64 * p.p0
}

/// Largest |drift| over the deadband for either mode, °C/h.
pub fn max_deadband_drift(grid: &GridSpec, theta_a: f64, p: &TclParams) -> f64 {
    [grid.lambda_min, grid.lambda_max]
        .iter()
        .flat_map(|&t| [drift(t, Mode::On, theta_a, p), drift(t, Mode::Off, theta_a, p)])
        .map(f64::abs)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    pub n_bins: usize,
    pub matrix: CsrMatrix,
    /// Diffusion rate `σ²/Δλ²`, 1/h.
    pub diffusion: f64,
    pub gamma: f64,
    /// Boundary discharge rate `γ + D`, 1/h.
    pub alpha: f64,
}

impl RateMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn dim(&self) -> usize {
        2 * self.n_bins
    }

    /// Row index of a (mode, 1-based bin) state.
    pub fn index(&self, mode: Mode, bin: usize) -> usize {
        state_index(self.n_bins, mode, bin)
    }
}

pub(crate) fn state_index(n: usize, mode: Mode, bin: usize) -> usize {
    debug_assert!((1..=n).contains(&bin));
    match mode {
        Mode::Off => bin - 1,
        Mode::On => n + bin - 1,
    }
}

/// Checks that the off drift is nonnegative and the on drift nonpositive at
/// every cell edge of the respective axis.
pub fn check_drift_signs(grid: &GridSpec, p: &TclParams, theta_a: f64) -> Result<()> {
    for e in grid.edges(Mode::Off) {
        let f = drift(e, Mode::Off, theta_a, p);
        if f < 0.0 {
            return Err(Error::AssumptionViolation(format!(
                "off drift {f} °C/h < 0 at {e} °C with ambient {theta_a} °C"
            )));
        }
    }
    for e in grid.edges(Mode::On) {
        let f = drift(e, Mode::On, theta_a, p);
        if f > 0.0 {
            return Err(Error::AssumptionViolation(format!(
                "on drift {f} °C/h > 0 at {e} °C with ambient {theta_a} °C"
            )));
        }
    }
    Ok(())
}

/// `σ²/Δλ²`.
pub fn diffusion_rate(grid: &GridSpec, p: &TclParams) -> f64 {
    p.sigma2 / (grid.delta_lambda * grid.delta_lambda)
}

/// `γ = 1/Δt − D`, after checking `Δt < Δλ²/σ²` so that `γ > 0`.
pub fn gamma_for_step(grid: &GridSpec, p: &TclParams, dt_minutes: f64) -> Result<f64> {
    let dt = dt_minutes / 60.0;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt_minutes} min")));
    }
    let d = diffusion_rate(grid, p);
    if d > 0.0 && dt >= 1.0 / d {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} h must be below delta_lambda^2/sigma2 = {} h",
            1.0 / d
        )));
    }
    Ok(1.0 / dt - d)
}

pub fn build_rate_matrix(grid: &GridSpec, p: &TclParams, theta_a: f64, gamma: f64) -> Result<RateMatrix> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let d = diffusion_rate(grid, p);
    assemble(grid, p, theta_a, gamma, gamma + d)
}

/// Rate matrix for time step `dt_minutes` with `α = 1/Δt` exactly.
pub fn build_rate_matrix_for_step(grid: &GridSpec, p: &TclParams, theta_a: f64, dt_minutes: f64) -> Result<RateMatrix> {
    let gamma = gamma_for_step(grid, p, dt_minutes)?;
    assemble(grid, p, theta_a, gamma, 60.0 / dt_minutes)
}

fn assemble(grid: &GridSpec, p: &TclParams, theta_a: f64, gamma: f64, alpha: f64) -> Result<RateMatrix> {
    p.validate()?;
    if !theta_a.is_finite() {
        return Err(Error::InvalidParameter(format!("ambient temperature {theta_a}")));
    }
    check_drift_signs(grid, p, theta_a)?;
    let n = grid.n;
    let dl = grid.delta_lambda;
    let d = diffusion_rate(grid, p);
    let half = d / 2.0;

    // Upwind advective rates at the face between bins i and i+1 (i = 1..N-1).
    let face = |mode: Mode, i: usize| grid.bin_edges(mode, i).1;
    let up_off: Vec<f64> = (1..n).map(|i| drift(face(Mode::Off, i), Mode::Off, theta_a, p) / dl).collect();
    let down_on: Vec<f64> = (1..n).map(|i| -drift(face(Mode::On, i), Mode::On, theta_a, p) / dl).collect();

    let off = |b: usize| state_index(n, Mode::Off, b);
    let on = |b: usize| state_index(n, Mode::On, b);
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(6 * n);
    let mut push_row = |row: usize, outflows: &[(usize, f64)]| {
        let mut total = 0.0;
        for &(col, rate) in outflows {
            if rate != 0.0 {
                t.push((row, col, rate));
                total += rate;
            }
        }
        t.push((row, row, -total));
    };

    for i in 1..=n {
        if i == n {
            // Forced switch on: everything leaves for on bin q; no back-flow to N-1.
            push_row(off(n), &[(on(grid.q), alpha)]);
            continue;
        }
        let mut out = vec![(off(i + 1), half + up_off[i - 1])];
        if i > 1 {
            out.push((off(i - 1), half));
        }
        push_row(off(i), &out);
    }
    for i in 1..=n {
        if i == 1 {
            push_row(on(1), &[(off(grid.m), alpha)]);
            continue;
        }
        let mut out = vec![(on(i - 1), half + down_on[i - 2])];
        if i < n {
            out.push((on(i + 1), half));
        }
        push_row(on(i), &out);
    }
    let matrix = CsrMatrix::from_triplets(2 * n, 2 * n, &t);
    Ok(RateMatrix {
        n_bins: n,
        matrix,
        diffusion: d,
        gamma,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use approx::assert_abs_diff_eq;

    #[test]
    fn drift_examples() {
        let p = TclParams::reference();
        assert_abs_diff_eq!(drift(21.0, Mode::On, 32.0, &p), -8.25, epsilon = 1e-12);
        assert_abs_diff_eq!(drift(21.0, Mode::Off, 32.0, &p), 5.5, epsilon = 1e-12);
        assert_eq!(drift(30.0, Mode::Off, 30.0, &p), 0.0);
    }

    #[test]
    fn baseline_examples() {
        let p = TclParams::reference();
        assert_abs_diff_eq!(baseline_power(32.0, &p), 2.2, epsilon = 1e-12);
        assert_eq!(baseline_power(p.lambda_set, &p), 0.0);
        assert_abs_diff_eq!(fleet_baseline(20_000, 32.0, &p), 44_000.0, epsilon = 1e-8);
        assert_eq!(aggregate_capacity(20_000, &p), 110_000.0);
    }

    #[test]
    fn boundary_sink_is_one_over_dt() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let a = build_rate_matrix_for_step(&g, &TclParams::reference(), 32.0, 1.0).unwrap();
        let offn = a.index(Mode::Off, 12);
        assert_eq!(a.get(offn, offn), -60.0);
        assert_eq!(a.get(offn, a.index(Mode::On, 10)), 60.0);
        assert_eq!(a.get(offn, a.index(Mode::Off, 11)), 0.0);
        let on1 = a.index(Mode::On, 1);
        assert_eq!(a.get(on1, a.index(Mode::Off, 2)), 60.0);
        assert_eq!(a.get(on1, a.index(Mode::On, 2)), 0.0);
    }

    #[test]
    fn pure_advection_rows() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        // Very large R makes the off drift almost exactly constant.
        let p = TclParams {
            r: 1e12,
            c: 1.0,
            sigma2: 0.0,
            ..TclParams::reference()
        };
        let theta_a = 1e12 + 21.0;
        let v = drift(21.0, Mode::Off, theta_a, &p);
        let a = build_rate_matrix(&g, &p, theta_a, 60.0).unwrap();
        for i in 2..g.n {
            let r = a.index(Mode::Off, i);
            assert_abs_diff_eq!(a.get(r, r), -v / g.delta_lambda, epsilon = 1e-9);
            assert_abs_diff_eq!(a.get(a.index(Mode::Off, i - 1), r), v / g.delta_lambda, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_wrong_drift_sign_and_bad_gamma() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let p = TclParams::reference();
        // Ambient below the grid: the off drift turns negative.
        assert!(matches!(build_rate_matrix(&g, &p, 21.0, 60.0), Err(Error::AssumptionViolation(_))));
        assert!(matches!(build_rate_matrix(&g, &p, 32.0, 0.0), Err(Error::InvalidParameter(_))));
        assert!(gamma_for_step(&g, &TclParams { sigma2: 10.0, ..p }, 60.0).is_err());
    }
}
