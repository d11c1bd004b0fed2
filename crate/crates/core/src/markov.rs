//! Euler time discretization `P = I + Δt·A` and its split into a thermostat
//! policy factor and a policy-free dynamics factor, `P = Φ_TS · G`.
//!
//! Joint-state columns of `Φ_TS` (and rows of `G`) come in four blocks of
//! length N: off→off, off→on, on→off, on→on.

use crate::generator::{state_index, RateMatrix};
use crate::grid::GridSpec;
use crate::linalg::{CsrMatrix, DenseMatrix};
use crate::{Error, Mode, Result};

/// Slack on the CFL product `Δt·|A_ii| ≤ 1`, for the `α = 1/Δt` rows.
const CFL_SLACK: f64 = 1e-12;
const FACTOR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub n_bins: usize,
    pub matrix: CsrMatrix,
    pub dt_minutes: f64,
}

impl TransitionMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }
}

/// Largest admissible step (hours) for `A`.
pub fn cfl_bound_hours(a: &RateMatrix) -> f64 {
    let worst = (0..a.dim()).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    if worst == 0.0 {
        f64::INFINITY
    } else {
        1.0 / worst
    }
}

pub fn transition_matrix(a: &RateMatrix, dt_minutes: f64) -> Result<TransitionMatrix> {
    let dt = dt_minutes / 60.0;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt_minutes} min")));
    }
    for i in 0..a.dim() {
        let diag = a.get(i, i).abs();
        if dt * diag > 1.0 + CFL_SLACK {
            return Err(Error::Cfl {
                row: i,
                dt_hours: dt,
                bound_hours: 1.0 / diag,
            });
        }
    }
    let mut t: Vec<(usize, usize, f64)> = a.matrix.triplets().into_iter().map(|(i, j, v)| (i, j, dt * v)).collect();
    t.extend((0..a.dim()).map(|i| (i, i, 1.0)));
    Ok(TransitionMatrix {
        n_bins: a.n_bins,
        matrix: CsrMatrix::from_triplets(a.dim(), a.dim(), &t),
        dt_minutes,
    })
}

/// Switching probabilities of the deterministic thermostat, indexed by bin - 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermostatPolicy {
    /// `φ_off(on | j)`: one only at off bin N.
    pub off_to_on: Vec<f64>,
    /// `φ_on(off | j)`: one only at on bin 1.
    pub on_to_off: Vec<f64>,
}

pub fn thermostat_policy(grid: &GridSpec) -> ThermostatPolicy {
    let mut off_to_on = vec![0.0; grid.n];
    let mut on_to_off = vec![0.0; grid.n];
    off_to_on[grid.n - 1] = 1.0;
    on_to_off[0] = 1.0;
    ThermostatPolicy { off_to_on, on_to_off }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionFactors {
    /// 2N × 4N.
    pub phi_ts: CsrMatrix,
    /// 4N × 2N.
    pub g: CsrMatrix,
    pub p_off: DenseMatrix,
    pub p_on: DenseMatrix,
    pub s_off: DenseMatrix,
    pub s_on: DenseMatrix,
}

/// Joint-block offsets in the 4N layout.
pub(crate) const OFF_OFF: usize = 0;
pub(crate) const OFF_ON: usize = 1;
pub(crate) const ON_OFF: usize = 2;
pub(crate) const ON_ON: usize = 3;

/// Policy-free blocks: `P_off` keeps row N fixed to `e_N`, `P_on` row 1 to `e_1`.
pub fn open_loop_blocks(p: &TransitionMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = p.n_bins;
    let mut p_off = DenseMatrix::zeros(n, n);
    let mut p_on = DenseMatrix::zeros(n, n);
    for i in 1..=n {
        for j in 1..=n {
            if i != n {
                p_off[(i - 1, j - 1)] = p.get(state_index(n, Mode::Off, i), state_index(n, Mode::Off, j));
            }
            if i != 1 {
                p_on[(i - 1, j - 1)] = p.get(state_index(n, Mode::On, i), state_index(n, Mode::On, j));
            }
        }
    }
    p_off[(n - 1, n - 1)] = 1.0;
    p_on[(0, 0)] = 1.0;
    (p_off, p_on)
}

/// Shifted blocks. Interior rows re-index `P_off` (`P_on`) by `m - 1` on
/// `{m..N}` (`{1..q}`); the forced-switch rows (off N, on 1) are read from the
/// cross quadrant of `P`, which is where the rate matrix sends switching mass.
pub fn shifted_blocks(p: &TransitionMatrix, grid: &GridSpec, p_off: &DenseMatrix, p_on: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = grid.n;
    let shift = grid.m - 1;
    let mut s_off = DenseMatrix::zeros(n, n);
    let mut s_on = DenseMatrix::zeros(n, n);
    for i in grid.m..n {
        for j in grid.m..=n {
            s_off[(i - 1, j - shift - 1)] = p_off[(i - 1, j - 1)];
        }
    }
    for j in 1..=n {
        s_off[(n - 1, j - 1)] = p.get(state_index(n, Mode::Off, n), state_index(n, Mode::On, j));
    }
    for i in 2..=grid.q {
        for j in 1..=grid.q {
            s_on[(i - 1, j + shift - 1)] = p_on[(i - 1, j - 1)];
        }
    }
    for j in 1..=n {
        s_on[(0, j - 1)] = p.get(state_index(n, Mode::On, 1), state_index(n, Mode::Off, j));
    }
    (s_off, s_on)
}

/// Stacks the four N×N blocks into the 4N × 2N dynamics factor.
pub(crate) fn stack_g(n: usize, p_off: &DenseMatrix, s_off: &DenseMatrix, s_on: &DenseMatrix, p_on: &DenseMatrix) -> CsrMatrix {
    let mut t = Vec::new();
    let blocks = [(OFF_OFF, p_off, 0), (OFF_ON, s_off, n), (ON_OFF, s_on, 0), (ON_ON, p_on, n)];
    for (b, m, col0) in blocks {
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != 0.0 {
                    t.push((b * n + i, col0 + j, v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(4 * n, 2 * n, &t)
}

/// 2N × 4N policy matrix from switching probabilities indexed by bin - 1.
pub(crate) fn policy_matrix(n: usize, off_to_on: &[f64], on_to_off: &[f64]) -> CsrMatrix {
    let mut t = Vec::with_capacity(4 * n);
    for j in 0..n {
        t.push((j, OFF_OFF * n + j, 1.0 - off_to_on[j]));
        t.push((j, OFF_ON * n + j, off_to_on[j]));
        t.push((n + j, ON_OFF * n + j, on_to_off[j]));
        t.push((n + j, ON_ON * n + j, 1.0 - on_to_off[j]));
    }
    CsrMatrix::from_triplets(2 * n, 4 * n, &t)
}

pub fn factorize(p: &TransitionMatrix, grid: &GridSpec) -> Result<TransitionFactors> {
    let n = grid.n;
    if p.n_bins != n {
        return Err(Error::Dimension(format!("P has {} bins, grid {}", p.n_bins, n)));
    }
    let (p_off, p_on) = open_loop_blocks(p);
    let (s_off, s_on) = shifted_blocks(p, grid, &p_off, &p_on);
    let ts = thermostat_policy(grid);
    let phi_ts = policy_matrix(n, &ts.off_to_on, &ts.on_to_off);
    let g = stack_g(n, &p_off, &s_off, &s_on, &p_on);
    let max_dev = phi_ts.matmul(&g).to_dense().max_abs_diff(&p.matrix.to_dense());
    if !(max_dev < FACTOR_TOL) {
        return Err(Error::FactorizationMismatch { max_dev });
    }
    Ok(TransitionFactors {
        phi_ts,
        g,
        p_off,
        p_on,
        s_off,
        s_on,
    })
}

impl TransitionFactors {
    /// Dense text dump of `P_off, P_on, S_off, S_on` for fixture comparison.
    pub fn debug_dump(&self) -> String {
        format!(
            "# P_off\n{}# P_on\n{}# S_off\n{}# S_on\n{}",
            self.p_off.to_text(),
            self.p_on.to_text(),
            self.s_off.to_text(),
            self.s_on.to_text()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{build_rate_matrix, build_rate_matrix_for_step, TclParams};
    use crate::grid::build_grid;

    fn reference() -> (GridSpec, TransitionMatrix) {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let a = build_rate_matrix_for_step(&g, &TclParams::reference(), 32.0, 1.0).unwrap();
        let p = transition_matrix(&a, 1.0).unwrap();
        (g, p)
    }

    #[test]
    fn zero_generator_gives_identity() {
        let a = RateMatrix {
            n_bins: 3,
            matrix: CsrMatrix::from_triplets(6, 6, &[]),
            diffusion: 0.0,
            gamma: 1.0,
            alpha: 1.0,
        };
        let p = transition_matrix(&a, 5.0).unwrap();
        assert_eq!(p.matrix.to_dense(), DenseMatrix::identity(6));
    }

    #[test]
    fn boundary_diagonal_vanishes() {
        let (_, p) = reference();
        assert!(p.get(11, 11).abs() < 1e-15);
        assert!(p.get(12, 12).abs() < 1e-15);
    }

    #[test]
    fn cfl_rejects_long_steps() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let a = build_rate_matrix(&g, &TclParams::reference(), 32.0, 10.0).unwrap();
        let bound_min = cfl_bound_hours(&a) * 60.0;
        assert!(transition_matrix(&a, bound_min).is_ok());
        match transition_matrix(&a, bound_min * 1.01) {
            Err(Error::Cfl { .. }) => {}
            other => panic!("expected CFL error, got {other:?}"),
        }
    }

    #[test]
    fn thermostat_vectors() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let ts = thermostat_policy(&g);
        assert_eq!(ts.off_to_on.iter().sum::<f64>(), 1.0);
        assert_eq!(ts.off_to_on[11], 1.0);
        assert_eq!(ts.on_to_off[0], 1.0);
        assert_eq!(ts.on_to_off.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn reference_factorizes_exactly() {
        let (g, p) = reference();
        let f = factorize(&p, &g).unwrap();
        let rebuilt = f.phi_ts.matmul(&f.g).to_dense();
        assert!(rebuilt.max_abs_diff(&p.matrix.to_dense()) < 1e-12);
        assert_eq!(f.s_off[(g.m - 1, 0)], f.p_off[(g.m - 1, g.m - 1)]);
        for i in 0..g.m - 1 {
            assert!(f.s_off.row(i).iter().all(|&v| v == 0.0));
        }
        for i in g.q..g.n {
            assert!(f.s_on.row(i).iter().all(|&v| v == 0.0));
        }
        assert_eq!(f.p_off[(g.n - 1, g.n - 1)], 1.0);
        assert_eq!(f.p_on[(0, 0)], 1.0);
        for s in f.phi_ts.row_sums() {
            assert_eq!(s, 1.0);
        }
    }
}
