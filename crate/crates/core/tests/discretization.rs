//! Randomized checks of the rate matrix, its Euler step and the thermostat
//! factorization over the parameter ranges of interest.

use proptest::prelude::*;
use tcl_core::generator::{build_rate_matrix, build_rate_matrix_for_step, RateMatrix, TclParams};
use tcl_core::grid::{build_grid, GridSpec};
use tcl_core::markov::{cfl_bound_hours, factorize, transition_matrix};
use tcl_core::{Error, Mode};

fn params(r: f64, c: f64, sigma2: f64) -> TclParams {
    TclParams { r, c, sigma2, ..TclParams::reference() }
}

/// Step (minutes) with `α = 1/Δt` that passes CFL: 1 min when possible,
/// otherwise 90% of the advective bound, so the α row is the binding one.
fn admissible_step(grid: &GridSpec, p: &TclParams, theta_a: f64) -> Option<(f64, RateMatrix)> {
    let a = build_rate_matrix_for_step(grid, p, theta_a, 1.0).ok()?;
    let bound = cfl_bound_hours(&a) * 60.0;
    let dt = if bound >= 1.0 { 1.0 } else { 0.9 * bound };
    let a = build_rate_matrix_for_step(grid, p, theta_a, dt).ok()?;
    Some((dt, a))
}

fn check_rate_matrix(a: &RateMatrix) -> Result<(), TestCaseError> {
    for i in 0..a.dim() {
        let mut sum = 0.0;
        for (j, v) in a.matrix.row(i) {
            sum += v;
            if i == j {
                prop_assert!(v <= 0.0, "diagonal A[{i}][{i}] = {v}");
            } else {
                prop_assert!(v >= 0.0, "off-diagonal A[{i}][{j}] = {v}");
            }
        }
        prop_assert!(sum.abs() < 1e-12, "row {i} sums to {sum:e}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn rate_matrix_is_a_generator(
        r in 1.0..3.0f64, c in 0.5..2.0f64, sigma2 in 0.0..0.05f64, theta_a in 28.0..38.0f64,
        gamma in 1.0..500.0f64,
    ) {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let p = params(r, c, sigma2);
        match build_rate_matrix(&g, &p, theta_a, gamma) {
            Ok(a) => check_rate_matrix(&a)?,
            // Only the drift-sign assumption may reject a draw.
            Err(e) => prop_assert!(matches!(e, Error::AssumptionViolation(_)), "{e}"),
        }
    }

    #[test]
    fn euler_step_is_stochastic_at_the_bound(
        r in 1.0..3.0f64, c in 0.5..2.0f64, sigma2 in 0.0..0.05f64, theta_a in 28.0..38.0f64,
        q in 4usize..14, m in 1usize..4,
    ) {
        let g = build_grid(20.0, 22.0, q, m).unwrap();
        let p = params(r, c, sigma2);
        let Some((_, a)) = admissible_step(&g, &p, theta_a) else { return Ok(()) };
        let dt_bound = cfl_bound_hours(&a) * 60.0;
        let pm = transition_matrix(&a, dt_bound).unwrap();
        for i in 0..a.dim() {
            let mut sum = 0.0;
            for (_, v) in pm.matrix.row(i) {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "P entry {v}");
                sum += v;
            }
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
        let over = transition_matrix(&a, 1.01 * dt_bound);
        prop_assert!(matches!(over, Err(Error::Cfl { .. })), "step 1% above the bound was accepted");
    }

    #[test]
    fn thermostat_factorization_is_exact(
        r in 1.0..3.0f64, c in 0.5..2.0f64, sigma2 in 0.0..0.05f64, theta_a in 28.0..38.0f64,
    ) {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let p = params(r, c, sigma2);
        let Some((dt, a)) = admissible_step(&g, &p, theta_a) else { return Ok(()) };
        let pm = transition_matrix(&a, dt).unwrap();
        let f = factorize(&pm, &g).unwrap();
        let dev = f.phi_ts.matmul(&f.g).to_dense().max_abs_diff(&pm.matrix.to_dense());
        prop_assert!(dev < 1e-12, "max deviation {dev:e}");
    }

    #[test]
    fn bins_partition_and_align(theta in 15.0..27.0f64, q in 3usize..20, m in 1usize..5) {
        let g = build_grid(20.0, 22.0, q, m).unwrap();
        for mode in [Mode::Off, Mode::On] {
            let b = g.bin(theta, mode);
            let (lo, hi) = g.bin_edges(mode, b);
            let clamped_low = b == 1 && theta < lo;
            let clamped_high = b == g.n && theta >= hi;
            prop_assert!(clamped_low || clamped_high || (lo <= theta && theta < hi));
        }
        let (off, on) = (g.bin(theta, Mode::Off), g.bin(theta, Mode::On));
        if (2..g.n).contains(&off) && (2..g.n).contains(&on) {
            prop_assert_eq!(off, on + m - 1);
        }
    }
}

#[test]
fn pure_advection_bound_is_cell_width_over_speed() {
    use tcl_core::generator::drift;
    let g = build_grid(20.0, 22.0, 10, 2).unwrap();
    let p = params(2.0, 1.0, 0.0);
    // Small gamma so the boundary discharge never binds.
    let a = build_rate_matrix(&g, &p, 32.0, 1.0).unwrap();
    let up = (1..g.n).map(|j| drift(g.bin_edges(Mode::Off, j).1, Mode::Off, 32.0, &p));
    let down = (2..=g.n).map(|i| -drift(g.bin_edges(Mode::On, i).0, Mode::On, 32.0, &p));
    let v = up.chain(down).fold(0.0, f64::max);
    let expected = g.delta_lambda / v;
    assert!((cfl_bound_hours(&a) - expected).abs() < 1e-12 * expected);
}
