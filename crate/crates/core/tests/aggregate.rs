//! Randomized checks of the lockout-augmented chain and of the planning
//! program's structural guarantees.

use proptest::prelude::*;
use tcl_core::expanded::{rollout, ExpandedMarginal, Layout, PolicyPair, StepModel};
use tcl_core::generator::TclParams;
use tcl_core::grid::{build_grid, GridSpec};
use tcl_core::synthesis::{assemble, extract_policies, AssembledQp, PlanProblem, StepJoint};
use tcl_core::Mode;

fn grid() -> GridSpec {
    build_grid(20.0, 22.0, 10, 2).unwrap()
}

fn policy(g: &GridSpec, raw: &[f64]) -> PolicyPair {
    let n_on = g.free_off_bins().count();
    PolicyPair::from_kappa(g, &raw[..n_on], &raw[n_on..n_on + g.free_on_bins().count()]).unwrap()
}

fn marginal(layout: Layout, weights: &[f64]) -> ExpandedMarginal {
    let total: f64 = weights.iter().sum();
    ExpandedMarginal {
        layout,
        values: weights.iter().map(|w| w / total).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn mass_is_conserved(
        tau in 1usize..7,
        weights in prop::collection::vec(0.0..1.0f64, 12 * 2 * 7),
        kappas in prop::collection::vec(prop::collection::vec(0.0..=1.0f64, 17), 8),
        theta_a in prop::collection::vec(29.0..35.0f64, 8),
    ) {
        let g = grid();
        let layout = Layout::new(g.n, tau);
        let nu = marginal(layout, &weights[..layout.len()]);
        prop_assume!(nu.total() > 0.0);
        // Ambient and policy cycle through the drawn values over 360 steps.
        let models: Vec<StepModel> = theta_a
            .iter()
            .map(|&t| StepModel::new(&g, &TclParams::reference(), tau, 1.0, t).unwrap())
            .collect();
        let policies: Vec<PolicyPair> = kappas.iter().map(|k| policy(&g, k)).collect();
        let mut x = nu;
        for k in 0..360 {
            x = models[k % models.len()].advance(&x, &g, &policies[k % policies.len()]).unwrap();
            prop_assert!(x.values.iter().all(|&v| v >= -1e-15));
        }
        prop_assert!((x.total() - 1.0).abs() < 1e-9, "mass drifted to {}", x.total());
    }

    #[test]
    fn joints_of_a_policy_extract_to_that_policy(
        weights in prop::collection::vec(0.0..1.0f64, 144),
        kappa in prop::collection::vec(0.0..=1.0f64, 17),
    ) {
        let g = grid();
        let layout = Layout::new(g.n, 5);
        let nu = marginal(layout, &weights);
        let gs = policy(&g, &kappa);
        let joint = StepJoint {
            off_stay: (1..=g.n).map(|b| nu.get(Mode::Off, b, 0) * (1.0 - gs.switch_on[b - 1])).collect(),
            off_switch: (1..=g.n).map(|b| nu.get(Mode::Off, b, 0) * gs.switch_on[b - 1]).collect(),
            on_switch: (1..=g.n).map(|b| nu.get(Mode::On, b, 0) * gs.switch_off[b - 1]).collect(),
            on_stay: (1..=g.n).map(|b| nu.get(Mode::On, b, 0) * (1.0 - gs.switch_off[b - 1])).collect(),
        };
        let back = extract_policies(&joint, &nu, &g).unwrap();
        for b in 1..=g.n {
            if nu.get(Mode::Off, b, 0) > 1e-10 {
                prop_assert!((back.switch_on[b - 1] - gs.switch_on[b - 1]).abs() < 1e-9);
            }
            if nu.get(Mode::On, b, 0) > 1e-10 {
                prop_assert!((back.switch_off[b - 1] - gs.switch_off[b - 1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn any_policy_schedule_is_a_feasible_point(
        kappas in prop::collection::vec(prop::collection::vec(0.0..=0.3f64, 17), 6),
        theta_a in prop::collection::vec(29.0..35.0f64, 6),
        start_bin in 3usize..11,
    ) {
        let g = grid();
        let layout = Layout::new(g.n, 5);
        let problem = PlanProblem {
            grid: g.clone(),
            params: TclParams::reference(),
            tau: 5,
            dt_minutes: 1.0,
            r_ba: vec![40_000.0; 6],
            theta_a: theta_a.clone(),
            nu_hat: ExpandedMarginal::point_mass(layout, Mode::Off, start_bin, 0),
            n_tcl: 1000,
            // These two families restrict the policies, not the dynamics.
            monotonicity: false,
            forbid_early_forced_switch: false,
        };
        let asm: AssembledQp = assemble(&problem).unwrap();
        let policies: Vec<PolicyPair> = kappas.iter().map(|k| policy(&g, k)).collect();
        let x = asm.point_from_policies(&problem, &policies[..5]).unwrap();
        prop_assert!(asm.max_violation(&x) < 1e-12, "violation {:e}", asm.max_violation(&x));
        // The point's cost is the cost of the rolled-out chain.
        let models = problem.step_models().unwrap();
        let roll = rollout(&problem.nu_hat, &g, &models[..5], &policies[..5]).unwrap();
        let direct: f64 = roll
            .iter()
            .map(|nu| (40_000.0 / problem.p_agg() - nu.on_mass()).powi(2))
            .sum();
        prop_assert!((asm.cost(&x) - direct).abs() < 1e-12 * (1.0 + direct));
    }
}
