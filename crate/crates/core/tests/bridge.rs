mod common;

use common::{circle_bridge, circle_prior, l2_diff, rng, von_mises_pair};
use wflow_core::bridge::{
    bridge_mixture, entropic_action, entropic_action_curve, entropy_boundary_term, perturbed_curve,
    random_smooth_field, solve_bridge, static_coupling, zero_noise_study, ActionForm, DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
};
use wflow_core::functionals::{log_gradient, relative_entropy};
use wflow_core::geometry::project_tangent;
use wflow_core::prior::invariant_measure;
use wflow_core::{build_prior, integrate, Density, Error, Field, FlowCurve, Grid};

fn solve(prior: &wflow_core::Prior, mu0: &Density, mu1: &Density, m: usize) -> wflow_core::BridgeSolution {
    solve_bridge(prior, mu0, mu1, m, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap()
}

#[test]
fn invariant_marginals_give_a_static_bridge() {
    for drift in [f64::sin as fn(f64) -> f64, |_| 1.0] {
        let prior = circle_prior(64, drift);
        let m = invariant_measure(&prior).unwrap().m;
        let sol = solve(&prior, &m, &m, 16);
        for k in 0..=16 {
            assert!(sol.rho[k].l1_distance(&m).unwrap() <= 1e-8);
            assert!(sol.velocity[k].max_abs() <= 1e-8, "k = {k}: {}", sol.velocity[k].max_abs());
        }
    }
    let prior = circle_prior(64, |_| 1.0);
    let u = Density::uniform(prior.grid());
    let sol = solve(&prior, &u, &u, 16);
    assert!(entropic_action(&sol, ActionForm::Primal).unwrap().abs() <= 1e-10);
}

#[test]
fn end_marginals_and_osmotic_velocity() {
    let sol = circle_bridge(128, 16, |x| 0.5 + x.cos());
    let (mu0, mu1) = von_mises_pair(sol.grid());
    assert!(sol.converged);
    assert!(sol.marginal_error <= DEFAULT_TOLERANCE);
    assert!(sol.rho[0].l1_distance(&mu0).unwrap() <= 1e-8);
    assert!(sol.rho[16].l1_distance(&mu1).unwrap() <= 1e-8);
    assert!(sol.renormalization_defect <= 1e-8);
    for k in 0..=16 {
        let u = log_gradient(&sol.rho[k]).scale(0.5);
        assert!((&sol.osmotic[k] - &u).max_abs() <= 1e-10);
    }
}

fn current_velocity_gap(n: usize) -> f64 {
    let sol = circle_bridge(n, 16, |x| 0.5 + x.cos());
    (0..=16)
        .map(|k| {
            let rho = &sol.rho[k];
            let expected = project_tangent(rho, &(&sol.drift[k] - &sol.osmotic[k])).unwrap().w;
            l2_diff(rho, &sol.velocity[k], &expected)
        })
        .fold(0.0, f64::max)
}

#[test]
fn current_velocity_is_drift_minus_osmotic() {
    let (coarse, fine) = (current_velocity_gap(64), current_velocity_gap(128));
    assert!(fine <= 5e-3);
    assert!((coarse / fine).log2() >= 1.8, "{coarse:e} {fine:e}");
}

#[test]
fn brownian_bridge_between_gaussians_stays_gaussian() {
    let g = Grid::line(-5.0, 5.0, 512).unwrap();
    let prior = build_prior(&g, 0.25, &Field::zeros(&g)).unwrap();
    let mu0 = Density::gaussian(&g, -1.0, 0.5).unwrap();
    let mu1 = Density::gaussian(&g, 1.0, 0.6).unwrap();
    let sol = solve(&prior, &mu0, &mu1, 16);
    for rho in &sol.rho {
        let (_, _, kurtosis) = rho.moments();
        assert!(kurtosis.abs() <= 1e-4, "excess kurtosis {kurtosis:e}");
    }
}

#[test]
fn sinkhorn_decays_geometrically() {
    let fixtures = [circle_bridge(64, 16, f64::sin), circle_bridge(64, 16, |_| 1.0)];
    for sol in &fixtures {
        assert!(sol.marginal_error <= 1e-11);
        assert!(sol.decay_ratio(10) <= 0.9);
        assert!(sol.defect_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) || w[1] < 1e-13));
    }
}

#[test]
fn non_convergence_is_reported() {
    let prior = circle_prior(64, f64::sin);
    let (mu0, mu1) = von_mises_pair(prior.grid());
    match solve_bridge(&prior, &mu0, &mu1, 16, 1e-14, 2) {
        Err(Error::NotConverged { iterations, history, .. }) => {
            assert_eq!(iterations, 2);
            assert!(!history.is_empty());
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
    assert!(matches!(solve_bridge(&prior, &mu0, &mu1, 4, 1e-11, 100), Err(Error::InvalidArgument(_))));
}

#[test]
fn static_coupling_marginals_and_symmetry() {
    let sol = circle_bridge(64, 16, |x| 0.3 * x.sin() + 0.7);
    let pi = static_coupling(&sol);
    let (mu0, mu1) = von_mises_pair(sol.grid());
    for (i, m) in mu0.masses().iter().enumerate() {
        assert!((pi.row(i).sum() - m).abs() <= 1e-9);
    }
    for (j, m) in mu1.masses().iter().enumerate() {
        assert!((pi.column(j).sum() - m).abs() <= 1e-9);
    }

    let prior = circle_prior(64, |_| 0.0);
    let u = Density::uniform(prior.grid());
    let pi = static_coupling(&solve(&prior, &u, &u, 8));
    assert!((&pi - pi.transpose()).amax() <= 1e-12 * pi.amax());
}

#[test]
fn mixing_bridges_reproduces_the_marginal_flow() {
    let sol = circle_bridge(32, 8, |x| 1.0 + 0.5 * x.cos());
    for k in 0..=8 {
        let mixed = bridge_mixture(&sol, k).unwrap();
        let masses = sol.rho[k].masses();
        let gap = mixed.iter().zip(&masses).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-10, "k = {k}: {gap:e}");
    }
}

#[test]
fn continuity_holds_to_second_order_in_time() {
    let defects: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&m| {
            let curve = circle_bridge(64, m, |_| 1.0).curve().unwrap();
            curve.continuity_defect().into_iter().fold(0.0, f64::max)
        })
        .collect();
    assert!(defects.windows(2).all(|w| w[1] < w[0]), "{defects:?}");
    assert!((defects[1] / defects[2]).log2() >= 1.8, "{defects:?}");
}

#[test]
fn swapping_marginals_reverses_time_for_reversible_priors() {
    let prior = circle_prior(64, f64::sin);
    let (mu0, mu1) = von_mises_pair(prior.grid());
    let forward = solve(&prior, &mu0, &mu1, 16);
    let backward = solve(&prior, &mu1, &mu0, 16);
    for k in 0..=16 {
        assert!(forward.rho[k].l1_distance(&backward.rho[16 - k]).unwrap() <= 1e-8);
    }
}

#[test]
fn drift_correction_is_a_gradient() {
    let sol = circle_bridge(128, 16, |_| 1.0);
    let b = sol.prior.drift().clone();
    for c in &sol.drift {
        assert!(integrate(&(c - &b)).abs() <= 1e-8);
    }
}

#[test]
fn expanded_action_differs_by_the_entropy_term() {
    let sol = circle_bridge(128, 64, |_| 1.0);
    let prior = &sol.prior;
    let base = FlowCurve::from_densities(sol.times.clone(), sol.rho.clone()).unwrap();
    let boundary = entropy_boundary_term(prior, &sol.mu0, &sol.mu1);
    let gap = |curve: &FlowCurve| {
        entropic_action_curve(prior, curve, ActionForm::Primal).unwrap()
            - entropic_action_curve(prior, curve, ActionForm::Expanded).unwrap()
            - boundary
    };
    let mut rng = rng(11);
    let mut gaps = vec![gap(&base)];
    for _ in 0..5 {
        let eta = random_smooth_field(sol.grid(), &mut rng, 4);
        gaps.push(gap(&perturbed_curve(&base, &eta, 0.1).unwrap()));
    }
    let spread = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-6, "{gaps:?}");
}

#[test]
fn bridge_beats_perturbed_curves() {
    let sol = circle_bridge(128, 64, f64::sin);
    let prior = &sol.prior;
    let base = FlowCurve::from_densities(sol.times.clone(), sol.rho.clone()).unwrap();
    let best = entropic_action_curve(prior, &base, ActionForm::Primal).unwrap();
    let mut rng = rng(5);
    for _ in 0..20 {
        let eta = random_smooth_field(sol.grid(), &mut rng, 4);
        let other = entropic_action_curve(prior, &perturbed_curve(&base, &eta, 0.1).unwrap(), ActionForm::Primal).unwrap();
        assert!(other - best >= -1e-8);
    }
}

#[test]
fn relative_fisher_form_for_reversible_priors() {
    let sol = circle_bridge(128, 32, f64::sin);
    let m = invariant_measure(&sol.prior).unwrap().m;
    let a = sol.prior.a();
    let primal = entropic_action(&sol, ActionForm::Primal).unwrap();
    let fisher = entropic_action(&sol, ActionForm::RelativeFisher).unwrap();
    let drop = 0.5 * a * (relative_entropy(&sol.mu1, &m).unwrap() - relative_entropy(&sol.mu0, &m).unwrap());
    assert!((primal - a * fisher - drop).abs() <= 1e-4 * primal.abs(), "{primal} {fisher} {drop}");
}

#[test]
fn zero_noise_with_identical_marginals() {
    let g = Grid::circle(2.0 * std::f64::consts::PI, 64).unwrap();
    let u = Density::uniform(&g);
    for row in zero_noise_study(&u, &u, &[0.4, 0.1], 8, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap() {
        assert!(row.distance <= 1e-8, "{row:?}");
    }

    let g = Grid::line(-6.0, 6.0, 64).unwrap();
    let mu = Density::gaussian(&g, 0.0, 0.8).unwrap();
    let rows = zero_noise_study(&mu, &mu, &[0.4, 0.2, 0.1], 8, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
    assert!(rows.windows(2).all(|w| w[1].distance < w[0].distance), "{rows:?}");
}
