use hybrid_nls::energy::{self, ChargedField, HybridParams, HybridState};
use hybrid_nls::exec::Execution;
use hybrid_nls::grid::{self, RadialField};
use hybrid_nls::solver::{self, SolverConfig, SolverError};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn params(p1: f64, p2: f64, s1: f64, s2: f64, beta: f64, mu: f64) -> HybridParams {
    HybridParams::new(p1, p2, s1, s2, beta, mu).unwrap()
}

#[test]
fn planar_energy_follows_mass_scaling() {
    for p in [2.5, 3.0, 3.5] {
        let e1 = solver::solve_planar(p, 1.0, &cfg()).unwrap();
        let e16 = solver::solve_planar(p, 16.0, &cfg()).unwrap();
        assert!(e1.converged && e16.converged);
        let expect = 16f64.powf(2.0 / (4.0 - p));
        assert!((e16.energy / e1.energy / expect - 1.0).abs() < 0.02, "p={p}");
    }
}

#[test]
fn planar_ground_state_satisfies_virial_identities() {
    let r = solver::solve_planar(3.0, 1.0, &cfg()).unwrap();
    let u = &r.state().u1.phi;
    let lp = grid::lp_norm(u, 3.0).powi(3);
    assert!((grid::h1_seminorm_sq(u) / (lp / 3.0) - 1.0).abs() < 1e-3);
    assert!((r.omega * r.mass1 / (2.0 * lp / 3.0) - 1.0).abs() < 1e-3);
}

#[test]
fn point_interaction_lowers_energy_and_orders_in_sigma() {
    let planar = solver::solve_planar(3.0, 1.0, &cfg()).unwrap().energy;
    let energies: Vec<f64> = [-1.0, 0.0, 1.0, 2.0]
        .iter()
        .map(|&s| solver::solve_single(3.0, s, 1.0, &cfg()).unwrap().energy)
        .collect();
    assert!(energies.iter().all(|&e| e < planar));
    assert!(energies.windows(2).all(|w| w[0] < w[1]), "{energies:?}");
}

#[test]
fn single_plane_energy_is_concave_in_mass() {
    let e = |mu| solver::solve_single(3.0, 0.5, mu, &cfg()).unwrap().energy;
    let (a, b, c) = (e(0.5), e(1.0), e(1.5));
    assert!(b >= 0.5 * (a + c));
}

#[test]
fn uncoupled_problem_picks_the_better_plane() {
    let r = solver::solve_hybrid(&params(3.0, 3.0, 0.0, 1.0, 0.0, 1.0), &cfg()).unwrap();
    let f1 = solver::solve_single(3.0, 0.0, 1.0, &cfg()).unwrap();
    assert!(r.converged);
    assert!((r.energy / f1.energy - 1.0).abs() < 1e-4);
    assert!(r.mass2 < 1e-6);
    assert_eq!(r.dominant_plane, 1);
}

#[test]
fn symmetric_coupled_problem_has_equal_charges() {
    let r = solver::solve_hybrid(&params(3.0, 3.0, 0.5, 0.5, 1.0, 1.0), &cfg()).unwrap();
    assert!(r.converged);
    assert!((r.q1 - r.q2).abs() <= 1e-6 * r.q1.abs());
    assert!((r.mass1 - r.mass2).abs() <= 1e-6);
}

#[test]
fn multistart_runs_agree_when_coupled() {
    let r = solver::solve_hybrid(&params(2.5, 3.5, 0.0, 0.5, 1.0, 1.0), &cfg()).unwrap();
    let converged: Vec<_> = r.starts.iter().filter(|s| s.converged).collect();
    assert!(converged.len() >= 2);
    for s in &converged {
        assert!((s.energy / r.energy - 1.0).abs() < 1e-4, "{s:?}");
    }
}

#[test]
fn mass_constraint_is_held() {
    for p in [params(3.0, 3.0, 0.0, 1.0, 1.0, 1.0), params(2.5, 3.5, -0.5, 0.5, 0.3, 2.0)] {
        let r = solver::solve_hybrid(&p, &cfg()).unwrap();
        assert!(((r.mass1 + r.mass2) / p.mu - 1.0).abs() < 1e-10);
        let s = r.state();
        let direct = energy::mass(&s.u1) + energy::mass(&s.u2);
        assert!((direct / p.mu - 1.0).abs() < 1e-10);
    }
}

#[test]
fn residual_separates_ground_states_from_arbitrary_states() {
    let p = params(3.0, 3.0, 0.0, 1.0, 1.0, 1.0);
    let r = solver::solve_hybrid(&p, &cfg()).unwrap();
    let g = r.state().u1.grid().clone();
    let bump = |a: f64, w: f64| RadialField::from_fn(g.clone(), move |x| a * (-(x * x) / (w * w)).exp() * (1.0 + 0.2 * x));
    let lambda = r.lambda;
    let other = HybridState::new(
        ChargedField::new(bump(0.4, 1.3), 0.3, lambda).unwrap(),
        ChargedField::new(bump(0.2, 0.7), 0.1, lambda).unwrap(),
    )
    .unwrap();
    let omega = solver::extract_omega(&other, &p).unwrap();
    assert!(energy::el_residual(&other, &p, omega) >= 10.0 * r.el_residual);
}

#[test]
fn solves_are_reproducible_and_independent_of_backend() {
    let p = params(2.5, 3.5, 0.0, 0.5, 1.0, 1.0);
    let a = solver::solve_hybrid(&p, &SolverConfig { execution: Execution::Sequential, ..cfg() }).unwrap();
    let b = solver::solve_hybrid(&p, &SolverConfig { execution: Execution::Parallel { jobs: 3 }, ..cfg() }).unwrap();
    assert_eq!(a.energy.to_bits(), b.energy.to_bits());
    assert_eq!(a.starts, b.starts);
    assert_eq!(a.profile_samples, b.profile_samples);
}

#[test]
fn iteration_budget_exhaustion_is_reported_not_raised() {
    let r = solver::solve_hybrid(&params(3.0, 3.0, 0.0, 1.0, 1.0, 1.0), &SolverConfig { max_iters: 3, ..cfg() }).unwrap();
    assert!(!r.converged);
    assert!(r.iterations <= 3 * r.starts.len());
}

#[test]
fn supercritical_power_is_rejected() {
    assert!(HybridParams::new(5.0, 3.0, 0.0, 0.0, 1.0, 1.0).is_err());
    assert!(matches!(solver::solve_planar(4.0, 1.0, &cfg()), Err(SolverError::Params(_)) | Err(SolverError::Domain(_))));
}

#[test]
fn ground_state_frequency_lies_above_linear_threshold() {
    let p = params(3.0, 3.0, 0.0, 1.0, 0.5, 1.0);
    let r = solver::solve_hybrid(&p, &cfg()).unwrap();
    let star = solver::omega_star(&p).unwrap();
    assert_eq!(r.omega_star, Some(star));
    assert!(r.omega > star);
}
