use hybrid_nls::analysis::{self, AnalysisError, SweepParameter};
use hybrid_nls::energy::HybridParams;
use hybrid_nls::solver::{self, SolverConfig};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

#[test]
fn rho_reproduces_planar_energies() {
    for p in [2.5, 3.0, 3.5] {
        let rho = analysis::rho(p, &cfg()).unwrap();
        let e = solver::solve_planar(p, 3.0, &cfg()).unwrap().energy;
        assert!((analysis::free_energy(p, rho, 3.0) / e - 1.0).abs() < 0.02, "p={p}");
    }
}

#[test]
fn critical_mass_is_a_root_of_the_crossing() {
    let (r1, r2) = (analysis::rho(2.5, &cfg()).unwrap(), analysis::rho(3.5, &cfg()).unwrap());
    let mu = analysis::critical_mass_from(2.5, 3.5, r1, r2).unwrap();
    let e = analysis::free_energy(2.5, r1, mu);
    assert!(analysis::crossing_residual(2.5, 3.5, r1, r2, mu).abs() <= 1e-6 * e.abs());
    // the lower-power plane wins below the crossing
    assert!(analysis::free_energy(2.5, r1, 0.5 * mu) < analysis::free_energy(3.5, r2, 0.5 * mu));
    assert!(analysis::free_energy(2.5, r1, 2.0 * mu) > analysis::free_energy(3.5, r2, 2.0 * mu));
}

#[test]
fn equal_powers_have_no_critical_mass() {
    assert!(matches!(analysis::critical_mass_from(3.0, 3.0, 1.0, 1.0), Err(AnalysisError::Domain(_))));
}

#[test]
fn sigma2_sweep_moves_mass_to_the_first_plane() {
    let base = HybridParams::new(3.0, 3.0, 0.0, 1.0, 1.0, 1.0).unwrap();
    let t = analysis::sweep_sigma2(&base, &[4.0, 1.0, 2.0], &cfg()).unwrap();
    assert_eq!(t.rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![1.0, 2.0, 4.0]);
    assert!(t.rows.iter().all(|r| r.converged && r.error.is_none()));
    assert!(t.fraction1_nondecreasing(0.0));
    assert!(t.charges_ordered());
    assert!(t.energy_nondecreasing(0.0));
}

#[test]
fn sigma2_sweep_validates_its_domain() {
    let unequal = HybridParams::new(2.5, 3.5, 0.0, 1.0, 1.0, 1.0).unwrap();
    assert!(analysis::sweep_sigma2(&unequal, &[1.0], &cfg()).is_err());
    let base = HybridParams::new(3.0, 3.0, 2.0, 3.0, 1.0, 1.0).unwrap();
    assert!(analysis::sweep_sigma2(&base, &[1.0, 3.0], &cfg()).is_err());
    assert!(analysis::sweep(&base, SweepParameter::Beta, &[], &cfg()).is_err());
    assert!(analysis::sweep(&base, SweepParameter::Beta, &[f64::NAN], &cfg()).is_err());
}

#[test]
fn failing_rows_do_not_abort_a_sweep() {
    let base = HybridParams::new(3.0, 3.0, 0.0, 0.0, 1.0, 1.0).unwrap();
    let t = analysis::sweep(&base, SweepParameter::Mu, &[-1.0, 1.0], &cfg()).unwrap();
    assert!(t.rows[0].error.is_some());
    assert!(t.rows[1].error.is_none() && t.rows[1].converged);
    assert_eq!(t.converged_rows().count(), 1);
}

#[test]
fn below_critical_mass_the_lower_power_plane_hosts_the_state() {
    let mu_star = analysis::critical_mass(2.5, 3.5, &cfg()).unwrap();
    let t = analysis::sweep_common_sigma(2.5, 3.5, 1.0, 0.5 * mu_star, &[2.0, 6.0], &cfg()).unwrap();
    assert_eq!(t.concentration(0.95), Some(1));
}
