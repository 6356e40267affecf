//! End-to-end acceptance checks. Shared by the `verify` command and the
//! `acceptance` test target; every check prints one PASS/FAIL line.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{self, SweepParameter};
use crate::energy::{self, ChargedField, HybridParams, HybridState};
use crate::exec::Execution;
use crate::grid::{self, RadialField, RadialGrid};
use crate::solver::{self, GroundStateReport, SolverConfig};
use crate::specfun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Default discretization (N = 2048, grading 1.01).
    Full,
    /// N = 512 with the grading raised to `1.01⁴` so the geometric layer
    /// spans the same range; mesh-limited tolerances are loosened.
    Fast,
}

impl Profile {
    pub fn config(self) -> SolverConfig {
        let base = SolverConfig::default();
        match self {
            Profile::Full => base,
            Profile::Fast => SolverConfig { intervals: 512, grading: base.grading.powi(4), ..base },
        }
    }
}

/// Thresholds of the suite. Only the mesh-limited entries differ between
/// profiles; see [`Tolerances::for_profile`].
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub scaling_exponent: f64,
    pub pohozaev: f64,
    pub decoupling_energy: f64,
    pub losing_plane_mass: f64,
    pub migration_fraction: f64,
    pub migration_energy: f64,
    pub dichotomy_fraction: f64,
    pub dichotomy_energy: f64,
    pub el_residual: f64,
    pub boundary_residual: f64,
    pub gradient: f64,
    pub action_identity: f64,
    pub nehari: f64,
    pub rayleigh: f64,
    pub theta_round_trip: f64,
    pub green_norm: f64,
    pub bessel: f64,
    pub rearrangement: f64,
}

impl Tolerances {
    pub fn for_profile(profile: Profile) -> Self {
        let full = Self {
            scaling_exponent: 0.02,
            pohozaev: 1e-3,
            decoupling_energy: 1e-4,
            losing_plane_mass: 1e-6,
            migration_fraction: 0.99,
            migration_energy: 0.01,
            dichotomy_fraction: 0.95,
            dichotomy_energy: 0.03,
            el_residual: 1e-2,
            boundary_residual: 1e-3,
            gradient: 1e-5,
            action_identity: 1e-12,
            nehari: 1e-4,
            rayleigh: 1e-3,
            theta_round_trip: 1e-12,
            green_norm: 1e-6,
            bessel: 1e-9,
            rearrangement: 1e-6,
        };
        match profile {
            Profile::Full => full,
            Profile::Fast => Self {
                pohozaev: 1e-2,
                decoupling_energy: 1e-3,
                boundary_residual: 1e-2,
                nehari: 1e-3,
                rayleigh: 1e-2,
                ..full
            },
        }
    }

    /// `(name, full, this profile)` for every loosened entry.
    pub fn loosened(&self) -> Vec<(&'static str, f64, f64)> {
        let full = Self::for_profile(Profile::Full);
        let mut out = Vec::new();
        let mut cmp = |name, a: f64, b: f64| {
            if a != b {
                out.push((name, a, b));
            }
        };
        cmp("pohozaev", full.pohozaev, self.pohozaev);
        cmp("decoupling_energy", full.decoupling_energy, self.decoupling_energy);
        cmp("boundary_residual", full.boundary_residual, self.boundary_residual);
        cmp("nehari", full.nehari, self.nehari);
        cmp("rayleigh", full.rayleigh, self.rayleigh);
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:>2} {:<28} {} [{:.1} s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub const TITLES: [&str; 14] = [
    "scaling law",
    "pohozaev/nehari",
    "decoupling at beta=0",
    "strict coupling gap",
    "ground-state structure",
    "charge ordering",
    "mass migration",
    "critical-mass dichotomy",
    "mass-split oracle",
    "euler-lagrange certificate",
    "gradient correctness",
    "action identities",
    "linear spectrum",
    "closed-form layer",
];

type Check = Result<(bool, String), String>;

/// Shared solver state of one suite run. Reports are memoized so criteria
/// that certify "every converged report" see the same states the others
/// produced.
pub struct Suite {
    pub profile: Profile,
    pub cfg: SolverConfig,
    pub tol: Tolerances,
    hybrid: Mutex<BTreeMap<String, Arc<GroundStateReport>>>,
    single: Mutex<BTreeMap<String, Arc<GroundStateReport>>>,
}

fn key(values: &[f64]) -> String {
    values.iter().map(|v| format!("{:016x}", v.to_bits())).collect::<Vec<_>>().join(":")
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn params(p1: f64, p2: f64, s1: f64, s2: f64, beta: f64, mu: f64) -> Result<HybridParams, String> {
    HybridParams::new(p1, p2, s1, s2, beta, mu).map_err(|e| e.to_string())
}

impl Suite {
    pub fn new(profile: Profile, execution: Execution) -> Self {
        let cfg = SolverConfig { execution, ..profile.config() };
        Self {
            profile,
            cfg,
            tol: Tolerances::for_profile(profile),
            hybrid: Mutex::new(BTreeMap::new()),
            single: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn hybrid(&self, p: &HybridParams) -> Result<Arc<GroundStateReport>, String> {
        let k = key(&[p.p1, p.p2, p.sigma1, p.sigma2, p.beta, p.mu]);
        if let Some(r) = self.hybrid.lock().expect("suite cache").get(&k) {
            return Ok(r.clone());
        }
        let r = Arc::new(solver::solve_hybrid(p, &self.cfg).map_err(|e| e.to_string())?);
        self.hybrid.lock().expect("suite cache").insert(k, r.clone());
        Ok(r)
    }

    pub fn single(&self, p: f64, sigma: f64, mu: f64) -> Result<Arc<GroundStateReport>, String> {
        let k = key(&[p, sigma, mu]);
        if let Some(r) = self.single.lock().expect("suite cache").get(&k) {
            return Ok(r.clone());
        }
        let r = Arc::new(solver::solve_single(p, sigma, mu, &self.cfg).map_err(|e| e.to_string())?);
        self.single.lock().expect("suite cache").insert(k, r.clone());
        Ok(r)
    }

    pub fn rho(&self, p: f64) -> Result<f64, String> {
        analysis::rho(p, &self.cfg).map_err(|e| e.to_string())
    }

    pub fn critical_mass(&self) -> Result<f64, String> {
        analysis::critical_mass(2.5, 3.5, &self.cfg).map_err(|e| e.to_string())
    }

    /// Parameter sets of every hybrid ground state the suite relies on.
    pub fn hybrid_cases(&self) -> Result<Vec<HybridParams>, String> {
        let mut v = vec![params(3.0, 3.0, 0.0, 1.0, 0.0, 1.0)?, params(2.5, 3.5, 0.0, 0.0, 0.0, 1.0)?];
        for beta in [0.5, 1.0, 2.0] {
            v.push(params(3.0, 3.0, 0.0, 0.0, beta, 1.0)?);
        }
        for s2 in [0.5, 1.0, 2.0, 4.0, 8.0] {
            v.push(params(3.0, 3.0, 0.0, s2, 1.0, 1.0)?);
        }
        let mu_star = self.critical_mass()?;
        for mu in [0.5 * mu_star, 2.0 * mu_star] {
            v.push(params(2.5, 3.5, 6.0, 6.0, 1.0, mu)?);
        }
        Ok(v)
    }

    fn single_cases() -> Vec<(f64, f64, f64)> {
        vec![(3.0, 0.0, 1.0), (3.0, 1.0, 1.0), (2.5, 0.0, 1.0), (3.5, 0.0, 1.0)]
    }

    pub fn run(&self, id: u8) -> CriterionResult {
        let start = Instant::now();
        let outcome = match id {
            1 => self.c1_scaling(),
            2 => self.c2_pohozaev(),
            3 => self.c3_decoupling(),
            4 => self.c4_gap(),
            5 => self.c5_structure(),
            6 => self.c6_charges(),
            7 => self.c7_migration(),
            8 => self.c8_dichotomy(),
            9 => self.c9_mass_split(),
            10 => self.c10_certificate(),
            11 => self.c11_gradient(),
            12 => self.c12_action(),
            13 => self.c13_spectrum(),
            14 => self.c14_closed_form(),
            _ => Err(format!("no criterion {id}")),
        };
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        let title = TITLES.get(usize::from(id).wrapping_sub(1)).copied().unwrap_or("unknown");
        CriterionResult { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() }
    }

    pub fn run_all(&self, mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
        (1..=14)
            .map(|id| {
                let r = self.run(id);
                report(&r);
                r
            })
            .collect()
    }

    fn c1_scaling(&self) -> Check {
        let start = Instant::now();
        let fit = analysis::scaling_fit(3.0, &[0.5, 1.0, 2.0, 4.0], &self.cfg).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let ok = rel(fit.exponent, 2.0) <= self.tol.scaling_exponent && secs <= 120.0;
        Ok((ok, format!("fitted exponent {:.6} (2 ± {:.0}%), {secs:.1} s", fit.exponent, 100.0 * self.tol.scaling_exponent)))
    }

    fn c2_pohozaev(&self) -> Check {
        let mut worst: f64 = 0.0;
        for p in [2.5, 3.0, 3.5] {
            let r = solver::solve_planar(p, 1.0, &self.cfg).map_err(|e| e.to_string())?;
            if !r.converged {
                return Ok((false, format!("planar p={p} did not converge")));
            }
            let u = &r.state().u1.phi;
            let grad = grid::h1_seminorm_sq(u);
            let lp = grid::lp_norm(u, p).powf(p);
            let mass = r.mass1;
            worst = worst.max(rel(grad, (p - 2.0) / p * lp)).max(rel(r.omega * mass, 2.0 / p * lp));
        }
        Ok((worst <= self.tol.pohozaev, format!("worst relative defect {worst:.2e} (≤ {:.0e})", self.tol.pohozaev)))
    }

    fn c3_decoupling(&self) -> Check {
        let cases = [(params(3.0, 3.0, 0.0, 1.0, 0.0, 1.0)?, (3.0, 0.0), (3.0, 1.0)), (params(2.5, 3.5, 0.0, 0.0, 0.0, 1.0)?, (2.5, 0.0), (3.5, 0.0))];
        let mut ok = true;
        let mut parts = Vec::new();
        for (hp, a, b) in cases {
            let h = self.hybrid(&hp)?;
            let (f1, f2) = (self.single(a.0, a.1, 1.0)?, self.single(b.0, b.1, 1.0)?);
            let best = f1.energy.min(f2.energy);
            let e = rel(h.energy, best);
            let losing = h.mass1.min(h.mass2);
            ok &= h.converged && e <= self.tol.decoupling_energy && losing <= self.tol.losing_plane_mass * hp.mu;
            parts.push(format!("energy {e:.1e}, losing mass {losing:.1e}"));
        }
        Ok((ok, parts.join("; ")))
    }

    fn c4_gap(&self) -> Check {
        let f = self.single(3.0, 0.0, 1.0)?;
        let mut gaps = Vec::new();
        for beta in [0.5, 1.0, 2.0] {
            let h = self.hybrid(&params(3.0, 3.0, 0.0, 0.0, beta, 1.0)?)?;
            if !h.converged {
                return Ok((false, format!("beta={beta} did not converge")));
            }
            gaps.push(f.energy - h.energy);
        }
        let ok = gaps[0] > 0.0 && gaps.windows(2).all(|w| w[1] > w[0]);
        Ok((ok, format!("gaps {:.4e}, {:.4e}, {:.4e}", gaps[0], gaps[1], gaps[2])))
    }

    fn c5_structure(&self) -> Check {
        let mut checked = 0;
        let mut worst_fixed: f64 = 0.0;
        for p in self.hybrid_cases()?.into_iter().filter(|p| p.beta > 0.0) {
            let r = self.hybrid(&p)?;
            if !r.converged {
                return Ok((false, format!("{p:?} did not converge")));
            }
            for u in [&r.state().u1, &r.state().u2] {
                let total = u.total_field();
                if let Some(k) = total.values().iter().position(|&v| !(v > 0.0)) {
                    return Ok((false, format!("u not positive at node {k} for {p:?}")));
                }
                let (mono, violations) = analysis::monotone_radial_check(&total);
                if !mono {
                    return Ok((false, format!("{violations} monotonicity violations for {p:?}")));
                }
                let s = analysis::rearrange_decreasing(&total).map_err(|e| e.to_string())?;
                worst_fixed = worst_fixed.max(dual_distance(&s, &total));
                checked += 1;
            }
        }
        Ok((
            worst_fixed <= self.tol.rearrangement,
            format!("{checked} profiles positive and decreasing; rearrangement defect {worst_fixed:.1e}"),
        ))
    }

    fn c6_charges(&self) -> Check {
        let mut parts = Vec::new();
        let mut ok = true;
        for s2 in [0.5, 1.0, 2.0] {
            let r = self.hybrid(&params(3.0, 3.0, 0.0, s2, 1.0, 1.0)?)?;
            ok &= r.converged && r.q2 < r.q1;
            parts.push(format!("σ₂={s2}: q1={:.4}, q2={:.4}", r.q1, r.q2));
        }
        Ok((ok, parts.join("; ")))
    }

    fn c7_migration(&self) -> Check {
        let base = params(3.0, 3.0, 0.0, 1.0, 1.0, 1.0)?;
        let mut rows = Vec::new();
        for s2 in [1.0, 2.0, 4.0, 8.0] {
            rows.push(self.hybrid(&SweepParameter::Sigma2.apply(&base, s2))?);
        }
        let fractions: Vec<f64> = rows.iter().map(|r| r.mass1 / (r.mass1 + r.mass2)).collect();
        let monotone = fractions.windows(2).all(|w| w[1] >= w[0]);
        let last = rows.last().expect("four rows");
        let f1 = self.single(3.0, 0.0, 1.0)?;
        let e = rel(last.energy, f1.energy);
        let ok = rows.iter().all(|r| r.converged)
            && monotone
            && fractions[3] >= self.tol.migration_fraction
            && e <= self.tol.migration_energy;
        Ok((
            ok,
            format!(
                "mass1/μ {:.4} {:.4} {:.4} {:.4}; energy vs F1 at σ₂=8: {:.1}% (≤ {:.0}%)",
                fractions[0],
                fractions[1],
                fractions[2],
                fractions[3],
                100.0 * e,
                100.0 * self.tol.migration_energy
            ),
        ))
    }

    fn c8_dichotomy(&self) -> Check {
        let start = Instant::now();
        let (p1, p2) = (2.5, 3.5);
        let (r1, r2) = (self.rho(p1)?, self.rho(p2)?);
        let mu_star = self.critical_mass()?;
        let mut ok = true;
        let mut parts = vec![format!("μ*={mu_star:.6}")];
        for (factor, plane, p, rho) in [(0.5, 1usize, p1, r1), (2.0, 2usize, p2, r2)] {
            let mu = factor * mu_star;
            let r = self.hybrid(&params(p1, p2, 6.0, 6.0, 1.0, mu)?)?;
            let frac = if plane == 1 { r.mass1 } else { r.mass2 } / mu;
            let e = rel(r.energy, analysis::free_energy(p, rho, mu));
            ok &= r.converged && frac >= self.tol.dichotomy_fraction && e <= self.tol.dichotomy_energy;
            parts.push(format!("{factor}μ*: plane{plane} {frac:.4}, energy off {:.1}%", 100.0 * e));
        }
        let secs = start.elapsed().as_secs_f64();
        ok &= secs <= 600.0;
        Ok((ok, parts.join("; ")))
    }

    fn c9_mass_split(&self) -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x5eed);
        let n = 1000;
        let mut failures = 0;
        for _ in 0..50 {
            let (p1, p2) = (rng.random_range(2.01..3.99), rng.random_range(2.01..3.99));
            let (r1, r2) = (rng.random_range(1e-3..2.0), rng.random_range(1e-3..2.0));
            let mu = rng.random_range(0.05..50.0);
            let (_, m) = analysis::mass_split_infimum(p1, p2, mu, r1, r2, n);
            let cell = mu / n as f64;
            if !(m <= cell || m >= mu - cell) {
                failures += 1;
            }
        }
        Ok((failures == 0, format!("{failures} interior minimizers in 50 samples")))
    }

    fn c10_certificate(&self) -> Check {
        let tol = &self.tol;
        let mut reports: Vec<(String, Arc<GroundStateReport>)> = Vec::new();
        for p in self.hybrid_cases()? {
            reports.push((format!("{p:?}"), self.hybrid(&p)?));
        }
        for (p, s, mu) in Self::single_cases() {
            reports.push((format!("single p={p} σ={s}"), self.single(p, s, mu)?));
        }
        let mut worst_el: f64 = 0.0;
        for (label, r) in &reports {
            if !r.converged {
                continue;
            }
            worst_el = worst_el.max(r.el_residual);
            if r.el_residual > tol.el_residual {
                return Ok((false, format!("el_residual {:.2e} at {label}", r.el_residual)));
            }
            if let Some(b) = r.boundary_residuals {
                for (bi, qi) in b.iter().zip([r.q1, r.q2]) {
                    if bi.abs() > tol.boundary_residual * qi.max(1.0) {
                        return Ok((false, format!("boundary residual {bi:.2e} at {label}")));
                    }
                }
            }
        }
        // one refinement: twice the cells, square-rooted grading
        let fine = SolverConfig {
            intervals: 2 * self.cfg.intervals,
            grading: self.cfg.grading.sqrt(),
            ..self.cfg.clone()
        };
        let mut worst_ratio: f64 = 0.0;
        for p in [
            params(3.0, 3.0, 0.0, 0.0, 1.0, 1.0)?,
            params(3.0, 3.0, 0.0, 1.0, 1.0, 1.0)?,
            params(3.0, 3.0, 0.0, 1.0, 0.0, 1.0)?,
            params(2.5, 3.5, 6.0, 6.0, 1.0, 0.5 * self.critical_mass()?)?,
        ] {
            let coarse = self.hybrid(&p)?;
            let refined = solver::solve_hybrid(&p, &fine).map_err(|e| e.to_string())?;
            let ratio = refined.el_residual / coarse.el_residual;
            worst_ratio = worst_ratio.max(ratio);
            if ratio > 0.5 {
                return Ok((false, format!("el_residual ratio {ratio:.2} under refinement at {p:?}")));
            }
            let (bc, bf) = (coarse.boundary_residuals.unwrap_or([0.0; 2]), refined.boundary_residuals.unwrap_or([0.0; 2]));
            // below the solver's stopping tolerance relative to the matching
            // terms the residual is no longer discretization error
            let state = refined.state();
            for i in 0..2 {
                let u = state.plane(i);
                let scale = grid::eval_at_origin(&u.phi).abs()
                    + (p.sigma(i) + u.green().theta()).abs() * u.q()
                    + p.beta * state.plane(1 - i).q();
                let floor = fine.grad_tol * scale;
                if bf[i].abs() > floor && bf[i].abs() > 0.5 * bc[i].abs() {
                    return Ok((false, format!("boundary residual {:.2e} -> {:.2e} at {p:?}", bc[i], bf[i])));
                }
            }
        }
        Ok((
            true,
            format!("{} reports: max el {worst_el:.1e}; refinement el ratio ≤ {worst_ratio:.2}", reports.len()),
        ))
    }

    fn c11_gradient(&self) -> Check {
        let g = Arc::new(grid::make_grid(12.0, 512, 1.01).map_err(|e| e.to_string())?);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x9ad);
        let sets = [
            params(3.0, 3.0, 0.0, 0.5, 1.0, 1.0)?,
            params(2.5, 3.5, -0.5, 0.3, 0.4, 1.0)?,
            params(2.2, 3.9, 1.0, -1.0, 2.0, 1.0)?,
        ];
        let mut worst: f64 = 0.0;
        for set in &sets {
            for _ in 0..20 {
                let s = random_state(&mut rng, &g)?;
                let d = [random_field(&mut rng, &g).into_values(), random_field(&mut rng, &g).into_values()];
                let dq = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let eps = 1e-5;
                let fd = (energy::f_hybrid(&shifted(&s, &d, dq, eps)?, set) - energy::f_hybrid(&shifted(&s, &d, dq, -eps)?, set))
                    / (2.0 * eps);
                let an = energy::grad_f_hybrid(&s, set).directional(&d[0], dq[0], &d[1], dq[1]);
                worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
            }
        }
        Ok((worst <= self.tol.gradient, format!("worst relative error {worst:.1e} over 60 states")))
    }

    fn c12_action(&self) -> Check {
        let g = Arc::new(grid::make_grid(12.0, 512, 1.01).map_err(|e| e.to_string())?);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0xac7);
        let mut worst_id: f64 = 0.0;
        for _ in 0..50 {
            let s = random_state(&mut rng, &g)?;
            let p = params(rng.random_range(2.1..3.9), rng.random_range(2.1..3.9), 0.3, -0.2, 0.7, 1.0)?;
            let a = energy::action_functionals(&s, &p, rng.random_range(-2.0..5.0));
            let scale = a.s_omega.abs().max(a.i_omega.abs());
            for d in [a.s_omega - 0.5 * a.i_omega - a.s_tilde, a.s_omega - a.i_omega / p.p1 - a.a_omega, a.s_omega - a.i_omega / p.p2 - a.b_omega] {
                worst_id = worst_id.max(d.abs() / scale);
            }
        }
        let mut worst_nehari: f64 = 0.0;
        for p in self.hybrid_cases()? {
            let r = self.hybrid(&p)?;
            if !r.converged {
                continue;
            }
            let omega = solver::extract_omega(r.state(), &p).map_err(|e| e.to_string())?;
            let a = energy::action_functionals(r.state(), &p, omega);
            worst_nehari = worst_nehari.max(a.i_omega.abs() / a.s_omega.abs());
        }
        let ok = worst_id <= self.tol.action_identity && worst_nehari <= self.tol.nehari;
        Ok((ok, format!("identities {worst_id:.1e}; |I|/|S| at ground states {worst_nehari:.1e}")))
    }

    fn c13_spectrum(&self) -> Check {
        let mut worst: f64 = 0.0;
        for (s1, s2, b) in [(0.0, 0.0, 1.0), (0.0, 1.0, 0.5), (-1.0, 1.0, 2.0)] {
            let p = params(3.0, 3.0, s1, s2, b, 1.0)?;
            let ray = solver::omega_rayleigh(&p, &self.cfg).map_err(|e| e.to_string())?;
            let closed = solver::omega_star(&p).map_err(|e| e.to_string())?;
            if !ray.converged {
                return Ok((false, format!("Rayleigh minimization did not converge for ({s1}, {s2}, {b})")));
            }
            worst = worst.max(rel(ray.omega, closed));
        }
        let mut above = 0;
        for p in self.hybrid_cases()? {
            let r = self.hybrid(&p)?;
            let w = r.omega_star.ok_or("missing omega_star")?;
            if !(r.omega > w) {
                return Ok((false, format!("omega {} ≤ omega* {w} at {p:?}", r.omega)));
            }
            above += 1;
        }
        Ok((worst <= self.tol.rayleigh, format!("Rayleigh vs closed form {worst:.1e}; ω > ω* in {above} ground states")))
    }

    fn c14_closed_form(&self) -> Check {
        let tol = &self.tol;
        let mut trip: f64 = 0.0;
        let mut asym: f64 = 0.0;
        for i in 0..=48 {
            let lambda = 10f64.powf(-6.0 + 0.25 * i as f64);
            let t = specfun::theta(lambda).map_err(|e| e.to_string())?;
            trip = trip.max(rel(specfun::lambda_for_theta(t).map_err(|e| e.to_string())?, lambda));
            // 𝒢_λ(r) = −log(r)/(2π) − θ_λ + O(λr² log r)
            let r = 1e-7 / lambda.sqrt();
            let g = specfun::green_value(lambda, r).map_err(|e| e.to_string())?;
            asym = asym.max((-g - r.ln() / (2.0 * PI) - t).abs() / t.abs().max(1.0));
        }
        let mut norm: f64 = 0.0;
        for lambda in [0.25, 1.0, 4.0] {
            let g = grid::make_grid(40.0 / f64::sqrt(lambda), 4096, 1.01).map_err(|e| e.to_string())?;
            let q = green_norm_quadrature(&g, lambda)?;
            norm = norm.max(rel(q, specfun::green_l2_norm_sq(lambda).map_err(|e| e.to_string())?)).max(rel(q, 1.0 / (4.0 * PI * lambda)));
        }
        let mut bessel: f64 = 0.0;
        for x in [1e-3, 0.01, 0.1, 0.5, 1.0, 1.9, 2.1, 5.0, 10.0, 30.0, 100.0, 500.0] {
            let (k0, k1) = specfun::bessel_k01(x).map_err(|e| e.to_string())?;
            let (o0, o1) = bessel_integral(x);
            bessel = bessel.max(rel(k0, o0)).max(rel(k1, o1));
        }
        let ok = trip <= tol.theta_round_trip && asym <= tol.bessel && norm <= tol.green_norm && bessel <= tol.bessel;
        Ok((ok, format!("θ round trip {trip:.1e}, θ vs Green expansion {asym:.1e}, ‖𝒢‖² {norm:.1e}, Bessel {bessel:.1e}")))
    }
}

/// Relative distance in the dual-cell L² norm.
fn dual_distance(a: &RadialField, b: &RadialField) -> f64 {
    let w = b.grid().control_volumes();
    let (mut num, mut den) = (0.0, 0.0);
    for ((x, y), w) in a.values().iter().zip(b.values()).zip(w) {
        num += w * (x - y) * (x - y);
        den += w * y * y;
    }
    (num / den).sqrt()
}

fn random_field(rng: &mut ChaCha8Rng, g: &Arc<RadialGrid>) -> RadialField {
    let (a, b, c) = (rng.random_range(-1.0..1.5), rng.random_range(0.3..2.0), rng.random_range(-0.5..0.5));
    RadialField::from_fn(g.clone(), |r| a * (-(r * r) / (b * b)).exp() * (1.0 + c * r))
}

fn random_state(rng: &mut ChaCha8Rng, g: &Arc<RadialGrid>) -> Result<HybridState, String> {
    let plane = |rng: &mut ChaCha8Rng| {
        ChargedField::new(random_field(rng, g), rng.random_range(0.1..1.0), rng.random_range(0.5..3.0)).map_err(|e| e.to_string())
    };
    let u1 = plane(rng)?;
    let u2 = plane(rng)?;
    HybridState::new(u1, u2).map_err(|e| e.to_string())
}

fn shifted(s: &HybridState, d: &[Vec<f64>; 2], dq: [f64; 2], eps: f64) -> Result<HybridState, String> {
    let mv = |u: &ChargedField, d: &[f64], dq: f64| -> Result<ChargedField, String> {
        let vals: Vec<f64> = u.phi.values().iter().zip(d).map(|(a, b)| a + eps * b).collect();
        let phi = RadialField::new(u.grid().clone(), vals).map_err(|e| e.to_string())?;
        ChargedField::with_green(phi, u.q() + eps * dq, u.green().clone()).map_err(|e| e.to_string())
    };
    HybridState::new(mv(&s.u1, &d[0], dq[0])?, mv(&s.u2, &d[1], dq[1])?).map_err(|e| e.to_string())
}

/// `2π∫𝒢_λ² r dr`: the log-adapted rule on the first cell, 4-point
/// Gauss–Legendre on every other cell.
fn green_norm_quadrature(g: &RadialGrid, lambda: f64) -> Result<f64, String> {
    const X: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
    const W: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
    let green = |r: f64| specfun::green_value(lambda, r).map_err(|e| e.to_string());
    let mut sum = 0.0;
    for pt in g.first_cell_rule() {
        let v = green(pt.r)?;
        sum += pt.weight * v * v;
    }
    let r = g.nodes();
    for k in 1..g.intervals() {
        let (a, b) = (r[k], r[k + 1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in X.iter().zip(W) {
            let s = mid + half * x;
            let v = green(s)?;
            sum += 2.0 * PI * half * w * s * v * v;
        }
    }
    Ok(sum)
}

/// `K₀(x) = ∫₀^∞ e^{−x cosh t} dt`, `K₁(x) = ∫₀^∞ e^{−x cosh t} cosh t dt`
/// by the trapezoid rule, which converges geometrically for these
/// integrands. Scaled by `eˣ` internally to stay in range.
fn bessel_integral(x: f64) -> (f64, f64) {
    let h = 0.01;
    let (mut s0, mut s1) = (0.5, 0.5);
    let mut k = 1;
    loop {
        let c = (k as f64 * h).cosh();
        let e = (-x * (c - 1.0)).exp();
        s0 += e;
        s1 += e * c;
        if e * c < 1e-18 * s1 {
            break;
        }
        k += 1;
    }
    let scale = (-x).exp() * h;
    (s0 * scale, s1 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_oracle_reproduces_known_values() {
        // K₀(1), K₁(1) to 16 digits
        let (k0, k1) = bessel_integral(1.0);
        assert!(rel(k0, 0.421_024_438_240_708_3) < 1e-13);
        assert!(rel(k1, 0.601_907_230_197_234_6) < 1e-13);
    }

    #[test]
    fn loosened_tolerances_are_listed() {
        assert!(Tolerances::for_profile(Profile::Full).loosened().is_empty());
        assert_eq!(Tolerances::for_profile(Profile::Fast).loosened().len(), 5);
    }

    #[test]
    fn unknown_criterion_fails() {
        let s = Suite::new(Profile::Fast, Execution::Sequential);
        assert!(!s.run(15).passed);
    }
}
