use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::anyhow;
use hybrid_nls::acceptance::{CriterionResult, Profile, Suite, Tolerances};
use hybrid_nls::analysis::{self, AnalysisError, ScalingFit, SweepParameter, SweepTable};
use hybrid_nls::energy::HybridParams;
use hybrid_nls::exec::Execution;
use hybrid_nls::solver::{self, GroundStateReport, SolverConfig, SolverError};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{self, num, Axes, Csv, Series, SCHEMA_VERSION};

/// Exit status 1 vs 2.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Numeric(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Numeric(e) => e,
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(_) | SolverError::Params(_) => Failure::Usage(e.into()),
            _ => Failure::Numeric(e.into()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Solver(s) => s.into(),
            AnalysisError::Domain(_) => Failure::Usage(e.into()),
            other => Failure::Numeric(other.into()),
        }
    }
}

fn io(e: anyhow::Error) -> Failure {
    Failure::Usage(e)
}

/// `Ok(true)` = success, `Ok(false)` = results written but numerically
/// incomplete (exit 1).
pub type Outcome = Result<bool, Failure>;

fn check_params(p: &HybridParams) -> Result<(), Failure> {
    p.validate().map_err(|e| Failure::Usage(e.into()))
}

fn check_power(p: f64) -> Result<(), Failure> {
    if p > 2.0 && p < 4.0 {
        Ok(())
    } else {
        Err(Failure::Usage(anyhow!("p = {p} is outside the L2-subcritical range (2, 4)")))
    }
}

fn report_line(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

#[derive(Serialize)]
struct SolveDoc<'a> {
    schema_version: u32,
    command: &'static str,
    params: &'a HybridParams,
    solver: &'a SolverConfig,
    report: &'a GroundStateReport,
}

pub fn solve(run: &RunConfig) -> Outcome {
    check_params(&run.params)?;
    let report = solver::solve_hybrid(&run.params, &run.solver)?;
    let mut written = Vec::new();
    if run.formats.json {
        let doc = SolveDoc { schema_version: SCHEMA_VERSION, command: "solve", params: &run.params, solver: &run.solver, report: &report };
        written.push(output::write_json(&run.out, "report.json", &doc).map_err(io)?);
    }
    if run.formats.csv {
        let mut csv = Csv::new(&["r", "u1", "u2", "phi1", "phi2"]);
        for s in &report.profile_samples {
            csv.row(&[num(s.r), num(s.u1), num(s.u2), num(s.phi1), num(s.phi2)]);
        }
        written.push(output::write(&run.out, "profiles.csv", &csv.finish()).map_err(io)?);
    }
    if run.formats.svg {
        let pick = |f: fn(&solver::ProfileSample) -> f64| report.profile_samples.iter().map(|s| (s.r, f(s))).collect();
        let series = [
            Series { name: "u1".into(), points: pick(|s| s.u1) },
            Series { name: "u2".into(), points: pick(|s| s.u2) },
            Series { name: "phi1".into(), points: pick(|s| s.phi1) },
            Series { name: "phi2".into(), points: pick(|s| s.phi2) },
        ];
        let axes = Axes { title: "radial profiles", x_label: "r", y_label: "value", log_x: true, log_y: false };
        written.push(output::write(&run.out, "profiles.svg", &output::svg_plot(axes, &series)).map_err(io)?);
    }
    println!(
        "energy {:.12e}  mass1 {:.6e}  mass2 {:.6e}  q1 {:.6e}  q2 {:.6e}  omega {:.6e}",
        report.energy, report.mass1, report.mass2, report.q1, report.q2, report.omega
    );
    let mass = report.mass1 + report.mass2;
    if (report.mass1 - report.mass2).abs() <= 1e-9 * mass {
        println!("mass shared equally between the planes");
    } else {
        println!("mass concentrated on plane {}", report.dominant_plane);
    }
    println!("{} iterations; el_residual {:.2e}", report.iterations, report.el_residual);
    if let Some(alt) = &report.alternate_branch {
        println!("equal-energy branch on plane {} (energy {:.12e}) also found", alt.dominant_plane, alt.energy);
    }
    report_line(&written);
    if !report.converged {
        eprintln!("error: solver did not converge (pg_norm {:.2e}); partial report written", report.pg_norm);
    }
    Ok(report.converged)
}

#[derive(Serialize)]
struct Limit {
    reference: &'static str,
    reference_energy: f64,
    last_energy: f64,
    relative_gap: f64,
}

#[derive(Serialize)]
struct Verdicts {
    mass1_fraction_nondecreasing: bool,
    charges_ordered: bool,
    charges_decreasing: bool,
    energy_nondecreasing: bool,
    concentration: Option<String>,
    limit: Option<Limit>,
}

#[derive(Serialize)]
struct FailedRow {
    value: f64,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    schema_version: u32,
    command: &'static str,
    mode: SweepParameter,
    base: &'a HybridParams,
    mu_relative: Option<f64>,
    mu_star: Option<f64>,
    solver: &'a SolverConfig,
    rows: usize,
    converged_rows: usize,
    failed_rows: Vec<FailedRow>,
    verdicts: Verdicts,
}

const CONCENTRATION: f64 = 0.95;

pub fn sweep(run: &RunConfig) -> Outcome {
    let mode = run.mode.ok_or_else(|| Failure::Usage(anyhow!("sweep needs --mode (sigma2, sigma_common, beta, mu)")))?;
    let values = run.values.as_deref().ok_or_else(|| Failure::Usage(anyhow!("sweep needs --values")))?;
    if values.is_empty() {
        return Err(Failure::Usage(anyhow!("--values is empty")));
    }
    let mut base = run.params;
    let mut mu_star = None;
    if let Some(rel) = run.mu_relative {
        if !(rel > 0.0 && rel.is_finite()) {
            return Err(Failure::Usage(anyhow!("--mu-relative must be positive")));
        }
        if run.params.p1 == run.params.p2 {
            return Err(Failure::Usage(anyhow!("--mu-relative needs p1 != p2 (the critical mass is undefined otherwise)")));
        }
        check_params(&run.params)?;
        let m = analysis::critical_mass(run.params.p1, run.params.p2, &run.solver)?;
        mu_star = Some(m);
        base.mu = rel * m;
    }
    check_params(&base)?;
    let cfg = SolverConfig { execution: Execution::with_jobs(run.jobs), ..run.solver.clone() };
    let table = match mode {
        SweepParameter::Sigma2 => analysis::sweep_sigma2(&base, values, &cfg)?,
        SweepParameter::SigmaCommon => analysis::sweep_common_sigma(base.p1, base.p2, base.beta, base.mu, values, &cfg)?,
        other => analysis::sweep(&base, other, values, &cfg)?,
    };
    let verdicts = verdicts(&table, run)?;
    let mut written = Vec::new();
    if run.formats.csv {
        let mut csv = Csv::new(&["value", "energy", "mass1", "mass2", "q1", "q2", "omega", "converged", "el_residual", "error"]);
        for r in &table.rows {
            csv.row(&[
                num(r.value),
                num(r.energy),
                num(r.mass1),
                num(r.mass2),
                num(r.q1),
                num(r.q2),
                num(r.omega),
                r.converged.to_string(),
                num(r.el_residual),
                r.error.clone().unwrap_or_default(),
            ]);
        }
        written.push(output::write(&run.out, "sweep.csv", &csv.finish()).map_err(io)?);
    }
    let converged = table.converged_rows().count();
    if run.formats.json {
        let doc = SweepDoc {
            schema_version: SCHEMA_VERSION,
            command: "sweep",
            mode,
            base: &table.base,
            mu_relative: run.mu_relative,
            mu_star,
            solver: &run.solver,
            rows: table.rows.len(),
            converged_rows: converged,
            failed_rows: table.rows.iter().filter(|r| !r.converged).map(|r| FailedRow { value: r.value, error: r.error.clone() }).collect(),
            verdicts,
        };
        written.push(output::write_json(&run.out, "summary.json", &doc).map_err(io)?);
    }
    if run.formats.svg {
        let log_x = table.rows.iter().all(|r| r.value > 0.0);
        let pts = |plane| table.converged_rows().map(|r| (r.value, r.fraction(plane))).collect();
        let series = [Series { name: "plane 1".into(), points: pts(1) }, Series { name: "plane 2".into(), points: pts(2) }];
        let axes = Axes { title: "mass share per plane", x_label: "sweep value", y_label: "mass fraction", log_x, log_y: false };
        written.push(output::write(&run.out, "sweep.svg", &output::svg_plot(axes, &series)).map_err(io)?);
    }
    for r in &table.rows {
        match &r.error {
            Some(e) => println!("{:>12}  error: {e}", r.value),
            None => println!(
                "{:>12}  energy {:.10e}  mass1 {:.6}  mass2 {:.6}  {}",
                r.value,
                r.energy,
                r.mass1 / r.mass(),
                r.mass2 / r.mass(),
                if r.converged { "converged" } else { "NOT converged" }
            ),
        }
    }
    report_line(&written);
    let all = converged == table.rows.len();
    if !all {
        eprintln!("error: {} of {} rows failed or did not converge", table.rows.len() - converged, table.rows.len());
    }
    Ok(all)
}

fn verdicts(table: &SweepTable, run: &RunConfig) -> Result<Verdicts, Failure> {
    let concentration = table.concentration(CONCENTRATION);
    let last = table.last().filter(|r| r.converged);
    let limit = match (table.parameter, last) {
        (SweepParameter::Sigma2, Some(last)) => {
            let f = solver::solve_single(table.base.p1, table.base.sigma1, table.base.mu, &run.solver)?;
            Some(Limit {
                reference: "single_plane1",
                reference_energy: f.energy,
                last_energy: last.energy,
                relative_gap: ((last.energy - f.energy) / f.energy).abs(),
            })
        }
        (SweepParameter::SigmaCommon, Some(last)) => match concentration {
            Some(plane) => {
                let p = table.base.p(plane - 1);
                let e = analysis::free_energy(p, analysis::rho(p, &run.solver)?, table.base.mu);
                Some(Limit {
                    reference: if plane == 1 { "planar_plane1" } else { "planar_plane2" },
                    reference_energy: e,
                    last_energy: last.energy,
                    relative_gap: ((last.energy - e) / e).abs(),
                })
            }
            None => None,
        },
        _ => None,
    };
    Ok(Verdicts {
        mass1_fraction_nondecreasing: table.fraction1_nondecreasing(0.0),
        charges_ordered: table.charges_ordered(),
        charges_decreasing: table.charges_decreasing(),
        energy_nondecreasing: table.energy_nondecreasing(0.0),
        concentration: concentration.map(|p| format!("plane{p}")),
        limit,
    })
}

#[derive(Serialize)]
struct MuStar {
    p1: f64,
    p2: f64,
    mu_star: f64,
    crossing_residual: f64,
    relative_residual: f64,
    root_check_passed: bool,
}

#[derive(Serialize)]
struct Fit {
    #[serde(flatten)]
    fit: ScalingFit,
    relative_error: f64,
    within_2_percent: bool,
}

#[derive(Serialize)]
struct BaselineDoc<'a> {
    schema_version: u32,
    command: &'static str,
    solver: &'a SolverConfig,
    rho: BTreeMap<String, f64>,
    mu_star: BTreeMap<String, MuStar>,
    scaling: BTreeMap<String, Fit>,
}

const SCALING_MASSES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

pub fn baseline(run: &RunConfig) -> Outcome {
    let powers = run.powers.clone().unwrap_or_else(|| vec![2.5, 3.0, 3.5]);
    if powers.is_empty() && run.pairs.is_empty() {
        return Err(Failure::Usage(anyhow!("--p is empty")));
    }
    for &p in &powers {
        check_power(p)?;
    }
    for &(a, b) in &run.pairs {
        check_power(a)?;
        check_power(b)?;
        if a == b {
            return Err(Failure::Usage(anyhow!("--mustar {a}:{b}: the powers must differ")));
        }
    }
    let cfg = &run.solver;
    let mut rho = BTreeMap::new();
    let mut scaling = BTreeMap::new();
    for &p in &powers {
        let r = analysis::rho(p, cfg)?;
        let fit = analysis::scaling_fit(p, &SCALING_MASSES, cfg)?;
        let rel = ((fit.exponent - fit.predicted) / fit.predicted).abs();
        println!("p = {p}: rho {r:.10e}; fitted exponent {:.6} (predicted {:.6})", fit.exponent, fit.predicted);
        rho.insert(p.to_string(), r);
        scaling.insert(p.to_string(), Fit { fit, relative_error: rel, within_2_percent: rel <= 0.02 });
    }
    let mut mu_star = BTreeMap::new();
    for &(p1, p2) in &run.pairs {
        let (r1, r2) = (analysis::rho(p1, cfg)?, analysis::rho(p2, cfg)?);
        let m = analysis::critical_mass_from(p1, p2, r1, r2)?;
        let res = analysis::crossing_residual(p1, p2, r1, r2, m);
        let rel = (res / analysis::free_energy(p1, r1, m)).abs();
        println!("mu*({p1}, {p2}) = {m:.10e}; crossing residual {rel:.1e}");
        mu_star.insert(format!("{p1}:{p2}"), MuStar { p1, p2, mu_star: m, crossing_residual: res, relative_residual: rel, root_check_passed: rel <= 1e-6 });
    }
    let doc = BaselineDoc { schema_version: SCHEMA_VERSION, command: "baseline", solver: cfg, rho, mu_star, scaling };
    let mut written = Vec::new();
    if run.formats.json {
        written.push(output::write_json(&run.out, "baseline.json", &doc).map_err(io)?);
    }
    if run.formats.csv {
        let mut csv = Csv::new(&["p", "rho", "exponent", "predicted_exponent"]);
        for (k, f) in &doc.scaling {
            csv.row(&[num(f.fit.p), num(doc.rho[k]), num(f.fit.exponent), num(f.fit.predicted)]);
        }
        written.push(output::write(&run.out, "baseline.csv", &csv.finish()).map_err(io)?);
    }
    if run.formats.svg {
        let series: Vec<Series> = doc
            .scaling
            .values()
            .map(|f| Series { name: format!("p = {}", f.fit.p), points: f.fit.masses.iter().zip(&f.fit.energies).map(|(&m, &e)| (m, -e)).collect() })
            .collect();
        let axes = Axes { title: "planar ground level", x_label: "mass", y_label: "-energy", log_x: true, log_y: true };
        written.push(output::write(&run.out, "scaling.svg", &output::svg_plot(axes, &series)).map_err(io)?);
    }
    report_line(&written);
    Ok(true)
}

#[derive(Serialize)]
struct VerifyDoc<'a> {
    schema_version: u32,
    command: &'static str,
    profile: Profile,
    tolerances: &'a Tolerances,
    passed: bool,
    failed: Vec<u8>,
    criteria: &'a [CriterionResult],
}

pub fn verify(run: &RunConfig) -> Outcome {
    let suite = Suite::new(run.profile, Execution::Sequential);
    println!(
        "profile {:?}: N = {}, grading {}",
        run.profile, suite.cfg.intervals, suite.cfg.grading
    );
    for (name, full, here) in suite.tol.loosened() {
        println!("loosened tolerance {name}: {here:e} (full profile {full:e})");
    }
    let results = suite.run_all(|r| println!("{r}"));
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let mut written = Vec::new();
    if run.formats.json {
        let doc = VerifyDoc {
            schema_version: SCHEMA_VERSION,
            command: "verify",
            profile: run.profile,
            tolerances: &suite.tol,
            passed: failed.is_empty(),
            failed: failed.clone(),
            criteria: &results,
        };
        written.push(output::write_json(&run.out, "verify.json", &doc).map_err(io)?);
    }
    report_line(&written);
    if failed.is_empty() {
        println!("all 14 criteria passed");
        Ok(true)
    } else {
        let list: Vec<String> = failed.iter().map(|id| id.to_string()).collect();
        eprintln!("failed criteria: {}", list.join(", "));
        Ok(false)
    }
}
