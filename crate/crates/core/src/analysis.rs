//! Derived quantities built on the solver: free-plane constants `ρ_p`, the
//! critical mass, the decoupled mass-split problem, parameter sweeps, and
//! radial rearrangement utilities.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::HybridParams;
use crate::exec::Execution;
use crate::grid::{GridError, RadialField};
use crate::solver::{self, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{what} did not converge (pg_norm {pg_norm:.3e})")]
    NotConverged { what: String, pg_norm: f64 },
    #[error("{0}")]
    Domain(String),
}

/// `𝓔_p(μ) = −ρ μ^{2/(4−p)}`, the free-plane ground level.
pub fn free_energy(p: f64, rho: f64, mu: f64) -> f64 {
    -rho * mu.powf(2.0 / (4.0 - p))
}

fn rho_cache() -> &'static Mutex<HashMap<String, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cache_key(p: f64, cfg: &SolverConfig) -> String {
    format!(
        "{:x}|{:?}|{:x}|{}|{:x}|{:x}|{:x}|{}|{}",
        p.to_bits(),
        cfg.radius.map(f64::to_bits),
        cfg.radius_factor.to_bits(),
        cfg.intervals,
        cfg.grading.to_bits(),
        cfg.grad_tol.to_bits(),
        cfg.energy_tol.to_bits(),
        cfg.max_iters,
        cfg.seed
    )
}

/// `ρ_p = −𝓔_p(1)`. Cached per `(p, discretization)`.
pub fn rho(p: f64, cfg: &SolverConfig) -> Result<f64, AnalysisError> {
    let key = cache_key(p, cfg);
    if let Some(&v) = rho_cache().lock().expect("rho cache poisoned").get(&key) {
        return Ok(v);
    }
    let report = solver::solve_planar(p, 1.0, cfg)?;
    if !report.converged {
        return Err(AnalysisError::NotConverged { what: format!("planar solve at p = {p}"), pg_norm: report.pg_norm });
    }
    let value = -report.energy;
    rho_cache().lock().expect("rho cache poisoned").insert(key, value);
    Ok(value)
}

/// Mass at which `𝓔_{p1}` and `𝓔_{p2}` cross, from known `ρ` values.
pub fn critical_mass_from(p1: f64, p2: f64, rho1: f64, rho2: f64) -> Result<f64, AnalysisError> {
    if p1 == p2 {
        return Err(AnalysisError::Domain("critical mass needs p1 != p2".into()));
    }
    let exponent = (4.0 - p1) * (4.0 - p2) / (2.0 * (p2 - p1));
    Ok((rho1 / rho2).powf(exponent))
}

pub fn critical_mass(p1: f64, p2: f64, cfg: &SolverConfig) -> Result<f64, AnalysisError> {
    if p1 == p2 {
        return Err(AnalysisError::Domain("critical mass needs p1 != p2".into()));
    }
    critical_mass_from(p1, p2, rho(p1, cfg)?, rho(p2, cfg)?)
}

/// Relative mismatch `|𝓔_{p1}(μ) − 𝓔_{p2}(μ)| / |𝓔_{p1}(μ)|`; zero at `μ*`.
pub fn crossing_residual(p1: f64, p2: f64, rho1: f64, rho2: f64, mu: f64) -> f64 {
    let (e1, e2) = (free_energy(p1, rho1, mu), free_energy(p2, rho2, mu));
    ((e1 - e2) / e1).abs()
}

/// Brute-force minimum of `g(m) = −ρ₁m^{2/(4−p₁)} − ρ₂(μ−m)^{2/(4−p₂)}`
/// over `n_grid + 1` uniform points of `[0, μ]` (at least 1000 cells).
/// Returns `(min g, argmin m)`; ties go to the smaller `m`.
pub fn mass_split_infimum(p1: f64, p2: f64, mu: f64, rho1: f64, rho2: f64, n_grid: usize) -> (f64, f64) {
    let n = n_grid.max(1000);
    let g = |m: f64| free_energy(p1, rho1, m) + free_energy(p2, rho2, (mu - m).max(0.0));
    let mut best = (g(0.0), 0.0);
    for k in 1..=n {
        let m = if k == n { mu } else { mu * k as f64 / n as f64 };
        let v = g(m);
        if v < best.0 {
            best = (v, m);
        }
    }
    best
}

/// Log-log least-squares fit `|E(μ)| ≈ c μ^a` of planar ground levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub p: f64,
    pub masses: Vec<f64>,
    pub energies: Vec<f64>,
    pub exponent: f64,
    pub prefactor: f64,
    /// `2/(4−p)`
    pub predicted: f64,
}

pub fn scaling_fit(p: f64, masses: &[f64], cfg: &SolverConfig) -> Result<ScalingFit, AnalysisError> {
    if masses.len() < 2 {
        return Err(AnalysisError::Domain("scaling fit needs at least two masses".into()));
    }
    let jobs: Vec<f64> = masses.to_vec();
    let reports = cfg.execution.map(jobs, |mu| solver::solve_planar(p, mu, &inner_config(cfg)));
    let mut energies = Vec::with_capacity(masses.len());
    for r in reports {
        let r = r?;
        if !r.converged {
            return Err(AnalysisError::NotConverged { what: format!("planar solve at mu = {}", r.problem.mu), pg_norm: r.pg_norm });
        }
        energies.push(r.energy);
    }
    let xs: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = energies.iter().map(|e| (-e).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let exponent = sxy / sxx;
    Ok(ScalingFit {
        p,
        masses: masses.to_vec(),
        energies,
        exponent,
        prefactor: (my - exponent * mx).exp(),
        predicted: 2.0 / (4.0 - p),
    })
}

/// Rows of a sweep run concurrently; keep each row's own multi-start
/// sequential so pools do not nest.
fn inner_config(cfg: &SolverConfig) -> SolverConfig {
    let mut inner = cfg.clone();
    if cfg.execution != Execution::Sequential {
        inner.execution = Execution::Sequential;
    }
    inner
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Sigma2,
    SigmaCommon,
    Beta,
    Mu,
}

impl SweepParameter {
    pub fn apply(self, base: &HybridParams, value: f64) -> HybridParams {
        let mut p = *base;
        match self {
            SweepParameter::Sigma2 => p.sigma2 = value,
            SweepParameter::SigmaCommon => {
                p.sigma1 = value;
                p.sigma2 = value;
            }
            SweepParameter::Beta => p.beta = value,
            SweepParameter::Mu => p.mu = value,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub energy: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub q1: f64,
    pub q2: f64,
    pub omega: f64,
    pub converged: bool,
    pub el_residual: f64,
    /// Set when the row could not be solved at all; numbers are then NaN.
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(value: f64, error: String) -> Self {
        let nan = f64::NAN;
        Self {
            value,
            energy: nan,
            mass1: nan,
            mass2: nan,
            q1: nan,
            q2: nan,
            omega: nan,
            converged: false,
            el_residual: nan,
            error: Some(error),
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass1 + self.mass2
    }

    /// Share of the mass on plane `i ∈ {1, 2}`.
    pub fn fraction(&self, plane: usize) -> f64 {
        let m = if plane == 1 { self.mass1 } else { self.mass2 };
        m / self.mass()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub base: HybridParams,
    /// Sorted by `value`.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn converged_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.converged)
    }

    /// Mass share of plane 1 never decreases along the converged rows.
    pub fn fraction1_nondecreasing(&self, slack: f64) -> bool {
        let f: Vec<f64> = self.converged_rows().map(|r| r.fraction(1)).collect();
        f.windows(2).all(|w| w[1] >= w[0] - slack)
    }

    pub fn charges_ordered(&self) -> bool {
        self.converged_rows().all(|r| r.q2 < r.q1)
    }

    pub fn charges_decreasing(&self) -> bool {
        let rows: Vec<&SweepRow> = self.converged_rows().collect();
        rows.windows(2).all(|w| w[1].q1 <= w[0].q1 && w[1].q2 <= w[0].q2)
    }

    pub fn energy_nondecreasing(&self, slack: f64) -> bool {
        let e: Vec<f64> = self.converged_rows().map(|r| r.energy).collect();
        e.windows(2).all(|w| w[1] >= w[0] - slack * w[0].abs())
    }

    pub fn last(&self) -> Option<&SweepRow> {
        self.rows.last()
    }

    /// Plane holding at least `threshold` of the mass in the last row.
    pub fn concentration(&self, threshold: f64) -> Option<usize> {
        let r = self.last()?;
        if !r.converged {
            return None;
        }
        [1, 2].into_iter().find(|&i| r.fraction(i) >= threshold)
    }
}

/// One `solve_hybrid` per value; failing rows are recorded, not fatal.
pub fn sweep(
    base: &HybridParams,
    parameter: SweepParameter,
    values: &[f64],
    cfg: &SolverConfig,
) -> Result<SweepTable, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Domain("sweep needs at least one value".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::Domain("sweep values must be finite".into()));
    }
    cfg.validate()?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let inner = inner_config(cfg);
    let rows = cfg.execution.map(sorted, |value| {
        let params = parameter.apply(base, value);
        match params.validate().map_err(SolverError::from).and_then(|_| solver::solve_hybrid(&params, &inner)) {
            Ok(r) => SweepRow {
                value,
                energy: r.energy,
                mass1: r.mass1,
                mass2: r.mass2,
                q1: r.q1,
                q2: r.q2,
                omega: r.omega,
                converged: r.converged,
                el_residual: r.el_residual,
                error: None,
            },
            Err(e) => SweepRow::failed(value, e.to_string()),
        }
    });
    Ok(SweepTable { parameter, base: *base, rows })
}

/// Strength sweep of the second point interaction at equal powers.
pub fn sweep_sigma2(params: &HybridParams, sigma2_values: &[f64], cfg: &SolverConfig) -> Result<SweepTable, AnalysisError> {
    params.validate().map_err(SolverError::from)?;
    if params.p1 != params.p2 {
        return Err(AnalysisError::Domain("sigma2 sweep needs p1 == p2".into()));
    }
    let min = sigma2_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(params.sigma1 < min) {
        return Err(AnalysisError::Domain(format!("sigma2 sweep needs sigma1 < every sigma2 (sigma1 = {})", params.sigma1)));
    }
    sweep(params, SweepParameter::Sigma2, sigma2_values, cfg)
}

/// Sweep of a common strength `σ₁ = σ₂ = σ`.
pub fn sweep_common_sigma(
    p1: f64,
    p2: f64,
    beta: f64,
    mu: f64,
    sigma_values: &[f64],
    cfg: &SolverConfig,
) -> Result<SweepTable, AnalysisError> {
    if !(p1 < p2) {
        return Err(AnalysisError::Domain("common-sigma sweep needs p1 < p2".into()));
    }
    let sigma0 = sigma_values.first().copied().unwrap_or(0.0);
    let base = HybridParams::new(p1, p2, sigma0, sigma0, beta, mu).map_err(SolverError::from)?;
    sweep(&base, SweepParameter::SigmaCommon, sigma_values, cfg)
}

/// Counts adjacent pairs with `f(r_{k+1}) > f(r_k) + 1e-12·|f(r_k)|`.
pub fn monotone_radial_check(f: &RadialField) -> (bool, usize) {
    let v = f.values();
    let violations = v.windows(2).filter(|w| w[1] > w[0] + 1e-12 * w[0].abs()).count();
    (violations == 0, violations)
}

/// Discrete symmetric decreasing rearrangement.
///
/// Each node owns its dual cell. The values are sorted decreasingly and laid
/// out from the origin as annuli of the same areas (layer cake); every node
/// then takes the root mean square of that step function over its own dual
/// cell, which keeps `Σ w_k f_k²` exact.
pub fn rearrange_decreasing(f: &RadialField) -> Result<RadialField, AnalysisError> {
    let v = f.values();
    if let Some(k) = v.iter().position(|&x| x < 0.0) {
        return Err(AnalysisError::Domain(format!("rearrangement needs f >= 0 (node {k} is {})", v[k])));
    }
    let w = f.grid().control_volumes();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));

    let mut out = vec![0.0; v.len()];
    let mut j = 0; // current annulus in sorted order
    let mut used = 0.0; // area of annulus j already assigned
    for (k, &area) in w.iter().enumerate() {
        let mut need = area;
        let mut acc = 0.0;
        while need > 0.0 && j < order.len() {
            let left = w[order[j]] - used;
            let take = left.min(need);
            let value = v[order[j]];
            acc += take * value * value;
            need -= take;
            used += take;
            if used >= w[order[j]] {
                j += 1;
                used = 0.0;
            }
        }
        out[k] = if area > 0.0 { (acc / area).sqrt() } else { v[order[j.min(order.len() - 1)]] };
    }
    Ok(RadialField::new(f.grid().clone(), out)?)
}
