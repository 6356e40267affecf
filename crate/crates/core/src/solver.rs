//! Mass-constrained minimizers.
//!
//! All three problems (planar NLS, one plane with a point interaction, the
//! coupled hybrid) run through one engine: preconditioned projected gradient
//! descent on the mass sphere with Barzilai–Borwein step proposals and
//! monotone Armijo backtracking. The preconditioner is `(K + λM)⁻¹` on each
//! regular part (tridiagonal) and the inverse charge matrix on the charges.
//!
//! Ground states concentrate on the scale `1/√ω`, which can be tiny (ω
//! grows exponentially in the coupling). The solve therefore runs in
//! stages: after each stage the decomposition parameter is moved to the
//! current multiplier, `λ ← ω`, and the grid radius is rescaled to
//! `radius_factor/√ω`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{self, ChargedField, EnergyError, GreenTable, HybridParams, HybridState, PlaneGradient};
use crate::exec::Execution;
use crate::grid::{self, GridError, RadialField, RadialGrid};
use crate::specfun::{self, SpecfunError};

pub const DEFAULT_RADIUS_FACTOR: f64 = 40.0;
const ARMIJO_C1: f64 = 1e-4;
const MAX_STAGES: usize = 16;
/// Tolerance of the intermediate stages.
const STAGE_TOL: f64 = 1e-3;
/// A stage is final once `|ω/λ − 1|` drops below this.
const LAMBDA_MATCH: f64 = 1e-2;
const STALL_WINDOW: usize = 500;
/// Iteration cap of an intermediate stage: far from the final scale the
/// preconditioner is poor, and re-centering λ beats grinding on.
const STAGE_ITERS: usize = 400;
const PROFILE_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] EnergyError),
    #[error("{0}")]
    Domain(&'static str),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fixed truncation radius. `None` ties it to the state:
    /// `radius_factor / √ω`.
    pub radius: Option<f64>,
    pub radius_factor: f64,
    pub intervals: usize,
    pub grading: f64,
    /// First trial step of each stage (in preconditioned units).
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub energy_tol: f64,
    /// Share of the mass initially put on plane 1, one run per entry.
    pub starts: Vec<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            radius: None,
            radius_factor: DEFAULT_RADIUS_FACTOR,
            intervals: 2048,
            grading: 1.01,
            step_size: 1.0,
            max_iters: 50_000,
            grad_tol: 1e-6,
            energy_tol: 1e-10,
            starts: vec![0.1, 0.5, 0.9],
            seed: 0,
            execution: Execution::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::Config(msg));
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("radius must be positive, got {r}"));
            }
        }
        if !(self.radius_factor > 0.0 && self.radius_factor.is_finite()) {
            return bad(format!("radius factor must be positive, got {}", self.radius_factor));
        }
        if self.intervals < grid::MIN_INTERVALS {
            return bad(format!("need at least {} grid cells, got {}", grid::MIN_INTERVALS, self.intervals));
        }
        if !(self.grading >= 1.0 && self.grading.is_finite()) {
            return bad(format!("grading must be >= 1, got {}", self.grading));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if self.max_iters < 1 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.grad_tol > 0.0 && self.energy_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.starts.is_empty() || self.starts.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return bad("starts must be a nonempty list of mass splits in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Planar,
    Single,
    Hybrid,
    Linear,
}

/// What was solved. Unused entries are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub beta: Option<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSample {
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
    pub phi1: f64,
    pub phi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartOutcome {
    pub split: f64,
    pub energy: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundStateReport {
    pub problem: ProblemSpec,
    pub energy: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub q1: f64,
    pub q2: f64,
    pub omega: f64,
    pub omega_star: Option<f64>,
    pub el_residual: f64,
    /// Matching-condition mismatch per plane; absent without charges.
    pub boundary_residuals: Option<[f64; 2]>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative preconditioned projected-gradient norm at exit.
    pub pg_norm: f64,
    /// 1 or 2: the plane with the larger mass.
    pub dominant_plane: u8,
    pub lambda: f64,
    pub radius: f64,
    pub intervals: usize,
    pub grading: f64,
    pub start_split: Option<f64>,
    pub starts: Vec<StartOutcome>,
    pub profile_samples: Vec<ProfileSample>,
    /// β = 0 with equal plane energies: the best run that put the mass on
    /// the other plane.
    pub alternate_branch: Option<Box<GroundStateReport>>,
    #[serde(skip)]
    pub state: Option<HybridState>,
}

impl GroundStateReport {
    pub fn state(&self) -> &HybridState {
        self.state.as_ref().expect("report carries its state")
    }
}

/// `λ` solving `(σ₁+θ_λ)(σ₂+θ_λ) = β²` on the upper branch: minus the
/// lowest eigenvalue of the linear hybrid operator.
pub fn omega_star(params: &HybridParams) -> Result<f64, SolverError> {
    let (s1, s2, b) = (params.sigma1, params.sigma2, params.beta);
    let t = -(s1 + s2) / 2.0 + (((s1 - s2) / 2.0).powi(2) + b * b).sqrt();
    Ok(specfun::lambda_for_theta(t)?)
}

/// `ω = (‖u₁‖_{p₁}^{p₁} + ‖u₂‖_{p₂}^{p₂} − Q(U)) / ‖U‖²`.
pub fn extract_omega(state: &HybridState, params: &HybridParams) -> Result<f64, SolverError> {
    let (q, m, l1, l2) = energy::hybrid_scalars(state, params);
    if !(m > 0.0) {
        return Err(SolverError::Domain("zero mass: the multiplier is undefined"));
    }
    Ok((l1 + l2 - q) / m)
}

/// Frequency of the best Gaussian trial state for the planar problem.
fn variational_omega(p: f64, mu: f64) -> f64 {
    let c = (p - 2.0) * (2.0 * PI / (p * p)) * (mu / PI).powf(p / 2.0) / mu;
    let a = c.powf(1.0 / (p - 4.0));
    let amp_sq = mu / (PI * a * a);
    let lp = amp_sq.powf(p / 2.0) * 2.0 * PI * a * a / p;
    2.0 * lp / (p * mu)
}

#[derive(Debug, Clone, Copy)]
struct Plane {
    p: Option<f64>,
    sigma: f64,
    charged: bool,
}

#[derive(Debug, Clone)]
struct Problem {
    planes: Vec<Plane>,
    beta: f64,
    mu: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Eval {
    f: f64,
    mass: f64,
    /// `Q(U)` including the coupling.
    q_form: f64,
    lp: f64,
    plane_mass: [f64; 2],
}

/// Tridiagonal `K + s·diag(m)` with a Dirichlet row at the last node,
/// factored once for repeated Thomas solves.
#[derive(Debug, Clone)]
struct Tridiag {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Tridiag {
    fn new(grid: &RadialGrid, shift: f64) -> Self {
        let m = grid.lumped_weights();
        let extra: Vec<f64> = m.iter().map(|m| shift * m).collect();
        Self::with_diagonal(grid, &extra)
    }

    /// `K + diag(extra)`.
    fn with_diagonal(grid: &RadialGrid, extra: &[f64]) -> Self {
        let n = grid.intervals();
        // unknowns 0..n−1; node n is fixed
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for k in 0..n {
            let c = grid.stiffness(k);
            diag[k] += c + extra[k];
            if k + 1 < n {
                diag[k + 1] += c;
                upper[k] = -c;
                lower[k + 1] = -c;
            }
        }
        let mut upper_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for k in 0..n {
            let pivot = diag[k] - lower[k] * prev;
            inv_pivot[k] = 1.0 / pivot;
            prev = upper[k] * inv_pivot[k];
            upper_mod[k] = prev;
        }
        Self { lower, upper_mod, inv_pivot }
    }

    /// Solves for the first `n` entries; `out[n]` is set to zero.
    fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let n = self.inv_pivot.len();
        let mut y = 0.0;
        for k in 0..n {
            y = (rhs[k] - self.lower[k] * y) * self.inv_pivot[k];
            out[k] = y;
        }
        for k in (0..n - 1).rev() {
            out[k] -= self.upper_mod[k] * out[k + 1];
        }
        out[n] = 0.0;
    }
}

struct Engine<'a> {
    problem: &'a Problem,
    grid: Arc<RadialGrid>,
    greens: Vec<Arc<GreenTable>>,
    tridiag: Tridiag,
    nodes: usize,
}

#[derive(Debug, Clone, Copy)]
struct Descent {
    iterations: usize,
    converged: bool,
    pg_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Engine<'a> {
    fn new(problem: &'a Problem, grid: Arc<RadialGrid>, lambda: f64) -> Result<Self, SolverError> {
        let green = Arc::new(GreenTable::new(&grid, lambda)?);
        let greens = vec![green; problem.planes.len()];
        let tridiag = Tridiag::new(&grid, lambda);
        let nodes = grid.len();
        Ok(Self { problem, grid, greens, tridiag, nodes })
    }

    fn block(&self) -> usize {
        self.nodes + 1
    }

    fn lambda(&self) -> f64 {
        self.greens[0].lambda()
    }

    fn eval(&self, x: &[f64], mut grad: Option<(&mut [f64], &mut [f64])>) -> Eval {
        let b = self.block();
        let mut ev = Eval::default();
        let mut pg = PlaneGradient { energy_phi: Vec::new(), energy_q: 0.0, mass_phi: Vec::new(), mass_q: 0.0 };
        let mut qs = [0.0; 2];
        for (i, plane) in self.problem.planes.iter().enumerate() {
            let off = i * b;
            let phi = &x[off..off + self.nodes];
            let q = x[off + self.nodes];
            qs[i] = q;
            let green = &self.greens[i];
            let want = grad.is_some();
            let t = energy::plane_eval(
                &self.grid,
                green,
                phi,
                q,
                plane.p,
                plane.sigma,
                if want { Some(&mut pg) } else { None },
            );
            let qf = t.q_form(q, plane.sigma, green);
            let m = t.mass(q, green);
            ev.q_form += qf;
            ev.mass += m;
            ev.plane_mass[i] = m;
            ev.f += 0.5 * qf;
            if let Some(p) = plane.p {
                ev.f -= t.lp / p;
                ev.lp += t.lp;
            }
            if let Some((g, gm)) = grad.as_mut() {
                g[off..off + self.nodes].copy_from_slice(&pg.energy_phi);
                gm[off..off + self.nodes].copy_from_slice(&pg.mass_phi);
                g[off + self.nodes] = pg.energy_q;
                gm[off + self.nodes] = pg.mass_q;
                // Dirichlet node and charge-free planes
                g[off + self.nodes - 1] = 0.0;
                gm[off + self.nodes - 1] = 0.0;
                if !plane.charged {
                    g[off + self.nodes] = 0.0;
                    gm[off + self.nodes] = 0.0;
                }
            }
        }
        if self.problem.planes.len() == 2 {
            let beta = self.problem.beta;
            ev.f -= beta * qs[0] * qs[1];
            ev.q_form -= 2.0 * beta * qs[0] * qs[1];
            if let Some((g, _)) = grad.as_mut() {
                g[self.nodes] -= beta * qs[1];
                g[b + self.nodes] -= beta * qs[0];
            }
        }
        ev
    }

    fn mass(&self, x: &[f64]) -> f64 {
        let b = self.block();
        (0..self.problem.planes.len())
            .map(|i| {
                let off = i * b;
                let q = x[off + self.nodes];
                let t = energy::plane_eval(&self.grid, &self.greens[i], &x[off..off + self.nodes], q, None, 0.0, None);
                t.mass(q, &self.greens[i])
            })
            .sum()
    }

    fn omega(&self, ev: &Eval) -> f64 {
        (ev.lp - ev.q_form) / ev.mass
    }

    /// Applies the preconditioner; `free[i]` says whether charge `i` moves.
    fn precondition(&self, r: &[f64], free: &[bool; 2], out: &mut [f64]) {
        let b = self.block();
        let planes = self.problem.planes.len();
        for i in 0..planes {
            let off = i * b;
            self.tridiag.solve(&r[off..off + self.nodes], &mut out[off..off + self.nodes]);
            out[off + self.nodes] = 0.0;
        }
        // Charge block: inverse of the charge matrix with floored spectrum.
        let floor = 1.0 / (4.0 * PI);
        let diag = |i: usize| self.problem.planes[i].sigma + self.greens[i].theta();
        if planes == 2 && free[0] && free[1] {
            let (a, c, off) = (diag(0), diag(1), -self.problem.beta);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + off * off).sqrt();
            let (l1, l2) = ((mean - rad).max(floor), (mean + rad).max(floor));
            // eigenvector of the larger eigenvalue
            let (vx, vy) = if rad == 0.0 {
                (1.0, 0.0)
            } else {
                let (x, y) = (off, mean + rad - a);
                let nrm = (x * x + y * y).sqrt();
                if nrm == 0.0 {
                    (1.0, 0.0)
                } else {
                    (x / nrm, y / nrm)
                }
            };
            let (r0, r1) = (r[self.nodes], r[b + self.nodes]);
            let along = (vx * r0 + vy * r1) / l2;
            let across = (-vy * r0 + vx * r1) / l1;
            out[self.nodes] = vx * along - vy * across;
            out[b + self.nodes] = vy * along + vx * across;
        } else {
            for i in 0..planes {
                if free[i] {
                    out[i * b + self.nodes] = r[i * b + self.nodes] / diag(i).max(floor);
                }
            }
        }
    }

    /// Projected preconditioned gradient. Returns `gᵀd ≥ 0`; `d` is the
    /// descent direction (step is `x − αd`) and `gp` the projected gradient.
    fn direction(
        &self,
        x: &[f64],
        g: &[f64],
        gm: &[f64],
        d: &mut [f64],
        gp: &mut [f64],
        scratch: &mut [f64],
    ) -> f64 {
        let b = self.block();
        let planes = self.problem.planes.len();
        let mut free = [false; 2];
        for i in 0..planes {
            free[i] = self.problem.planes[i].charged;
        }
        for pass in 0..2 {
            gp.copy_from_slice(g);
            let mut gmm = gm.to_vec();
            for i in 0..planes {
                if !free[i] {
                    gp[i * b + self.nodes] = 0.0;
                    gmm[i * b + self.nodes] = 0.0;
                }
            }
            self.precondition(gp, &free, d);
            self.precondition(&gmm, &free, scratch);
            let eta = dot(&gmm, d) / dot(&gmm, scratch);
            for k in 0..d.len() {
                d[k] -= eta * scratch[k];
                gp[k] -= eta * gmm[k];
            }
            // charges sitting at the bound that would be pushed below it
            let mut changed = false;
            if pass == 0 {
                for i in 0..planes {
                    let qi = i * b + self.nodes;
                    if free[i] && x[qi] <= 0.0 && d[qi] > 0.0 {
                        free[i] = false;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dot(gp, d)
    }

    fn retract(&self, y: &mut [f64]) {
        let b = self.block();
        for i in 0..self.problem.planes.len() {
            let qi = i * b + self.nodes;
            y[qi] = y[qi].max(0.0);
            y[qi - 1] = 0.0;
        }
        let m = self.mass(y);
        let scale = (self.problem.mu / m).sqrt();
        for v in y.iter_mut() {
            *v *= scale;
        }
    }

    fn pg_norm(&self, x: &[f64]) -> f64 {
        let len = x.len();
        let (mut g, mut gm) = (vec![0.0; len], vec![0.0; len]);
        let ev = self.eval(x, Some((&mut g, &mut gm)));
        let (mut d, mut gp, mut scratch) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        let gd = self.direction(x, &g, &gm, &mut d, &mut gp, &mut scratch);
        (gd.max(0.0) / ev.f.abs().max(f64::MIN_POSITIVE)).sqrt()
    }

    /// Newton sweeps on the regular parts at frozen charges and frequency.
    ///
    /// Early iterates can carry a regular part many orders larger than the
    /// final one; the rounding debris left behind lives on the innermost
    /// cells, where it is invisible to the descent metric but dominates
    /// nodal residuals. The `φ`-Jacobian is tridiagonal, so a couple of
    /// exact solves clear it.
    fn polish(&self, x: &mut [f64]) {
        let len = x.len();
        let b = self.block();
        let m = self.grid.lumped_weights();
        let residual = |x: &[f64], g: &mut [f64]| -> (f64, f64) {
            let mut gm = vec![0.0; x.len()];
            let ev = self.eval(x, Some((&mut *g, &mut gm)));
            let omega = self.omega(&ev);
            let mut norm = 0.0;
            for i in 0..self.problem.planes.len() {
                for k in 0..self.nodes - 1 {
                    let j = i * b + k;
                    g[j] += 0.5 * omega * gm[j];
                    norm += g[j] * g[j] / m[k];
                }
            }
            (omega, norm)
        };
        let mut g = vec![0.0; len];
        let (mut omega, mut norm) = residual(x, &mut g);
        let mut trial = x.to_vec();
        let mut delta = vec![0.0; self.nodes];
        for _ in 0..3 {
            for (i, plane) in self.problem.planes.iter().enumerate() {
                let off = i * b;
                let q = x[off + self.nodes];
                let green = self.greens[i].at_nodes();
                let extra: Vec<f64> = (0..self.nodes)
                    .map(|k| {
                        let curv = match plane.p {
                            Some(p) => {
                                // the origin value of u is singular; borrow node 1
                                let kk = if q != 0.0 { k.max(1) } else { k };
                                let u = x[off + kk] + q * green[kk];
                                (p - 1.0) * u.abs().powf(p - 2.0)
                            }
                            None => 0.0,
                        };
                        (omega - curv) * m[k]
                    })
                    .collect();
                let jac = Tridiag::with_diagonal(&self.grid, &extra);
                jac.solve(&g[off..off + self.nodes], &mut delta);
                for k in 0..self.nodes {
                    trial[off + k] = x[off + k] - delta[k];
                }
            }
            if trial.iter().any(|v| !v.is_finite()) {
                break;
            }
            let mut tg = vec![0.0; len];
            let (o, n) = residual(&trial, &mut tg);
            if !(n < norm) {
                break;
            }
            x.copy_from_slice(&trial);
            (omega, norm, g) = (o, n, tg);
        }
        self.retract(x);
    }

    fn descend(&self, x: &mut Vec<f64>, tol: f64, budget: usize, cfg: &SolverConfig) -> Descent {
        let len = x.len();
        let mut g = vec![0.0; len];
        let mut gm = vec![0.0; len];
        let mut ev = self.eval(x, Some((&mut g, &mut gm)));
        let (mut d, mut gp, mut scratch) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        let (mut tg, mut tgm, mut trial) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        let mut history: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
        let mut alpha = cfg.step_size;
        let mut stalled_for = 0;
        let mut iterations = 0;
        loop {
            let gd = self.direction(x, &g, &gm, &mut d, &mut gp, &mut scratch);
            let pg_norm = (gd.max(0.0) / ev.f.abs().max(f64::MIN_POSITIVE)).sqrt();
            if pg_norm <= tol {
                return Descent { iterations, converged: true, pg_norm };
            }
            if iterations >= budget || stalled_for >= STALL_WINDOW {
                return Descent { iterations, converged: false, pg_norm };
            }
            if let Some((s, gp_old, d_old)) = &history {
                let mut sy = 0.0;
                let mut yy = 0.0;
                for k in 0..len {
                    let dy = gp[k] - gp_old[k];
                    sy += s[k] * dy;
                    yy += dy * (d[k] - d_old[k]);
                }
                let bb = sy / yy;
                alpha = if bb.is_finite() && bb > 0.0 { bb.clamp(1e-6, 1e6) } else { (2.0 * alpha).min(1e6) };
            }

            let mut accepted = None;
            for _ in 0..60 {
                for k in 0..len {
                    trial[k] = x[k] - alpha * d[k];
                }
                self.retract(&mut trial);
                let et = self.eval(&trial, Some((&mut tg, &mut tgm)));
                if et.f <= ev.f - ARMIJO_C1 * alpha * gd {
                    accepted = Some(et);
                    break;
                }
                alpha *= 0.5;
            }
            let Some(et) = accepted else {
                return Descent { iterations, converged: false, pg_norm };
            };
            debug_assert!(et.f <= ev.f, "energy increased along an accepted step");
            if (ev.f - et.f).abs() <= cfg.energy_tol * ev.f.abs() {
                stalled_for += 1;
            } else {
                stalled_for = 0;
            }
            let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
            history = Some((s, gp.clone(), d.clone()));
            std::mem::swap(x, &mut trial);
            std::mem::swap(&mut g, &mut tg);
            std::mem::swap(&mut gm, &mut tgm);
            ev = et;
            iterations += 1;
        }
    }
}

/// A finished run on its final grid.
struct Run {
    grid: Arc<RadialGrid>,
    greens: Vec<Arc<GreenTable>>,
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
    pg_norm: f64,
    ev: Eval,
}

fn radius_for(cfg: &SolverConfig, lambda: f64) -> f64 {
    cfg.radius.unwrap_or(cfg.radius_factor / lambda.sqrt())
}

fn initial_state(problem: &Problem, engine: &Engine, split: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let lambda = engine.lambda();
    let b = engine.block();
    let planes = problem.planes.len();
    let mut x = vec![0.0; planes * b];
    for (i, plane) in problem.planes.iter().enumerate() {
        let share = if planes == 1 { 1.0 } else if i == 0 { split } else { 1.0 - split };
        let target = share * problem.mu;
        if target <= 0.0 {
            continue;
        }
        let tilt = 0.05 * rng.random_range(-1.0..1.0);
        let shape: Vec<f64> = engine
            .grid
            .nodes()
            .iter()
            .map(|&r| {
                let s = r * lambda.sqrt();
                (-0.5 * s * s).exp() * (1.0 + tilt * s)
            })
            .collect();
        let mut shape = shape;
        shape[engine.nodes - 1] = 0.0;
        let q = if plane.charged { 0.1 * (4.0 * PI * lambda * target).sqrt() } else { 0.0 };
        let green = &engine.greens[i];
        let t = energy::plane_eval(&engine.grid, green, &shape, 0.0, None, 0.0, None);
        // solve A²‖φ‖² + 2Aq⟨φ,𝒢⟩ + q²‖𝒢‖² = target for A > 0
        let (a, bq, c) = (t.phi_sq, q * t.phi_green, q * q * green.norm_sq() - target);
        let amp = (-bq + (bq * bq - a * c).sqrt()) / a;
        for (k, v) in shape.iter().enumerate() {
            x[i * b + k] = amp * v;
        }
        x[i * b + engine.nodes] = q;
    }
    x
}

/// Re-expresses `x` at decomposition parameter `lambda` on `grid`.
fn transfer(
    problem: &Problem,
    engine: &Engine,
    x: &[f64],
    grid: Arc<RadialGrid>,
    lambda: f64,
) -> Result<Vec<f64>, SolverError> {
    let b = engine.block();
    let nb = grid.len() + 1;
    let mut out = vec![0.0; problem.planes.len() * nb];
    for i in 0..problem.planes.len() {
        let phi = RadialField::new(engine.grid.clone(), x[i * b..i * b + engine.nodes].to_vec())?;
        let field = ChargedField::with_green(phi, x[i * b + engine.nodes], engine.greens[i].clone())?;
        let moved = field.redecompose(lambda)?;
        let moved = if Arc::ptr_eq(&grid, &engine.grid) { moved } else { moved.regrid(grid.clone())? };
        let v = moved.phi.values();
        out[i * nb..i * nb + v.len()].copy_from_slice(v);
        out[i * nb + grid.len() - 1] = 0.0;
        out[i * nb + grid.len()] = moved.q();
    }
    Ok(out)
}

fn run_problem(problem: &Problem, cfg: &SolverConfig, lambda0: f64, split: f64, seed: u64) -> Result<Run, SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lambda = lambda0;
    let mut grid = Arc::new(grid::make_grid(radius_for(cfg, lambda), cfg.intervals, cfg.grading)?);
    let mut engine = Engine::new(problem, grid.clone(), lambda)?;
    let mut x = initial_state(problem, &engine, split, &mut rng);
    engine.retract(&mut x);

    let mut iterations = 0;
    let mut full = false;
    let mut last = Descent { iterations: 0, converged: false, pg_norm: f64::INFINITY };
    let mut converged = false;
    for _ in 0..MAX_STAGES {
        let tol = if full { cfg.grad_tol } else { cfg.grad_tol.max(STAGE_TOL) };
        let budget = if full { cfg.max_iters - iterations } else { STAGE_ITERS.min(cfg.max_iters - iterations) };
        last = engine.descend(&mut x, tol, budget, cfg);
        iterations += last.iterations;
        let ev = engine.eval(&x, None);
        let omega = engine.omega(&ev);
        let close = omega > 0.0 && (omega / lambda - 1.0).abs() <= LAMBDA_MATCH;
        if close {
            if full {
                converged = last.converged;
                break;
            }
            full = true;
            continue;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        let target = if omega.is_finite() && omega > 0.0 { omega.clamp(lambda * 1e-3, lambda * 1e3) } else { lambda };
        let new_grid = if cfg.radius.is_some() {
            grid.clone()
        } else {
            Arc::new(grid::make_grid(radius_for(cfg, target), cfg.intervals, cfg.grading)?)
        };
        let moved = transfer(problem, &engine, &x, new_grid.clone(), target)?;
        lambda = target;
        grid = new_grid;
        engine = Engine::new(problem, grid.clone(), lambda)?;
        x = moved;
        engine.retract(&mut x);
    }
    let mut pg_norm = last.pg_norm;
    if converged {
        let mut y = x.clone();
        engine.polish(&mut y);
        let pg = engine.pg_norm(&y);
        if pg <= cfg.grad_tol.max(pg_norm) {
            x = y;
            pg_norm = pg;
        }
    }
    let ev = engine.eval(&x, None);
    Ok(Run {
        grid: engine.grid.clone(),
        greens: engine.greens.clone(),
        x,
        iterations,
        converged,
        pg_norm,
        ev,
    })
}

fn run_state(problem: &Problem, run: &Run) -> Result<HybridState, SolverError> {
    let n = run.grid.len();
    let b = n + 1;
    let field = |i: usize| -> Result<ChargedField, SolverError> {
        let phi = RadialField::new(run.grid.clone(), run.x[i * b..i * b + n].to_vec())?;
        Ok(ChargedField::with_green(phi, run.x[i * b + n], run.greens[i].clone())?)
    };
    let u1 = field(0)?;
    let u2 = if problem.planes.len() == 2 {
        field(1)?
    } else {
        ChargedField::with_green(RadialField::zeros(run.grid.clone()), 0.0, run.greens[0].clone())?
    };
    Ok(HybridState::new(u1, u2)?)
}

fn profile_samples(state: &HybridState) -> Vec<ProfileSample> {
    let grid = state.u1.grid();
    let (t1, t2) = (state.u1.total_field(), state.u2.total_field());
    let n = grid.intervals();
    let mut last = 0;
    let mut out = Vec::with_capacity(PROFILE_SAMPLES);
    for j in 0..PROFILE_SAMPLES {
        let k = 1 + (j * (n - 1)) / (PROFILE_SAMPLES - 1);
        if k == last {
            continue;
        }
        last = k;
        out.push(ProfileSample {
            r: grid.nodes()[k],
            u1: t1.values()[k],
            u2: t2.values()[k],
            phi1: state.u1.phi.values()[k],
            phi2: state.u2.phi.values()[k],
        });
    }
    out
}

fn build_report(
    problem: &Problem,
    spec: ProblemSpec,
    residual_params: &HybridParams,
    run: Run,
    cfg: &SolverConfig,
    split: Option<f64>,
) -> Result<GroundStateReport, SolverError> {
    let state = run_state(problem, &run)?;
    let omega = (run.ev.lp - run.ev.q_form) / run.ev.mass;
    let charged = problem.planes.iter().any(|p| p.charged);
    let boundary = if charged {
        let (r1, r2) = energy::boundary_residual(&state, residual_params);
        Some([r1, if problem.planes.len() == 2 { r2 } else { 0.0 }])
    } else {
        None
    };
    let [mass1, mass2] = run.ev.plane_mass;
    Ok(GroundStateReport {
        problem: spec,
        energy: run.ev.f,
        mass1,
        mass2,
        q1: state.u1.q(),
        q2: state.u2.q(),
        omega,
        omega_star: None,
        el_residual: energy::el_residual(&state, residual_params, omega),
        boundary_residuals: boundary,
        iterations: run.iterations,
        converged: run.converged,
        pg_norm: run.pg_norm,
        dominant_plane: if mass2 > mass1 { 2 } else { 1 },
        lambda: run.greens[0].lambda(),
        radius: run.grid.radius(),
        intervals: cfg.intervals,
        grading: cfg.grading,
        start_split: split,
        starts: Vec::new(),
        profile_samples: profile_samples(&state),
        alternate_branch: None,
        state: Some(state),
    })
}

/// Ground state of `½‖∇u‖² − ‖u‖_p^p/p` on the plane at mass `mu`.
pub fn solve_planar(p: f64, mu: f64, cfg: &SolverConfig) -> Result<GroundStateReport, SolverError> {
    let params = HybridParams::new(p, p, 0.0, 0.0, 0.0, mu)?;
    cfg.validate()?;
    let problem = Problem { planes: vec![Plane { p: Some(p), sigma: 0.0, charged: false }], beta: 0.0, mu };
    let run = run_problem(&problem, cfg, variational_omega(p, mu), 1.0, cfg.seed)?;
    let spec = ProblemSpec { kind: ProblemKind::Planar, p1: Some(p), p2: None, sigma1: None, sigma2: None, beta: None, mu };
    build_report(&problem, spec, &params, run, cfg, None)
}

/// Ground state of `F_{p,σ}` on one plane at mass `mu`.
pub fn solve_single(p: f64, sigma: f64, mu: f64, cfg: &SolverConfig) -> Result<GroundStateReport, SolverError> {
    let params = HybridParams::new(p, p, sigma, sigma, 0.0, mu)?;
    cfg.validate()?;
    let problem = Problem { planes: vec![Plane { p: Some(p), sigma, charged: true }], beta: 0.0, mu };
    let linear = specfun::lambda_for_theta(-sigma)?;
    let run = run_problem(&problem, cfg, linear.max(variational_omega(p, mu)), 1.0, cfg.seed)?;
    let spec =
        ProblemSpec { kind: ProblemKind::Single, p1: Some(p), p2: None, sigma1: Some(sigma), sigma2: None, beta: None, mu };
    let mut report = build_report(&problem, spec, &params, run, cfg, None)?;
    report.omega_star = Some(linear);
    Ok(report)
}

fn hybrid_spec(params: &HybridParams) -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Hybrid,
        p1: Some(params.p1),
        p2: Some(params.p2),
        sigma1: Some(params.sigma1),
        sigma2: Some(params.sigma2),
        beta: Some(params.beta),
        mu: params.mu,
    }
}

/// Ground state of the hybrid energy: one run per configured mass split,
/// the lowest converged energy wins.
pub fn solve_hybrid(params: &HybridParams, cfg: &SolverConfig) -> Result<GroundStateReport, SolverError> {
    params.validate()?;
    cfg.validate()?;
    let problem = Problem {
        planes: vec![
            Plane { p: Some(params.p1), sigma: params.sigma1, charged: true },
            Plane { p: Some(params.p2), sigma: params.sigma2, charged: true },
        ],
        beta: params.beta,
        mu: params.mu,
    };
    let linear = omega_star(params)?;
    let lambda0 = linear.max(variational_omega(params.p1, params.mu)).max(variational_omega(params.p2, params.mu));
    let jobs: Vec<(usize, f64)> = cfg.starts.iter().copied().enumerate().collect();
    let runs = cfg.execution.map(jobs, |(i, split)| {
        let seed = cfg.seed.wrapping_add(i as u64);
        run_problem(&problem, cfg, lambda0, split, seed)
            .and_then(|run| build_report(&problem, hybrid_spec(params), params, run, cfg, Some(split)))
    });
    let mut reports = Vec::with_capacity(runs.len());
    for r in runs {
        reports.push(r?);
    }
    let outcomes: Vec<StartOutcome> = reports
        .iter()
        .map(|r| StartOutcome {
            split: r.start_split.unwrap_or(0.0),
            energy: r.energy,
            mass1: r.mass1,
            mass2: r.mass2,
            converged: r.converged,
            iterations: r.iterations,
        })
        .collect();
    let better = |a: &GroundStateReport, b: &GroundStateReport| (a.converged, -a.energy) > (b.converged, -b.energy);
    let mut best_idx = 0;
    for (i, r) in reports.iter().enumerate() {
        if better(r, &reports[best_idx]) {
            best_idx = i;
        }
    }
    let mut best = reports.swap_remove(best_idx);
    if params.beta == 0.0 {
        let rival = reports
            .into_iter()
            .filter(|r| r.converged && r.dominant_plane != best.dominant_plane)
            .min_by(|a, b| a.energy.total_cmp(&b.energy));
        if let Some(r) = rival {
            if ((r.energy - best.energy) / best.energy).abs() <= 1e-6 {
                best.alternate_branch = Some(Box::new(r));
            }
        }
    }
    best.starts = outcomes;
    best.omega_star = Some(linear);
    Ok(best)
}

/// Outcome of the variational computation of the linear ground level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayleighOutcome {
    /// `−min Q(U)/‖U‖²`
    pub omega: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `Q(U)/‖U‖²` over the grid by the same projected descent; an
/// independent check of [`omega_star`] (no secular equation involved).
/// Starts from `λ = 1` and lets the continuation find the scale.
pub fn omega_rayleigh(params: &HybridParams, cfg: &SolverConfig) -> Result<RayleighOutcome, SolverError> {
    params.validate()?;
    cfg.validate()?;
    let problem = Problem {
        planes: vec![
            Plane { p: None, sigma: params.sigma1, charged: true },
            Plane { p: None, sigma: params.sigma2, charged: true },
        ],
        beta: params.beta,
        mu: 1.0,
    };
    let run = run_problem(&problem, cfg, 1.0, 0.5, cfg.seed)?;
    Ok(RayleighOutcome { omega: -run.ev.q_form / run.ev.mass, iterations: run.iterations, converged: run.converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_star_closed_forms() {
        let g = specfun::EULER_GAMMA;
        for sigma in [-0.5, 0.0, 0.3] {
            for beta in [0.2, 1.0] {
                let p = HybridParams::new(3.0, 3.0, sigma, sigma, beta, 1.0).unwrap();
                let expect = 4.0 * (4.0 * PI * (beta - sigma) - 2.0 * g).exp();
                assert!((omega_star(&p).unwrap() / expect - 1.0).abs() < 1e-12);
            }
        }
        let p = HybridParams::new(3.0, 3.0, 0.4, -0.2, 0.0, 1.0).unwrap();
        let expect = 4.0 * (4.0 * PI * 0.2 - 2.0 * g).exp();
        assert!((omega_star(&p).unwrap() / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn omega_star_solves_the_secular_equation() {
        for (s1, s2, b) in [(0.0, 0.0, 1.0), (0.0, 1.0, 0.5), (-1.0, 1.0, 2.0), (0.3, -0.7, 0.1)] {
            let p = HybridParams::new(3.0, 3.0, s1, s2, b, 1.0).unwrap();
            let w = omega_star(&p).unwrap();
            let t = specfun::theta(w).unwrap();
            let lhs = (s1 + t) * (s2 + t);
            assert!((lhs - b * b).abs() < 1e-9 * (1.0 + b * b), "{lhs}");
            // the larger root: both factors positive
            assert!(s1 + t >= -1e-12 && s2 + t >= -1e-12);
        }
    }

    #[test]
    fn tridiagonal_solve() {
        let g = grid::make_grid(5.0, 128, 1.02).unwrap();
        let t = Tridiag::new(&g, 2.0);
        let n = g.intervals();
        let rhs: Vec<f64> = (0..=n).map(|k| (k as f64 * 0.1).sin()).collect();
        let mut x = vec![0.0; n + 1];
        t.solve(&rhs, &mut x);
        let m = g.lumped_weights();
        for k in 0..n {
            let mut ax = 2.0 * m[k] * x[k];
            if k > 0 {
                ax += g.stiffness(k - 1) * (x[k] - x[k - 1]);
            }
            ax += g.stiffness(k) * (x[k] - if k + 1 < n { x[k + 1] } else { 0.0 });
            assert!((ax - rhs[k]).abs() < 1e-10 * (1.0 + rhs[k].abs()), "row {k}");
        }
        assert_eq!(x[n], 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { starts: vec![1.5], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { intervals: 10, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { grad_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variational_frequency_is_positive() {
        for p in [2.2, 3.0, 3.8] {
            let w = variational_omega(p, 1.0);
            assert!(w > 0.0 && w.is_finite());
        }
        // μ-scaling of the planar problem: ω ∝ μ^{(p−2)/(4−p)}
        let r = variational_omega(3.0, 2.0) / variational_omega(3.0, 1.0);
        assert!((r - 2.0).abs() < 1e-12);
    }
}
