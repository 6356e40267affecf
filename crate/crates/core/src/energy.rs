//! Energy functionals of the double-plane hybrid.
//!
//! A field on one plane is stored as `u = φ + q·𝒢_λ`: a regular part `φ`
//! sampled on the radial grid, a nonnegative charge `q`, and the
//! decomposition parameter `λ`. Everything below is a fixed discrete
//! functional of `(φ, q)`; the gradients are its exact derivatives, so
//! finite differences reproduce them to rounding.
//!
//! Quadrature: cells `1..N` use the trapezoid rule, the first cell the
//! log-adapted Gauss rule of the grid (with `φ` interpolated linearly);
//! `‖𝒢_λ‖²` is taken in closed form.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, GridError, RadialField, RadialGrid};
use crate::specfun::{self, SpecfunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("charge must be finite and nonnegative, got {0}")]
    Charge(f64),
    #[error("planes live on different grids")]
    IncompatibleGrids,
    #[error("{0}")]
    Degenerate(&'static str),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Physical parameters of a hybrid problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridParams {
    pub p1: f64,
    pub p2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub beta: f64,
    pub mu: f64,
}

impl HybridParams {
    pub fn new(p1: f64, p2: f64, sigma1: f64, sigma2: f64, beta: f64, mu: f64) -> Result<Self, EnergyError> {
        let params = Self { p1, p2, sigma1, sigma2, beta, mu };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(p > 2.0 && p < 4.0) {
                return Err(EnergyError::Params(format!(
                    "{name} = {p} is outside the L2-subcritical range (2, 4)"
                )));
            }
        }
        for (name, s) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !s.is_finite() {
                return Err(EnergyError::Params(format!("{name} must be finite")));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(EnergyError::Params(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(EnergyError::Params(format!("mu = {} must be finite and > 0", self.mu)));
        }
        Ok(())
    }

    pub fn p(&self, plane: usize) -> f64 {
        if plane == 0 {
            self.p1
        } else {
            self.p2
        }
    }

    pub fn sigma(&self, plane: usize) -> f64 {
        if plane == 0 {
            self.sigma1
        } else {
            self.sigma2
        }
    }
}

/// `𝒢_λ` sampled at the grid nodes (node 0 unused) and at the first-cell
/// quadrature points, together with `θ_λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenTable {
    lambda: f64,
    theta: f64,
    nodes: Vec<f64>,
    cell: [f64; 8],
}

impl GreenTable {
    pub fn new(grid: &RadialGrid, lambda: f64) -> Result<Self, EnergyError> {
        let theta = specfun::theta(lambda)?;
        let mut nodes = Vec::with_capacity(grid.len());
        nodes.push(0.0);
        for &r in &grid.nodes()[1..] {
            nodes.push(specfun::green_value(lambda, r)?);
        }
        let mut cell = [0.0; 8];
        for (g, p) in cell.iter_mut().zip(grid.first_cell_rule()) {
            *g = specfun::green_value(lambda, p.r)?;
        }
        Ok(Self { lambda, theta, nodes, cell })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn norm_sq(&self) -> f64 {
        1.0 / (4.0 * PI * self.lambda)
    }

    /// Node values; entry 0 (the singularity) is a placeholder.
    pub fn at_nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// One plane's field `u = φ + q𝒢_λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargedField {
    pub phi: RadialField,
    q: f64,
    green: Arc<GreenTable>,
}

impl ChargedField {
    pub fn new(phi: RadialField, q: f64, lambda: f64) -> Result<Self, EnergyError> {
        let green = Arc::new(GreenTable::new(phi.grid(), lambda)?);
        Self::with_green(phi, q, green)
    }

    /// Reuses a precomputed table, which must belong to the same grid.
    pub fn with_green(phi: RadialField, q: f64, green: Arc<GreenTable>) -> Result<Self, EnergyError> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(EnergyError::Charge(q));
        }
        if green.nodes.len() != phi.grid().len() {
            return Err(EnergyError::IncompatibleGrids);
        }
        Ok(Self { phi, q, green })
    }

    pub fn zero(grid: Arc<RadialGrid>, lambda: f64) -> Result<Self, EnergyError> {
        Self::new(RadialField::zeros(grid), 0.0, lambda)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn lambda(&self) -> f64 {
        self.green.lambda
    }

    pub fn green(&self) -> &Arc<GreenTable> {
        &self.green
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.phi.grid()
    }

    /// Same function, regular part taken with respect to `𝒢_{λ'}`:
    /// `φ' = φ + q(𝒢_λ − 𝒢_{λ'})`, whose value at the origin is
    /// `φ(0) + q(θ_{λ'} − θ_λ)`.
    pub fn redecompose(&self, lambda: f64) -> Result<Self, EnergyError> {
        let green = Arc::new(GreenTable::new(self.grid(), lambda)?);
        let mut values = self.phi.values().to_vec();
        values[0] += self.q * (green.theta - self.green.theta);
        for k in 1..values.len() {
            values[k] += self.q * (self.green.nodes[k] - green.nodes[k]);
        }
        Self::with_green(RadialField::new(self.grid().clone(), values)?, self.q, green)
    }

    /// Moves the regular part to another grid by C¹ cubic Hermite
    /// interpolation (zero beyond the old radius); the charge is carried
    /// over exactly. Linear interpolation leaves kinks that sit below the
    /// solver's stopping norm but spoil strong-form residuals on tiny cells.
    pub fn regrid(&self, grid: Arc<RadialGrid>) -> Result<Self, EnergyError> {
        let old = self.grid().nodes();
        let v = self.phi.values();
        let slopes = node_slopes(old, v);
        let mut j = 0;
        let values: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&r| {
                if r >= old[old.len() - 1] {
                    return 0.0;
                }
                while old[j + 1] < r {
                    j += 1;
                }
                let h = old[j + 1] - old[j];
                let t = (r - old[j]) / h;
                let (t2, t3) = (t * t, t * t * t);
                (2.0 * t3 - 3.0 * t2 + 1.0) * v[j]
                    + (t3 - 2.0 * t2 + t) * h * slopes[j]
                    + (-2.0 * t3 + 3.0 * t2) * v[j + 1]
                    + (t3 - t2) * h * slopes[j + 1]
            })
            .collect();
        let phi = RadialField::new(grid, values)?;
        Self::new(phi, self.q, self.lambda())
    }

    /// `u` at the nodes. The origin, where `u` is singular for `q > 0`,
    /// gets the value at the middle of the first cell.
    pub fn total_field(&self) -> RadialField {
        let mut values: Vec<f64> =
            self.phi.values().iter().zip(&self.green.nodes).map(|(f, g)| f + self.q * g).collect();
        values[0] = if self.q == 0.0 {
            self.phi.values()[0]
        } else {
            let v = self.phi.values();
            let h = self.grid().nodes()[1];
            let g = specfun::green_value(self.lambda(), 0.5 * h).unwrap_or(0.0);
            0.5 * (v[0] + v[1]) + self.q * g
        };
        RadialField::from_parts(self.grid().clone(), values)
    }
}

/// Derivatives of the local quadratic interpolants; zero at the origin
/// (radial symmetry), one-sided at the outer node.
fn node_slopes(r: &[f64], v: &[f64]) -> Vec<f64> {
    let n = r.len() - 1;
    let delta = |k: usize| (v[k + 1] - v[k]) / (r[k + 1] - r[k]);
    let mut d = vec![0.0; n + 1];
    for k in 1..n {
        let (hl, hr) = (r[k] - r[k - 1], r[k + 1] - r[k]);
        d[k] = (hl * delta(k) + hr * delta(k - 1)) / (hl + hr);
    }
    if n >= 2 {
        let (hl, hr) = (r[n - 1] - r[n - 2], r[n] - r[n - 1]);
        d[n] = delta(n - 1) + hr * (delta(n - 1) - delta(n - 2)) / (hl + hr);
    }
    d
}

/// Both planes. Each plane may use its own decomposition parameter, but
/// the two must share one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub u1: ChargedField,
    pub u2: ChargedField,
}

impl HybridState {
    pub fn new(u1: ChargedField, u2: ChargedField) -> Result<Self, EnergyError> {
        if !Arc::ptr_eq(u1.grid(), u2.grid()) && u1.grid().nodes() != u2.grid().nodes() {
            return Err(EnergyError::IncompatibleGrids);
        }
        Ok(Self { u1, u2 })
    }

    pub fn plane(&self, i: usize) -> &ChargedField {
        if i == 0 {
            &self.u1
        } else {
            &self.u2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionValues {
    pub s_omega: f64,
    pub i_omega: f64,
    pub s_tilde: f64,
    pub a_omega: f64,
    pub b_omega: f64,
}

/// Scalar building blocks of one plane.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct PlaneTerms {
    /// `‖∇φ‖²`
    pub grad_sq: f64,
    /// `‖φ‖²`
    pub phi_sq: f64,
    /// `⟨φ, 𝒢_λ⟩`
    pub phi_green: f64,
    /// `‖u‖_p^p` (zero when no exponent is given)
    pub lp: f64,
}

impl PlaneTerms {
    pub fn mass(&self, q: f64, green: &GreenTable) -> f64 {
        self.phi_sq + 2.0 * q * self.phi_green + q * q * green.norm_sq()
    }

    /// `Q_σ = ‖∇φ‖² + λ‖φ‖² − λ‖u‖² + q²(σ + θ_λ)`, with the `‖φ‖²` terms
    /// cancelled analytically.
    pub fn q_form(&self, q: f64, sigma: f64, green: &GreenTable) -> f64 {
        self.grad_sq - 2.0 * green.lambda * q * self.phi_green
            + q * q * (sigma + green.theta - 1.0 / (4.0 * PI))
    }
}

/// Nodal (Euclidean) derivatives of one plane.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PlaneGradient {
    /// `∂(½Q_σ − ‖u‖_p^p / p)/∂φ_k`
    pub energy_phi: Vec<f64>,
    /// `∂(½Q_σ − ‖u‖_p^p / p)/∂q`, without the coupling term
    pub energy_q: f64,
    pub mass_phi: Vec<f64>,
    pub mass_q: f64,
}

/// Evaluates the plane terms and, if `grad` is given, the derivatives.
/// `p = None` drops the nonlinear term.
pub(crate) fn plane_eval(
    grid: &RadialGrid,
    green: &GreenTable,
    phi: &[f64],
    q: f64,
    p: Option<f64>,
    sigma: f64,
    mut grad: Option<&mut PlaneGradient>,
) -> PlaneTerms {
    let n = grid.intervals();
    let w = grid.outer_weights();
    let g = &green.nodes;
    let lambda = green.lambda;
    let mut t = PlaneTerms { grad_sq: grid::h1_seminorm_sq_of(grid, phi), ..Default::default() };
    // ⟨|u|^{p−2}u, 𝒢⟩
    let mut nonlinear_green = 0.0;

    // Contribution of one quadrature point with value φ = f, Green value gk,
    // weight wt; returns (∂/∂f of the energy sum, ∂/∂f of the mass sum).
    let mut point = |wt: f64, f: f64, gk: f64| -> (f64, f64) {
        t.phi_sq += wt * f * f;
        t.phi_green += wt * f * gk;
        let u = f + q * gk;
        let mut dn = 0.0;
        if let Some(p) = p {
            let a = u.abs();
            let pw = if a == 0.0 { 0.0 } else { a.powf(p - 2.0) };
            t.lp += wt * pw * a * a;
            dn = wt * pw * u;
            nonlinear_green += dn * gk;
        }
        (-lambda * q * wt * gk - dn, 2.0 * wt * u)
    };

    if let Some(out) = grad.as_deref_mut() {
        out.energy_phi.clear();
        out.energy_phi.resize(n + 1, 0.0);
        out.mass_phi.clear();
        out.mass_phi.resize(n + 1, 0.0);
        for k in 1..=n {
            let (e, m) = point(w[k], phi[k], g[k]);
            out.energy_phi[k] = e;
            out.mass_phi[k] = m;
        }
        for (pt, &gk) in grid.first_cell_rule().iter().zip(&green.cell) {
            let (e, m) = point(pt.weight, phi[0] * (1.0 - pt.t) + phi[1] * pt.t, gk);
            out.energy_phi[0] += (1.0 - pt.t) * e;
            out.energy_phi[1] += pt.t * e;
            out.mass_phi[0] += (1.0 - pt.t) * m;
            out.mass_phi[1] += pt.t * m;
        }
        for k in 0..n {
            let c = grid.stiffness(k) * (phi[k + 1] - phi[k]);
            out.energy_phi[k] -= c;
            out.energy_phi[k + 1] += c;
        }
    } else {
        for k in 1..=n {
            point(w[k], phi[k], g[k]);
        }
        for (pt, &gk) in grid.first_cell_rule().iter().zip(&green.cell) {
            point(pt.weight, phi[0] * (1.0 - pt.t) + phi[1] * pt.t, gk);
        }
    }
    if let Some(out) = grad {
        out.energy_q =
            q * (sigma + green.theta - 1.0 / (4.0 * PI)) - lambda * t.phi_green - nonlinear_green;
        out.mass_q = 2.0 * t.phi_green + 2.0 * q * green.norm_sq();
    }
    t
}

pub(crate) fn plane_terms(u: &ChargedField, p: Option<f64>) -> PlaneTerms {
    plane_eval(u.grid(), &u.green, u.phi.values(), u.q, p, 0.0, None)
}

/// `‖u‖₂²`.
pub fn mass(u: &ChargedField) -> f64 {
    plane_terms(u, None).mass(u.q, &u.green)
}

/// `Q_σ(u)`.
pub fn q_form_sigma(u: &ChargedField, sigma: f64) -> f64 {
    plane_terms(u, None).q_form(u.q, sigma, &u.green)
}

/// `F_{p,σ}(u) = ½Q_σ(u) − ‖u‖_p^p / p`.
pub fn f_single(u: &ChargedField, p: f64, sigma: f64) -> f64 {
    let t = plane_terms(u, Some(p));
    0.5 * t.q_form(u.q, sigma, &u.green) - t.lp / p
}

/// Planar NLS energy `½‖∇φ‖² − ‖φ‖_p^p / p` with the energy quadrature.
pub fn planar_energy(phi: &RadialField, p: f64) -> f64 {
    let grid = phi.grid();
    let w = grid.outer_weights();
    let v = phi.values();
    let mut lp: f64 = (1..grid.len()).map(|k| w[k] * v[k].abs().powf(p)).sum();
    for pt in grid.first_cell_rule() {
        lp += pt.weight * (v[0] * (1.0 - pt.t) + v[1] * pt.t).abs().powf(p);
    }
    0.5 * grid::h1_seminorm_sq(phi) - lp / p
}

/// `F(U) = F_{p₁,σ₁}(u₁) + F_{p₂,σ₂}(u₂) − β q₁ q₂`.
pub fn f_hybrid(state: &HybridState, params: &HybridParams) -> f64 {
    f_single(&state.u1, params.p1, params.sigma1) + f_single(&state.u2, params.p2, params.sigma2)
        - params.beta * state.u1.q * state.u2.q
}

/// Gradient of [`f_hybrid`]. The field parts are L² densities with respect
/// to the grid's lumped weights, so that
/// `dF = Σ_k m_k ∂φ₁F(r_k) δφ₁(r_k) + ∂q₁F δq₁ + (plane 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridGradient {
    pub phi1: RadialField,
    pub q1: f64,
    pub phi2: RadialField,
    pub q2: f64,
}

impl HybridGradient {
    /// Directional derivative along `(δφ₁, δq₁, δφ₂, δq₂)`.
    pub fn directional(&self, dphi1: &[f64], dq1: f64, dphi2: &[f64], dq2: f64) -> f64 {
        let m = self.phi1.grid().lumped_weights();
        let pair = |g: &RadialField, d: &[f64]| -> f64 {
            g.values().iter().zip(d).zip(m).map(|((g, d), m)| g * d * m).sum()
        };
        pair(&self.phi1, dphi1) + self.q1 * dq1 + pair(&self.phi2, dphi2) + self.q2 * dq2
    }
}

pub fn grad_f_hybrid(state: &HybridState, params: &HybridParams) -> HybridGradient {
    let mut parts = Vec::with_capacity(2);
    for i in 0..2 {
        let u = state.plane(i);
        let mut g = PlaneGradient { energy_phi: Vec::new(), energy_q: 0.0, mass_phi: Vec::new(), mass_q: 0.0 };
        plane_eval(u.grid(), &u.green, u.phi.values(), u.q, Some(params.p(i)), params.sigma(i), Some(&mut g));
        let m = u.grid().lumped_weights();
        let density: Vec<f64> = g.energy_phi.iter().zip(m).map(|(e, m)| e / m).collect();
        parts.push((RadialField::from_parts(u.grid().clone(), density), g.energy_q));
    }
    let (phi2, dq2) = parts.pop().unwrap();
    let (phi1, dq1) = parts.pop().unwrap();
    HybridGradient {
        phi1,
        q1: dq1 - params.beta * state.u2.q,
        phi2,
        q2: dq2 - params.beta * state.u1.q,
    }
}

/// Shared scalar evaluation of both planes: `(Q(U), ‖U‖², ‖u₁‖_{p₁}^{p₁}, ‖u₂‖_{p₂}^{p₂})`,
/// with `Q(U)` including the coupling `−2βq₁q₂`.
pub(crate) fn hybrid_scalars(state: &HybridState, params: &HybridParams) -> (f64, f64, f64, f64) {
    let t1 = plane_terms(&state.u1, Some(params.p1));
    let t2 = plane_terms(&state.u2, Some(params.p2));
    let q = t1.q_form(state.u1.q, params.sigma1, &state.u1.green) + t2.q_form(state.u2.q, params.sigma2, &state.u2.green)
        - 2.0 * params.beta * state.u1.q * state.u2.q;
    let m = t1.mass(state.u1.q, &state.u1.green) + t2.mass(state.u2.q, &state.u2.green);
    (q, m, t1.lp, t2.lp)
}

pub fn action_functionals(state: &HybridState, params: &HybridParams, omega: f64) -> ActionValues {
    let (q, m, l1, l2) = hybrid_scalars(state, params);
    let (p1, p2) = (params.p1, params.p2);
    let q_omega = q + omega * m;
    ActionValues {
        s_omega: 0.5 * q_omega - l1 / p1 - l2 / p2,
        i_omega: q_omega - l1 - l2,
        s_tilde: (p1 - 2.0) / (2.0 * p1) * l1 + (p2 - 2.0) / (2.0 * p2) * l2,
        a_omega: (p1 - 2.0) / (2.0 * p1) * q_omega + (p2 - p1) / (p1 * p2) * l2,
        b_omega: (p2 - 2.0) / (2.0 * p2) * q_omega + (p1 - p2) / (p1 * p2) * l1,
    }
}

/// Relative residual of `(−Δ+ω)φ + (ω−λ)q𝒢_λ − |u|^{p−2}u = 0` on both
/// planes: the lumped-L² norm of the residual over nodes `2..N` divided by
/// the norm of the sum of the term magnitudes.
pub fn el_residual(state: &HybridState, params: &HybridParams, omega: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..2 {
        let u = state.plane(i);
        let p = params.p(i);
        let grid = u.grid();
        let w = grid.outer_weights();
        let lap = grid::radial_laplacian(&u.phi);
        let phi = u.phi.values();
        let g = &u.green.nodes;
        let shift = (omega - u.lambda()) * u.q;
        for k in 2..grid.intervals() {
            let total = phi[k] + u.q * g[k];
            let nl = total.abs().powf(p - 2.0) * total;
            let terms = [-lap.values()[k], omega * phi[k], shift * g[k], -nl];
            let res: f64 = terms.iter().sum();
            let mag: f64 = terms.iter().map(|t| t.abs()).sum();
            num += w[k] * res * res;
            den += w[k] * mag * mag;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Mismatch in the matching conditions `φ_i(0) = (σ_i + θ_{λ_i}) q_i − β q_j`.
pub fn boundary_residual(state: &HybridState, params: &HybridParams) -> (f64, f64) {
    let r = |i: usize, j: usize| {
        let u = state.plane(i);
        grid::eval_at_origin(&u.phi) - ((params.sigma(i) + u.green.theta) * u.q - params.beta * state.plane(j).q)
    };
    (r(0, 1), r(1, 0))
}

/// `‖u‖_p^p / (𝒩^{p−2} ‖u‖₂²)` with `𝒩² = Q_σ(u) + λ‖u‖₂²`.
pub fn gn_ratio(u: &ChargedField, p: f64, sigma: f64) -> Result<f64, EnergyError> {
    let t = plane_terms(u, Some(p));
    let m = t.mass(u.q, &u.green);
    let n_sq = t.q_form(u.q, sigma, &u.green) + u.lambda() * m;
    if !(n_sq > 0.0) {
        return Err(EnergyError::Degenerate("Q_sigma + lambda*mass is not positive; increase lambda"));
    }
    if !(m > 0.0) {
        return Err(EnergyError::Degenerate("zero mass"));
    }
    Ok(t.lp / (n_sq.powf(0.5 * (p - 2.0)) * m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(r: f64, n: usize) -> Arc<RadialGrid> {
        Arc::new(grid::make_grid(r, n, 1.01).unwrap())
    }

    fn gaussian(g: &Arc<RadialGrid>, amp: f64, width: f64) -> RadialField {
        RadialField::from_fn(g.clone(), |r| amp * (-(r * r) / (2.0 * width * width)).exp())
    }

    fn random_field(rng: &mut ChaCha8Rng, g: &Arc<RadialGrid>) -> RadialField {
        let (a, b, c) = (rng.random_range(-1.0..1.5), rng.random_range(0.3..2.0), rng.random_range(-0.5..0.5));
        RadialField::from_fn(g.clone(), |r| a * (-(r * r) / (b * b)).exp() * (1.0 + c * r))
    }

    fn random_state(rng: &mut ChaCha8Rng, g: &Arc<RadialGrid>) -> HybridState {
        let u1 = ChargedField::new(random_field(rng, g), rng.random_range(0.1..1.0), rng.random_range(0.5..3.0)).unwrap();
        let u2 = ChargedField::new(random_field(rng, g), rng.random_range(0.1..1.0), rng.random_range(0.5..3.0)).unwrap();
        HybridState::new(u1, u2).unwrap()
    }

    fn params(p1: f64, p2: f64, s1: f64, s2: f64, beta: f64) -> HybridParams {
        HybridParams::new(p1, p2, s1, s2, beta, 1.0).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(HybridParams::new(5.0, 3.0, 0.0, 0.0, 0.0, 1.0).unwrap_err().to_string().contains("(2, 4)"));
        assert!(HybridParams::new(3.0, 2.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(HybridParams::new(3.0, 3.0, 0.0, 0.0, -1.0, 1.0).is_err());
        assert!(HybridParams::new(3.0, 3.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(HybridParams::new(3.0, 3.0, f64::NAN, 0.0, 0.0, 1.0).is_err());
        let g = grid(10.0, 256);
        assert_eq!(ChargedField::new(RadialField::zeros(g), -1.0, 1.0), Err(EnergyError::Charge(-1.0)));
    }

    #[test]
    fn mass_examples() {
        let g = grid(40.0, 2048);
        let phi = gaussian(&g, 0.7, 1.3);
        let plain = ChargedField::new(phi.clone(), 0.0, 1.0).unwrap();
        let direct: f64 = {
            let w = g.outer_weights();
            let v = phi.values();
            let mut s: f64 = (1..g.len()).map(|k| w[k] * v[k] * v[k]).sum();
            for pt in g.first_cell_rule() {
                let f = v[0] * (1.0 - pt.t) + v[1] * pt.t;
                s += pt.weight * f * f;
            }
            s
        };
        assert!((mass(&plain) - direct).abs() < 1e-14);
        // ‖φ‖² = π a² w² for a Gaussian
        assert!((mass(&plain) / (PI * 0.49 * 1.69) - 1.0).abs() < 1e-4);

        let pure = ChargedField::new(RadialField::zeros(g.clone()), 1.0, 1.0).unwrap();
        assert!((mass(&pure) - 1.0 / (4.0 * PI)).abs() < 1e-8);

        let u = ChargedField::new(phi, 0.8, 1.0).unwrap();
        let v = u.redecompose(4.0).unwrap();
        assert!(((mass(&v) - mass(&u)) / mass(&u)).abs() < 1e-6);
    }

    #[test]
    fn q_form_examples() {
        let g = grid(40.0, 2048);
        let phi = gaussian(&g, 1.0, 1.0);
        let u = ChargedField::new(phi.clone(), 0.0, 2.0).unwrap();
        assert!((q_form_sigma(&u, 0.3) - grid::h1_seminorm_sq(&phi)).abs() < 1e-12);

        let sigma = 0.4;
        let pure = ChargedField::new(RadialField::zeros(g.clone()), 1.0, 1.0).unwrap();
        let expect = sigma + specfun::theta(1.0).unwrap() - 1.0 / (4.0 * PI);
        assert!((q_form_sigma(&pure, sigma) - expect).abs() < 1e-6);

        let u = ChargedField::new(phi, 0.5, 1.0).unwrap();
        let v = u.redecompose(4.0).unwrap();
        let (a, b) = (q_form_sigma(&u, sigma), q_form_sigma(&v, sigma));
        assert!(((a - b) / a).abs() < 1e-5, "{a} {b}");
        let (a, b) = (f_single(&u, 3.0, sigma), f_single(&v, 3.0, sigma));
        assert!(((a - b) / a).abs() < 1e-5, "{a} {b}");
    }

    #[test]
    fn f_single_examples() {
        let g = grid(40.0, 2048);
        let zero = ChargedField::zero(g.clone(), 1.0).unwrap();
        assert_eq!(f_single(&zero, 3.0, 0.5), 0.0);

        let phi = gaussian(&g, 1.0, 1.0);
        let u = ChargedField::new(phi.clone(), 0.0, 1.0).unwrap();
        for p in [2.5, 3.0, 3.5] {
            assert!((f_single(&u, p, 0.7) - planar_energy(&phi, p)).abs() < 1e-12);
            // ½π − 2π/p² for e^{−r²/2}
            let exact = 0.5 * PI - 2.0 * PI / (p * p);
            assert!((planar_energy(&phi, p) / exact - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn f_hybrid_examples() {
        let g = grid(20.0, 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_state(&mut rng, &g);
        let p0 = params(2.5, 3.5, 0.2, -0.4, 0.0);
        let sum = f_single(&s.u1, 2.5, 0.2) + f_single(&s.u2, 3.5, -0.4);
        assert_eq!(f_hybrid(&s, &p0), sum);

        let lone = HybridState::new(s.u1.clone(), ChargedField::zero(g.clone(), 1.0).unwrap()).unwrap();
        let p1 = params(2.5, 3.5, 0.2, -0.4, 1.3);
        assert!((f_hybrid(&lone, &p1) - f_single(&s.u1, 2.5, 0.2)).abs() < 1e-14);

        for _ in 0..10 {
            let s = random_state(&mut rng, &g);
            let p = params(3.0, 3.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0));
            let swapped = HybridState::new(s.u2.clone(), s.u1.clone()).unwrap();
            let (q1, q2) = (s.u1.q(), s.u2.q());
            let lhs = f_hybrid(&swapped, &p) - f_hybrid(&s, &p);
            let rhs = 0.5 * (p.sigma2 - p.sigma1) * (q1 * q1 - q2 * q2);
            assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn gradient_vanishes_at_zero() {
        let g = grid(10.0, 256);
        let z = ChargedField::zero(g.clone(), 1.0).unwrap();
        let s = HybridState::new(z.clone(), z).unwrap();
        let grad = grad_f_hybrid(&s, &params(3.0, 3.0, 0.0, 0.0, 1.0));
        assert!(grad.phi1.values().iter().chain(grad.phi2.values()).all(|&v| v == 0.0));
        assert_eq!((grad.q1, grad.q2), (0.0, 0.0));
    }

    fn shifted(s: &HybridState, d: &[Vec<f64>; 2], dq: [f64; 2], eps: f64) -> HybridState {
        let mv = |u: &ChargedField, d: &[f64], dq: f64| {
            let vals: Vec<f64> = u.phi.values().iter().zip(d).map(|(a, b)| a + eps * b).collect();
            ChargedField::with_green(RadialField::new(u.grid().clone(), vals).unwrap(), u.q() + eps * dq, u.green().clone())
                .unwrap()
        };
        HybridState::new(mv(&s.u1, &d[0], dq[0]), mv(&s.u2, &d[1], dq[1])).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = grid(12.0, 512);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for set in [params(3.0, 3.0, 0.0, 0.5, 1.0), params(2.5, 3.5, -0.5, 0.3, 0.4), params(2.2, 3.9, 1.0, -1.0, 2.0)] {
            for _ in 0..20 {
                let s = random_state(&mut rng, &g);
                let d = [random_field(&mut rng, &g).into_values(), random_field(&mut rng, &g).into_values()];
                let dq = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let eps = 1e-5;
                let fd = (f_hybrid(&shifted(&s, &d, dq, eps), &set) - f_hybrid(&shifted(&s, &d, dq, -eps), &set))
                    / (2.0 * eps);
                let an = grad_f_hybrid(&s, &set).directional(&d[0], dq[0], &d[1], dq[1]);
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "fd {fd} analytic {an}");
            }
        }
    }

    #[test]
    fn mass_gradient_matches_central_differences() {
        let g = grid(12.0, 512);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let s = random_state(&mut rng, &g);
            let u = &s.u1;
            let d = random_field(&mut rng, &g).into_values();
            let dq = rng.random_range(-1.0..1.0);
            let mut pg = PlaneGradient { energy_phi: vec![], energy_q: 0.0, mass_phi: vec![], mass_q: 0.0 };
            plane_eval(&g, u.green(), u.phi.values(), u.q(), Some(3.0), 0.0, Some(&mut pg));
            let an: f64 = pg.mass_phi.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() + pg.mass_q * dq;
            let eps = 1e-5;
            let zero = vec![0.0; g.len()];
            let plus = shifted(&s, &[d.clone(), zero.clone()], [dq, 0.0], eps);
            let minus = shifted(&s, &[d.clone(), zero], [dq, 0.0], -eps);
            let fd = (mass(&plus.u1) - mass(&minus.u1)) / (2.0 * eps);
            assert!((fd - an).abs() <= 1e-7 * an.abs().max(1.0));
        }
    }

    #[test]
    fn action_identities() {
        let g = grid(12.0, 512);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = ChargedField::zero(g.clone(), 1.0).unwrap();
        let zero = action_functionals(&HybridState::new(z.clone(), z).unwrap(), &params(3.0, 3.0, 0.0, 0.0, 1.0), 2.0);
        assert_eq!(zero, ActionValues { s_omega: 0.0, i_omega: 0.0, s_tilde: 0.0, a_omega: 0.0, b_omega: 0.0 });
        for _ in 0..50 {
            let s = random_state(&mut rng, &g);
            let p = params(rng.random_range(2.1..3.9), rng.random_range(2.1..3.9), 0.3, -0.2, 0.7);
            let omega = rng.random_range(-2.0..5.0);
            let a = action_functionals(&s, &p, omega);
            let scale = a.s_omega.abs().max(a.i_omega.abs());
            assert!((a.s_omega - 0.5 * a.i_omega - a.s_tilde).abs() <= 1e-12 * scale);
            assert!((a.s_omega - a.i_omega / p.p1 - a.a_omega).abs() <= 1e-12 * scale);
            assert!((a.s_omega - a.i_omega / p.p2 - a.b_omega).abs() <= 1e-12 * scale);
            let f = f_hybrid(&s, &p);
            let m = mass(&s.u1) + mass(&s.u2);
            assert!((a.s_omega - f - 0.5 * omega * m).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn boundary_residual_examples() {
        let g = grid(10.0, 512);
        let p = params(3.0, 3.0, 0.1, -0.3, 0.8);
        let s = HybridState::new(
            ChargedField::new(gaussian(&g, 0.6, 1.0), 0.0, 1.0).unwrap(),
            ChargedField::new(gaussian(&g, -0.2, 1.0), 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let (r1, r2) = boundary_residual(&s, &p);
        assert!((r1 - 0.6).abs() < 1e-6 && (r2 + 0.2).abs() < 1e-6);

        // ground eigenvector of the charge matrix at the eigen-λ
        for (s1, s2, beta) in [(0.0, 0.0, 1.0), (0.0, 1.0, 0.5), (-1.0, 1.0, 2.0)] {
            let t = -(s1 + s2) / 2.0 + (((s1 - s2) / 2.0f64).powi(2) + beta * beta).sqrt();
            let lambda = specfun::lambda_for_theta(t).unwrap();
            let (q1, q2) = (beta, s1 + t);
            let p = params(3.0, 3.0, s1, s2, beta);
            let s = HybridState::new(
                ChargedField::new(RadialField::zeros(g.clone()), q1, lambda).unwrap(),
                ChargedField::new(RadialField::zeros(g.clone()), q2, lambda).unwrap(),
            )
            .unwrap();
            let (r1, r2) = boundary_residual(&s, &p);
            assert!(r1.abs() < 1e-6 && r2.abs() < 1e-6, "{r1} {r2}");
        }
    }

    #[test]
    fn gn_ratio_examples() {
        let g = grid(20.0, 1024);
        let u = ChargedField::new(gaussian(&g, 1.0, 1.0), 0.0, 1.0).unwrap();
        let r = gn_ratio(&u, 3.0, 0.0).unwrap();
        assert!(r.is_finite() && r > 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut ratios = Vec::new();
        for _ in 0..200 {
            let phi = random_field(&mut rng, &g);
            let q = rng.random_range(0.0..1.0);
            let u = ChargedField::new(phi, q, 2.0).unwrap();
            let r = gn_ratio(&u, 3.0, 1.0).unwrap();
            let doubled = ChargedField::new(u.phi.map(|v| 2.0 * v), 2.0 * q, 2.0).unwrap();
            assert!((gn_ratio(&doubled, 3.0, 1.0).unwrap() / r - 1.0).abs() < 1e-12);
            ratios.push(r);
        }
        ratios.sort_by(f64::total_cmp);
        let median = ratios[100];
        assert!(ratios.iter().all(|&r| r < 10.0 * median));

        let pure = ChargedField::new(RadialField::zeros(g), 1.0, 1e-3).unwrap();
        assert!(matches!(gn_ratio(&pure, 3.0, -5.0), Err(EnergyError::Degenerate(_))));
    }

    #[test]
    fn regrid_and_total_field() {
        let g = grid(10.0, 512);
        let u = ChargedField::new(gaussian(&g, 1.0, 1.0), 0.3, 2.0).unwrap();
        let finer = u.regrid(grid(12.0, 1024)).unwrap();
        assert!(((mass(&finer) - mass(&u)) / mass(&u)).abs() < 1e-4);
        let total = u.total_field();
        assert!(total.values()[0] > total.values()[1]);
        let k = 100;
        let expect = u.phi.values()[k] + 0.3 * specfun::green_value(2.0, g.nodes()[k]).unwrap();
        assert!((total.values()[k] - expect).abs() < 1e-14);
    }
}
