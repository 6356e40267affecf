//! Radial discretization of the plane.
//!
//! Functions are sampled on a graded mesh `0 = r_0 < r_1 < … < r_N = R`
//! (geometric cells near the origin, uniform cells further out) and
//! integrated against the planar measure `2π r dr`. The mesh is immutable
//! once built and shared between fields through an [`Arc`].

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

/// Smallest admissible number of cells.
pub const MIN_INTERVALS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("truncation radius must be positive and finite, got {0}")]
    Radius(f64),
    #[error("need at least {MIN_INTERVALS} cells, got {0}")]
    Intervals(usize),
    #[error("grading ratio must be finite and >= 1, got {0}")]
    Grading(f64),
    #[error("graded mesh degenerates (smallest cell {0:e})")]
    Degenerate(f64),
    #[error("field has {got} values but the grid has {expected} nodes")]
    Length { expected: usize, got: usize },
    #[error("field value at node {0} is not finite")]
    NonFinite(usize),
}

/// 8-point Gauss–Legendre rule on `[0, 1]` as `(abscissa, weight)`.
const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (0.019_855_071_751_231_856, 0.050_614_268_145_188_13),
    (0.101_666_761_293_186_63, 0.111_190_517_226_687_24),
    (0.237_233_795_041_835_5, 0.156_853_322_938_943_6),
    (0.408_282_678_752_175_1, 0.181_341_891_689_181),
    (0.591_717_321_247_824_9, 0.181_341_891_689_181),
    (0.762_766_204_958_164_5, 0.156_853_322_938_943_6),
    (0.898_333_238_706_813_4, 0.111_190_517_226_687_24),
    (0.980_144_928_248_768_1, 0.050_614_268_145_188_13),
];

/// Quadrature point of the first-cell rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPoint {
    /// Radius of the point inside `[0, r_1]`.
    pub r: f64,
    /// Position relative to the cell, `r / r_1`; linear interpolation
    /// between the first two nodes uses `1 - t` and `t`.
    pub t: f64,
    /// Weight for `2π ∫ g(r) r dr`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    grading_ratio: f64,
    trapezoid: Vec<f64>,
    simpson: Vec<f64>,
    control_volume: Vec<f64>,
    first_cell: [CellPoint; 8],
    outer: Vec<f64>,
    lumped: Vec<f64>,
}

impl RadialGrid {
    pub fn new(radius: f64, intervals: usize, grading_ratio: f64) -> Result<Self, GridError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GridError::Radius(radius));
        }
        if intervals < MIN_INTERVALS {
            return Err(GridError::Intervals(intervals));
        }
        if !(grading_ratio >= 1.0 && grading_ratio.is_finite()) {
            return Err(GridError::Grading(grading_ratio));
        }

        let mut cells = Vec::with_capacity(intervals);
        if grading_ratio == 1.0 {
            cells.resize(intervals, radius / intervals as f64);
        } else {
            let graded = intervals / 2;
            let uniform = intervals - graded;
            let log_g = grading_ratio.ln();
            // Σ_{j=1}^{graded} g^{-j}
            let sum = -(-(graded as f64) * log_g).exp_m1() / (grading_ratio - 1.0);
            let h_outer = radius / (uniform as f64 + sum);
            for j in 0..graded {
                cells.push(h_outer * (-((graded - j) as f64) * log_g).exp());
            }
            cells.resize(intervals, h_outer);
        }
        if !(cells[0] > 0.0) || !cells[0].is_normal() {
            return Err(GridError::Degenerate(cells[0]));
        }

        let mut nodes = Vec::with_capacity(intervals + 1);
        let mut r = 0.0;
        nodes.push(r);
        for h in &cells {
            r += h;
            nodes.push(r);
        }
        nodes[intervals] = radius;
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GridError::Degenerate(cells[0]));
        }

        let n = intervals;
        let mut trapezoid = vec![0.0; n + 1];
        let mut control_volume = vec![0.0; n + 1];
        for k in 0..n {
            let (a, b) = (nodes[k], nodes[k + 1]);
            let h = b - a;
            trapezoid[k] += PI * a * h;
            trapezoid[k + 1] += PI * b * h;
            let mid = 0.5 * (a + b);
            control_volume[k] += PI * (mid * mid - a * a);
            control_volume[k + 1] += PI * (b * b - mid * mid);
        }

        // Composite Simpson on cell pairs; an odd last cell falls back to the
        // trapezoid. Weights stay positive as long as neighbouring cells
        // differ by less than a factor of two.
        let mut simpson = vec![0.0; n + 1];
        let mut k = 0;
        while k + 2 <= n {
            let (h1, h2) = (nodes[k + 1] - nodes[k], nodes[k + 2] - nodes[k + 1]);
            let span = (h1 + h2) / 6.0;
            simpson[k] += span * (2.0 - h2 / h1);
            simpson[k + 1] += span * (h1 + h2) * (h1 + h2) / (h1 * h2);
            simpson[k + 2] += span * (2.0 - h1 / h2);
            k += 2;
        }
        if k < n {
            let h = nodes[n] - nodes[k];
            simpson[k] += 0.5 * h;
            simpson[n] += 0.5 * h;
        }
        for (w, r) in simpson.iter_mut().zip(&nodes) {
            *w *= 2.0 * PI * r;
        }

        let h0 = nodes[1];
        let first_cell = GAUSS_LEGENDRE_8.map(|(s, w)| {
            // r = h s², dr = 2 h s ds
            let t = s * s;
            CellPoint { r: h0 * t, t, weight: 4.0 * PI * h0 * h0 * w * s * s * s }
        });

        // Trapezoid weights of cells 1..N only; the first cell is covered by
        // the log-adapted rule, whose weights lump onto nodes 0 and 1.
        let mut outer = trapezoid.clone();
        outer[0] = 0.0;
        outer[1] -= PI * h0 * h0;
        let mut lumped = outer.clone();
        for p in &first_cell {
            lumped[0] += p.weight * (1.0 - p.t);
            lumped[1] += p.weight * p.t;
        }

        Ok(Self { nodes, grading_ratio, trapezoid, simpson, control_volume, first_cell, outer, lumped })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of cells `N`; there are `N + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn radius(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn grading_ratio(&self) -> f64 {
        self.grading_ratio
    }

    pub fn cell_width(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    /// Trapezoid weights of `2π ∫ f r dr`; the origin carries weight zero.
    pub fn trapezoid_weights(&self) -> &[f64] {
        &self.trapezoid
    }

    /// Composite Simpson weights of `2π ∫ f r dr`, used by [`integrate`].
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.simpson
    }

    /// Exact areas of the dual cells `[r_{k-1/2}, r_{k+1/2}]`. Used as the
    /// lumped metric of nodal L² gradients.
    pub fn control_volumes(&self) -> &[f64] {
        &self.control_volume
    }

    /// Log-adapted rule on `[0, r_1]` (substitution `r = r_1 s²`, then
    /// 8-point Gauss–Legendre in `s`).
    pub fn first_cell_rule(&self) -> &[CellPoint; 8] {
        &self.first_cell
    }

    /// Trapezoid weights restricted to cells `1..N` (zero at the origin).
    pub fn outer_weights(&self) -> &[f64] {
        &self.outer
    }

    /// Diagonal lumping of the discrete L² form used by the energy: outer
    /// trapezoid weights plus the first-cell rule distributed onto nodes 0
    /// and 1 by linear interpolation.
    pub fn lumped_weights(&self) -> &[f64] {
        &self.lumped
    }

    /// `2π r_{k+1/2} / h_k`: the P1 stiffness coefficient of cell `k`.
    pub fn stiffness(&self, k: usize) -> f64 {
        let h = self.cell_width(k);
        PI * (self.nodes[k] + self.nodes[k + 1]) / h
    }
}

/// Graded radial mesh with `intervals + 1` nodes on `[0, radius]`.
pub fn make_grid(radius: f64, intervals: usize, grading_ratio: f64) -> Result<RadialGrid, GridError> {
    RadialGrid::new(radius, intervals, grading_ratio)
}

/// Real samples of a radial function at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Samples `f` at the nodes. Panics if `f` returns a non-finite value.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values).expect("sampled function must be finite")
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn from_parts(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }
}

/// `2π ∫₀^R f(r) r dr` by composite Simpson on cell pairs.
pub fn integrate(f: &RadialField) -> f64 {
    f.grid.quadrature_weights().iter().zip(&f.values).map(|(w, v)| w * v).sum()
}

/// `‖f‖_p` on the truncated plane.
pub fn lp_norm(f: &RadialField, p: f64) -> f64 {
    debug_assert!(p >= 1.0);
    let sum: f64 = f
        .grid
        .quadrature_weights()
        .iter()
        .zip(&f.values)
        .map(|(w, v)| w * v.abs().powf(p))
        .sum();
    sum.powf(1.0 / p)
}

/// `∫ |∇f|²` for the piecewise-linear interpolant (exact P1 energy).
pub fn h1_seminorm_sq(f: &RadialField) -> f64 {
    h1_seminorm_sq_of(&f.grid, &f.values)
}

pub(crate) fn h1_seminorm_sq_of(grid: &RadialGrid, values: &[f64]) -> f64 {
    values
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let d = w[1] - w[0];
            grid.stiffness(k) * d * d
        })
        .sum()
}

/// Value at `r = 0` from the quadratic through the first three nodes.
pub fn eval_at_origin(f: &RadialField) -> f64 {
    let r = &f.grid.nodes()[..3];
    let v = &f.values[..3];
    // Lagrange basis evaluated at 0.
    let l0 = (r[1] * r[2]) / ((r[0] - r[1]) * (r[0] - r[2]));
    let l1 = (r[0] * r[2]) / ((r[1] - r[0]) * (r[1] - r[2]));
    let l2 = (r[0] * r[1]) / ((r[2] - r[0]) * (r[2] - r[1]));
    l0 * v[0] + l1 * v[1] + l2 * v[2]
}

/// First and second derivative of the quadratic through three nodes,
/// at the middle node (`at_end == false`) or the last node.
fn quadratic_derivatives(r: [f64; 3], f: [f64; 3], at_end: bool) -> (f64, f64) {
    let (h1, h2) = (r[1] - r[0], r[2] - r[1]);
    let (d1, d2) = ((f[1] - f[0]) / h1, (f[2] - f[1]) / h2);
    let second = 2.0 * (d2 - d1) / (h1 + h2);
    let first = if at_end { d2 + 0.5 * h2 * second } else { (h1 * d2 + h2 * d1) / (h1 + h2) };
    (first, second)
}

/// `f'' + f'/r` by three-point differences, exact for quadratics. The origin
/// uses the regular closure `Δf(0) = 2 f''(0)` with `f'(0) = 0`, the outer
/// node a one-sided quadratic.
pub fn radial_laplacian(f: &RadialField) -> RadialField {
    let r = f.grid.nodes();
    let v = &f.values;
    let n = r.len() - 1;
    let mut out = vec![0.0; n + 1];
    let h0 = r[1];
    out[0] = 4.0 * (v[1] - v[0]) / (h0 * h0);
    for k in 1..n {
        let (d1, d2) = quadratic_derivatives([r[k - 1], r[k], r[k + 1]], [v[k - 1], v[k], v[k + 1]], false);
        out[k] = d2 + d1 / r[k];
    }
    let (d1, d2) = quadratic_derivatives([r[n - 2], r[n - 1], r[n]], [v[n - 2], v[n - 1], v[n]], true);
    out[n] = d2 + d1 / r[n];
    RadialField::from_parts(f.grid.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(r: f64, n: usize, g: f64) -> Arc<RadialGrid> {
        Arc::new(make_grid(r, n, g).unwrap())
    }

    #[test]
    fn construction_contract() {
        let uniform = make_grid(40.0, 1024, 1.0).unwrap();
        assert_eq!(uniform.len(), 1025);
        for k in 0..1024 {
            assert!((uniform.cell_width(k) - 40.0 / 1024.0).abs() < 1e-12);
        }
        let graded = make_grid(40.0, 1024, 1.01).unwrap();
        assert_eq!(graded.len(), 1025);
        assert_eq!(graded.nodes()[0], 0.0);
        assert_eq!(graded.radius(), 40.0);
        assert!(graded.cell_width(0) < graded.cell_width(1023));
        assert!(graded.nodes().windows(2).all(|w| w[1] > w[0]));
        for &(n, g) in &[(1024usize, 1.01f64), (2048, 1.01), (4096, 1.01), (2048, 1.03)] {
            let grid = make_grid(40.0, n, g).unwrap();
            let bound = 40.0 * (1.0 - 1.0 / g) / g.powf((n / 2) as f64);
            assert!(grid.cell_width(0) <= bound, "n={n} g={g}");
        }
        // about a third of the nodes resolve r < 1 at the default settings
        let def = make_grid(40.0, 2048, 1.01).unwrap();
        let inner = def.nodes().iter().filter(|&&r| r < 1.0).count() as f64 / 2049.0;
        assert!(inner > 0.3 && inner < 0.5, "{inner}");
    }

    #[test]
    fn invalid_parameters() {
        assert_eq!(make_grid(0.0, 128, 1.0), Err(GridError::Radius(0.0)));
        assert_eq!(make_grid(1.0, 63, 1.0), Err(GridError::Intervals(63)));
        assert_eq!(make_grid(1.0, 128, 0.9), Err(GridError::Grading(0.9)));
        assert!(make_grid(f64::NAN, 128, 1.0).is_err());
        assert!(matches!(make_grid(1.0, 100_000, 2.0), Err(GridError::Degenerate(_))));
        let g = grid(1.0, 64, 1.0);
        assert!(matches!(RadialField::new(g.clone(), vec![0.0; 3]), Err(GridError::Length { .. })));
        let mut v = vec![0.0; 65];
        v[7] = f64::NAN;
        assert_eq!(RadialField::new(g, v), Err(GridError::NonFinite(7)));
    }

    #[test]
    fn gauss_rule_is_exact_for_polynomials() {
        for deg in 0..16 {
            let q: f64 = GAUSS_LEGENDRE_8.iter().map(|(s, w)| w * s.powi(deg)).sum();
            assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-15, "degree {deg}");
        }
        let g = grid(3.0, 256, 1.02);
        let h = g.nodes()[1];
        // 2π ∫₀^h r dr and 2π ∫₀^h r log²(r) dr
        let area: f64 = g.first_cell_rule().iter().map(|p| p.weight).sum();
        assert!((area / (PI * h * h) - 1.0).abs() < 1e-14);
        let lg: f64 = g.first_cell_rule().iter().map(|p| p.weight * p.r.ln().powi(2)).sum();
        let l = h.ln();
        let exact = 2.0 * PI * h * h * (l * l / 2.0 - l / 2.0 + 0.25);
        assert!((lg / exact - 1.0).abs() < 1e-6);
    }

    #[test]
    fn integrate_closed_forms() {
        for &g in &[1.0, 1.01] {
            let one = RadialField::from_fn(grid(40.0, 1024, g), |_| 1.0);
            assert!((integrate(&one) / (PI * 1600.0) - 1.0).abs() < 1e-10);
        }
        let gauss = RadialField::from_fn(grid(40.0, 1024, 1.01), |r| (-r * r).exp());
        assert!((integrate(&gauss) - PI * (1.0 - (-1600.0f64).exp())).abs() < 1e-6);
        let gauss = RadialField::from_fn(grid(40.0, 1024, 1.0), |r| (-r * r).exp());
        assert!((integrate(&gauss) - PI).abs() < 1e-6);
    }

    #[test]
    fn integrate_green_squared() {
        let g = grid(40.0, 4096, 1.01);
        let field = RadialField::from_fn(g, |r| {
            if r == 0.0 {
                0.0
            } else {
                crate::specfun::green_value(1.0, r).unwrap().powi(2)
            }
        });
        let expect = 1.0 / (4.0 * PI);
        assert!((integrate(&field) - expect).abs() < 1e-6, "{}", integrate(&field) - expect);
    }

    #[test]
    fn refinement_order_of_integrate() {
        let f = |r: f64| (-r * r).exp();
        let exact = PI * (1.0 - (-64.0f64).exp());
        let e1 = (integrate(&RadialField::from_fn(grid(8.0, 128, 1.0), f)) - exact).abs();
        let e2 = (integrate(&RadialField::from_fn(grid(8.0, 256, 1.0), f)) - exact).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn lp_norm_basics() {
        let g = grid(5.0, 256, 1.01);
        let c = RadialField::from_fn(g.clone(), |_| -3.0);
        assert!((lp_norm(&c, 2.0) - 3.0 * (PI * 25.0).sqrt()).abs() < 1e-9);
        let f = RadialField::from_fn(g, |r| (1.0 + r).recip());
        let sq = integrate(&f.map(|v| v * v));
        assert!((lp_norm(&f, 2.0).powi(2) - sq).abs() < 1e-12 * sq);
    }

    #[test]
    fn green_lp_norms_converge_under_refinement() {
        // Richardson extrapolation of ‖G₁‖_p^p over three nested meshes.
        let value = |n: usize, p: f64| {
            let g = grid(40.0, n, 1.01);
            let f = RadialField::from_fn(g, |r| {
                if r == 0.0 {
                    0.0
                } else {
                    crate::specfun::green_value(1.0, r).unwrap()
                }
            });
            lp_norm(&f, p).powf(p)
        };
        for &p in &[2.5, 3.0, 3.5] {
            let (a, b, c) = (value(2048, p), value(4096, p), value(8192, p));
            assert!(a.is_finite() && a > 0.0);
            let extrapolated = c + (c - b) / 3.0;
            assert!(((b - extrapolated) / extrapolated).abs() < 1e-4, "p={p}");
        }
    }

    #[test]
    fn h1_seminorm_closed_forms() {
        let g = grid(10.0, 512, 1.0);
        assert_eq!(h1_seminorm_sq(&RadialField::from_fn(g.clone(), |_| 2.5)), 0.0);
        let lin = RadialField::from_fn(g, |r| r);
        assert!((h1_seminorm_sq(&lin) / (PI * 100.0) - 1.0).abs() < 1e-10);
        // ‖∇ e^{-r²/2}‖² = 2π ∫ r³ e^{-r²} dr = π on the whole plane.
        let coarse = RadialField::from_fn(grid(12.0, 2048, 1.01), |r| (-0.5 * r * r).exp());
        let fine = RadialField::from_fn(grid(12.0, 8192, 1.01), |r| (-0.5 * r * r).exp());
        let (a, b) = (h1_seminorm_sq(&coarse), h1_seminorm_sq(&fine));
        assert!((a - PI).abs() < 1e-5, "{}", a - PI);
        assert!((b - PI).abs() < (a - PI).abs());
    }

    #[test]
    fn origin_value() {
        let g = grid(4.0, 2048, 1.01);
        assert!((eval_at_origin(&RadialField::from_fn(g.clone(), |_| 1.25)) - 1.25).abs() < 1e-14);
        let q = RadialField::from_fn(g.clone(), |r| 1.0 - r * r);
        assert!((eval_at_origin(&q) - 1.0).abs() < 1e-10);
        let c = RadialField::from_fn(g, f64::cos);
        assert!((eval_at_origin(&c) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn laplacian_cases() {
        for &gr in &[1.0, 1.01] {
            let g = grid(5.0, 1024, gr);
            let sq = radial_laplacian(&RadialField::from_fn(g.clone(), |r| r * r));
            for k in 0..g.len() {
                assert!((sq.values()[k] - 4.0).abs() < 1e-8, "node {k}");
            }
            let c = radial_laplacian(&RadialField::from_fn(g, |_| 3.0));
            assert!(c.values().iter().all(|v| v.abs() < 1e-9));
        }
        // Default mesh. Within ~1e-4 of the origin the cells are so small that
        // rounding (ε/h²) dominates the truncation error; those nodes get a
        // looser bound.
        let g = grid(40.0, 2048, 1.01);
        let f = RadialField::from_fn(g.clone(), |r| (-0.5 * r * r).exp());
        let lap = radial_laplacian(&f);
        let (mut far, mut near) = (0.0f64, 0.0f64);
        for k in 1..g.intervals() {
            let r = g.nodes()[k];
            let err = (lap.values()[k] - (r * r - 2.0) * (-0.5 * r * r).exp()).abs();
            if r >= 1e-4 {
                far = far.max(err);
            } else {
                near = near.max(err);
            }
        }
        assert!(far < 1e-4, "{far}");
        assert!(near < 1e-3, "{near}");
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn shared_grid() -> Arc<RadialGrid> {
        Arc::new(make_grid(6.0, 128, 1.02).unwrap())
    }

    fn field_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 129)
    }

    proptest! {
        #[test]
        fn integrate_is_linear_and_monotone(a in field_strategy(), b in field_strategy(), s in -3.0f64..3.0) {
            let g = shared_grid();
            let fa = RadialField::new(g.clone(), a.clone()).unwrap();
            let fb = RadialField::new(g.clone(), b.clone()).unwrap();
            let comb: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
            let fc = RadialField::new(g.clone(), comb).unwrap();
            let lhs = integrate(&fc);
            let rhs = integrate(&fa) + s * integrate(&fb);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            let hi: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
            let fh = RadialField::new(g, hi).unwrap();
            prop_assert!(integrate(&fh) >= integrate(&fa) - 1e-12);
        }

        #[test]
        fn lp_triangle_inequality(a in field_strategy(), b in field_strategy()) {
            let g = shared_grid();
            let fa = RadialField::new(g.clone(), a.clone()).unwrap();
            let fb = RadialField::new(g.clone(), b.clone()).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let fs = RadialField::new(g, sum).unwrap();
            for p in [2.0, 3.0] {
                prop_assert!(lp_norm(&fs, p) <= lp_norm(&fa, p) + lp_norm(&fb, p) + 1e-12);
            }
        }

        #[test]
        fn h1_vanishes_only_on_constants(a in field_strategy(), c in -4.0f64..4.0) {
            let g = shared_grid();
            let constant = RadialField::new(g.clone(), vec![c; 129]).unwrap();
            prop_assert_eq!(h1_seminorm_sq(&constant), 0.0);
            let f = RadialField::new(g, a.clone()).unwrap();
            let is_constant = a.windows(2).all(|w| w[0] == w[1]);
            prop_assert_eq!(h1_seminorm_sq(&f) == 0.0, is_constant);
        }
    }
}
