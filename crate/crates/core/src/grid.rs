//! Discrete calculus on the uniform pixel mesh.
//!
//! Images live in the space of cell-wise constant functions ([`CellField`]);
//! dual variables live in the lowest-order Raviart-Thomas space with vanishing
//! normal trace on the domain boundary ([`EdgeField`], one degree of freedom
//! per interior edge). This module provides the divergence operator, its
//! inner-product adjoint, the mesh inner products, and nodal interpolation of
//! cut-off-weighted edge fields.
//!
//! Index conventions (fixed so the stencils below are reproducible bit for
//! bit):
//! * cells `(i, j)` with `i` in `[0, m1)` (x direction) and `j` in `[0, m2)`,
//!   stored at `j * m1 + i`;
//! * vertical edges (normal along +x) between cells `(i, j)` and `(i+1, j)`,
//!   `i` in `[0, m1-1)`, stored at `j * (m1-1) + i`;
//! * horizontal edges (normal along +y) between cells `(i, j)` and
//!   `(i, j+1)`, `i` in `[0, m1)`, `j` in `[0, m2-1)`, stored at `j * m1 + i`;
//! * vertices `(vi, vj)` with `vi` in `[0, m1]`, `vj` in `[0, m2]`, stored at
//!   `vj * (m1+1) + vi`.
//!
//! Boundary edges are not stored: the normal-trace condition is built into
//! the data layout and cannot be violated.
//!
//! All reductions (inner products, norms) run in a fixed left-to-right order
//! over the canonical index order, so results are identical for any thread
//! count.

use crate::error::{Error, Result};

/// A uniform rectangular mesh of `m1 x m2` square cells with side `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    /// Cell count along x (image width).
    pub m1: usize,
    /// Cell count along y (image height).
    pub m2: usize,
    /// Mesh size (cell side length).
    pub h: f64,
}

impl GridGeometry {
    pub fn new(m1: usize, m2: usize, h: f64) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::Config(format!(
                "grid must have at least one cell per direction, got {m1}x{m2}"
            )));
        }
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::Config(format!("mesh size must be positive, got {h}")));
        }
        Ok(GridGeometry { m1, m2, h })
    }

    /// Unit mesh (`h = 1`), the setting used by all experiments.
    pub fn unit(m1: usize, m2: usize) -> Result<Self> {
        GridGeometry::new(m1, m2, 1.0)
    }

    pub fn cell_count(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn x_edge_count(&self) -> usize {
        (self.m1 - 1) * self.m2
    }

    pub fn y_edge_count(&self) -> usize {
        self.m1 * (self.m2 - 1)
    }

    /// Interior edge count `(m1-1) m2 + m1 (m2-1)`.
    pub fn edge_count(&self) -> usize {
        self.x_edge_count() + self.y_edge_count()
    }

    pub fn vertex_count(&self) -> usize {
        (self.m1 + 1) * (self.m2 + 1)
    }

    /// Domain area `m1 * m2 * h^2`.
    pub fn area(&self) -> f64 {
        self.m1 as f64 * self.m2 as f64 * self.h * self.h
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.m1 && j < self.m2);
        j * self.m1 + i
    }

    #[inline]
    pub fn x_edge_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + 1 < self.m1 && j < self.m2);
        j * (self.m1 - 1) + i
    }

    #[inline]
    pub fn y_edge_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.m1 && j + 1 < self.m2);
        j * self.m1 + i
    }

    #[inline]
    pub fn vertex_index(&self, vi: usize, vj: usize) -> usize {
        debug_assert!(vi <= self.m1 && vj <= self.m2);
        vj * (self.m1 + 1) + vi
    }
}

fn check_same(a: GridGeometry, b: GridGeometry) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::geometry_mismatch(a, b))
    }
}

/// Fixed-order dot product of two equally sized slices.
#[inline]
fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// A cell-wise constant scalar field (one value per pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl CellField {
    /// Validating constructor: checks the value count and finiteness.
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.cell_count() {
            return Err(Error::Config(format!(
                "cell field needs {} values, got {}",
                geometry.cell_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cell field values"));
        }
        Ok(CellField { geometry, values })
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        CellField {
            geometry,
            values: vec![0.0; geometry.cell_count()],
        }
    }

    pub fn constant(geometry: GridGeometry, value: f64) -> Self {
        CellField {
            geometry,
            values: vec![value; geometry.cell_count()],
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.geometry.cell_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.geometry.cell_index(i, j);
        self.values[idx] = value;
    }

    /// `self += alpha * other` (same geometry required by the caller).
    pub fn axpy(&mut self, alpha: f64, other: &CellField) {
        debug_assert_eq!(self.geometry, other.geometry);
        for (v, w) in self.values.iter_mut().zip(&other.values) {
            *v += alpha * w;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    /// Mesh inner product `<u, v> = h^2 sum_T u_T v_T`.
    pub fn dot(&self, other: &CellField) -> Result<f64> {
        check_same(self.geometry, other.geometry)?;
        Ok(self.geometry.h * self.geometry.h * dot_slices(&self.values, &other.values))
    }

    pub(crate) fn dot_unchecked(&self, other: &CellField) -> f64 {
        debug_assert_eq!(self.geometry, other.geometry);
        self.geometry.h * self.geometry.h * dot_slices(&self.values, &other.values)
    }

    /// Induced norm; agrees with the L2 norm of the piecewise-constant field.
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.geometry.h * self.geometry.h * dot_slices(&self.values, &self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Adjoint of the divergence (the negative discrete gradient):
    /// `(div* u)^x_{i,j} = (u_{i,j} - u_{i+1,j}) / h`,
    /// `(div* u)^y_{i,j} = (u_{i,j} - u_{i,j+1}) / h`.
    ///
    /// The orientation is pinned by the adjointness identity
    /// `<div p, u> = <p, div* u>`, which the tests verify by direct summation.
    pub fn divergence_adjoint(&self) -> EdgeField {
        let mut out = EdgeField::zeros(self.geometry);
        self.divergence_adjoint_into(&mut out);
        out
    }

    pub fn divergence_adjoint_into(&self, out: &mut EdgeField) {
        debug_assert_eq!(self.geometry, out.geometry);
        let g = self.geometry;
        let inv_h = 1.0 / g.h;
        for j in 0..g.m2 {
            let row = &self.values[j * g.m1..(j + 1) * g.m1];
            let out_row = &mut out.x[j * (g.m1 - 1)..(j + 1) * (g.m1 - 1)];
            for i in 0..g.m1 - 1 {
                out_row[i] = (row[i] - row[i + 1]) * inv_h;
            }
        }
        for j in 0..g.m2 - 1 {
            let row = &self.values[j * g.m1..(j + 1) * g.m1];
            let next = &self.values[(j + 1) * g.m1..(j + 2) * g.m1];
            let out_row = &mut out.y[j * g.m1..(j + 1) * g.m1];
            for i in 0..g.m1 {
                out_row[i] = (row[i] - next[i]) * inv_h;
            }
        }
    }
}

/// A dual vector field in the lowest-order Raviart-Thomas space: one scalar
/// degree of freedom (average normal component) per interior edge. Boundary
/// edges carry an implicit zero and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    geometry: GridGeometry,
    /// Vertical edges, normal along +x.
    x: Vec<f64>,
    /// Horizontal edges, normal along +y.
    y: Vec<f64>,
}

impl EdgeField {
    pub fn new(geometry: GridGeometry, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != geometry.x_edge_count() || y.len() != geometry.y_edge_count() {
            return Err(Error::Config(format!(
                "edge field needs {}+{} values, got {}+{}",
                geometry.x_edge_count(),
                geometry.y_edge_count(),
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("edge field values"));
        }
        Ok(EdgeField { geometry, x, y })
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        EdgeField {
            geometry,
            x: vec![0.0; geometry.x_edge_count()],
            y: vec![0.0; geometry.y_edge_count()],
        }
    }

    pub fn constant(geometry: GridGeometry, value: f64) -> Self {
        EdgeField {
            geometry,
            x: vec![value; geometry.x_edge_count()],
            y: vec![value; geometry.y_edge_count()],
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    #[inline]
    pub fn at_x(&self, i: usize, j: usize) -> f64 {
        self.x[self.geometry.x_edge_index(i, j)]
    }

    #[inline]
    pub fn at_y(&self, i: usize, j: usize) -> f64 {
        self.y[self.geometry.y_edge_index(i, j)]
    }

    #[inline]
    pub fn set_x(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.geometry.x_edge_index(i, j);
        self.x[idx] = value;
    }

    #[inline]
    pub fn set_y(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.geometry.y_edge_index(i, j);
        self.y[idx] = value;
    }

    pub fn dof_count(&self) -> usize {
        self.x.len() + self.y.len()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &EdgeField) {
        debug_assert_eq!(self.geometry, other.geometry);
        for (v, w) in self.x.iter_mut().zip(&other.x) {
            *v += alpha * w;
        }
        for (v, w) in self.y.iter_mut().zip(&other.y) {
            *v += alpha * w;
        }
    }

    /// Overwrite with `other`, reusing the existing storage.
    pub fn copy_from(&mut self, other: &EdgeField) {
        debug_assert_eq!(self.geometry, other.geometry);
        self.x.copy_from_slice(&other.x);
        self.y.copy_from_slice(&other.y);
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.x.iter_mut().chain(self.y.iter_mut()) {
            *v *= alpha;
        }
    }

    /// Mesh inner product `<p, q> = h^2 sum_e p_e q_e` (x edges first, then
    /// y edges, each in storage order).
    pub fn dot(&self, other: &EdgeField) -> Result<f64> {
        check_same(self.geometry, other.geometry)?;
        let s = dot_slices(&self.x, &other.x) + dot_slices(&self.y, &other.y);
        Ok(self.geometry.h * self.geometry.h * s)
    }

    pub(crate) fn dot_unchecked(&self, other: &EdgeField) -> f64 {
        debug_assert_eq!(self.geometry, other.geometry);
        let s = dot_slices(&self.x, &other.x) + dot_slices(&self.y, &other.y);
        self.geometry.h * self.geometry.h * s
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        let s = dot_slices(&self.x, &self.x) + dot_slices(&self.y, &self.y);
        self.geometry.h * self.geometry.h * s
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(self.y.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise projection onto the feasible set C: clamp every degree of
    /// freedom to `[-1, 1]`. This is the nearest point of C in the mesh norm.
    pub fn project_feasible(&mut self) {
        for v in self.x.iter_mut().chain(self.y.iter_mut()) {
            *v = v.clamp(-1.0, 1.0);
        }
    }

    pub fn projected_feasible(mut self) -> EdgeField {
        self.project_feasible();
        self
    }

    pub fn is_feasible(&self) -> bool {
        self.x
            .iter()
            .chain(self.y.iter())
            .all(|v| v.is_finite() && v.abs() <= 1.0)
    }

    /// Discrete divergence: per cell
    /// `(div p)_{i,j} = (pX_{i,j} - pX_{i-1,j} + pY_{i,j} - pY_{i,j-1}) / h`,
    /// where out-of-range edge indices contribute zero (boundary condition).
    pub fn divergence(&self) -> CellField {
        let mut out = CellField::zeros(self.geometry);
        self.divergence_into(&mut out);
        out
    }

    pub fn divergence_into(&self, out: &mut CellField) {
        debug_assert_eq!(self.geometry, out.geometry);
        let g = self.geometry;
        let inv_h = 1.0 / g.h;
        for j in 0..g.m2 {
            let out_row = &mut out.values[j * g.m1..(j + 1) * g.m1];
            let x_row = &self.x[j * (g.m1 - 1)..(j + 1) * (g.m1 - 1)];
            for i in 0..g.m1 {
                let mut acc = 0.0;
                if i + 1 < g.m1 {
                    acc += x_row[i];
                }
                if i > 0 {
                    acc -= x_row[i - 1];
                }
                out_row[i] = acc;
            }
            if j + 1 < g.m2 {
                let y_row = &self.y[j * g.m1..(j + 1) * g.m1];
                for i in 0..g.m1 {
                    out_row[i] += y_row[i];
                }
            }
            if j > 0 {
                let y_prev = &self.y[(j - 1) * g.m1..j * g.m1];
                for i in 0..g.m1 {
                    out_row[i] -= y_prev[i];
                }
            }
            for v in out_row {
                *v *= inv_h;
            }
        }
    }
}

/// A continuous, piecewise (bi)linear cut-off function given by its values at
/// mesh vertices, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffFunction {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl CutoffFunction {
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.vertex_count() {
            return Err(Error::Config(format!(
                "cutoff needs {} vertex values, got {}",
                geometry.vertex_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(
                "cutoff values must lie in [0, 1]".to_string(),
            ));
        }
        Ok(CutoffFunction { geometry, values })
    }

    pub fn constant_one(geometry: GridGeometry) -> Self {
        CutoffFunction {
            geometry,
            values: vec![1.0; geometry.vertex_count()],
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at_vertex(&self, vi: usize, vj: usize) -> f64 {
        self.values[self.geometry.vertex_index(vi, vj)]
    }

    /// Max-norm of the gradient of the bilinear interpolant. For a bilinear
    /// function each gradient component is a convex combination of
    /// differences along cell edges, so the maximum adjacent-vertex
    /// difference divided by `h` is exact.
    pub fn max_gradient(&self) -> f64 {
        let g = self.geometry;
        let mut m: f64 = 0.0;
        for vj in 0..=g.m2 {
            for vi in 0..g.m1 {
                let d = (self.at_vertex(vi + 1, vj) - self.at_vertex(vi, vj)).abs();
                m = m.max(d);
            }
        }
        for vj in 0..g.m2 {
            for vi in 0..=g.m1 {
                let d = (self.at_vertex(vi, vj + 1) - self.at_vertex(vi, vj)).abs();
                m = m.max(d);
            }
        }
        m / g.h
    }
}

/// Nodal interpolation of the cut-off-weighted field: per edge the result is
/// `(p)_e` times the mean of `theta` along that edge. Since the normal
/// component of an RT0 field is constant along each edge and `theta` is
/// linear along it, the mean equals the average of the two endpoint values
/// (exact, no quadrature).
pub fn interpolate_cutoff(theta: &CutoffFunction, p: &EdgeField) -> Result<EdgeField> {
    check_same(theta.geometry, p.geometry)?;
    let g = p.geometry;
    let mut out = EdgeField::zeros(g);
    for j in 0..g.m2 {
        for i in 0..g.m1 - 1 {
            // Vertical edge between cells (i, j) and (i+1, j): endpoints are
            // vertices (i+1, j) and (i+1, j+1).
            let mean = 0.5 * (theta.at_vertex(i + 1, j) + theta.at_vertex(i + 1, j + 1));
            out.x[g.x_edge_index(i, j)] = p.x[g.x_edge_index(i, j)] * mean;
        }
    }
    for j in 0..g.m2 - 1 {
        for i in 0..g.m1 {
            // Horizontal edge between cells (i, j) and (i, j+1): endpoints
            // are vertices (i, j+1) and (i+1, j+1).
            let mean = 0.5 * (theta.at_vertex(i, j + 1) + theta.at_vertex(i + 1, j + 1));
            out.y[g.y_edge_index(i, j)] = p.y[g.y_edge_index(i, j)] * mean;
        }
    }
    Ok(out)
}

/// Returns `(||div p||^2, (8/h^2) ||p||^2)`; the inverse inequality asserts
/// that the first never exceeds the second.
pub fn inverse_inequality_check(p: &EdgeField) -> (f64, f64) {
    let lhs = p.divergence().norm_squared();
    let h = p.geometry.h;
    let rhs = 8.0 / (h * h) * p.norm_squared();
    (lhs, rhs)
}

/// Discrete curl of a vertex potential: the edge field whose degrees of
/// freedom are tangential differences of `phi` along each edge. Boundary
/// vertices are treated as zero, which makes the divergence of the result
/// vanish identically (up to round-off) and keeps the normal-trace
/// condition intact; this is the natural generator of low-divergence
/// samples for decomposition audits.
pub fn vertex_curl(geometry: GridGeometry, phi: &[f64]) -> Result<EdgeField> {
    if phi.len() != geometry.vertex_count() {
        return Err(Error::Config(format!(
            "vertex potential needs {} values, got {}",
            geometry.vertex_count(),
            phi.len()
        )));
    }
    let g = geometry;
    let value = |vi: usize, vj: usize| -> f64 {
        if vi == 0 || vj == 0 || vi == g.m1 || vj == g.m2 {
            0.0
        } else {
            phi[g.vertex_index(vi, vj)]
        }
    };
    let mut out = EdgeField::zeros(g);
    for j in 0..g.m2 {
        for i in 0..g.m1 - 1 {
            out.x[g.x_edge_index(i, j)] = value(i + 1, j + 1) - value(i + 1, j);
        }
    }
    for j in 0..g.m2 - 1 {
        for i in 0..g.m1 {
            out.y[g.y_edge_index(i, j)] = -(value(i + 1, j + 1) - value(i, j + 1));
        }
    }
    Ok(out)
}
