//! Dual objectives for total variation restoration.
//!
//! Both models minimize `F*(div p)` over the box-constrained edge field `p`:
//!
//! * quadratic fidelity (`Rof`): `F*(v) = (1/2 lambda) ||v + lambda f||^2`,
//!   so the dual energy is `(1/2 lambda) ||div p + lambda f||^2`;
//! * inverse-Laplacian fidelity (`TvH1`): `F*(v) = (1/2 lambda) <K v, v>
//!   + <f, v>` with `K` the 5-point Dirichlet Laplacian.
//!
//! The module also provides the Bregman distance of the dual energy, primal
//! recovery, the discrete primal energy (total variation defined as the
//! support function of the constraint set, so strong duality is exact at the
//! discrete level) and the resulting duality gap.

use crate::error::{Error, Result};
use crate::grid::{CellField, EdgeField, GridGeometry};

/// Which fidelity term the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Quadratic fidelity `(lambda/2) ||u - f||^2`.
    Rof,
    /// Negative-order fidelity `(lambda/2) ||u - f||^2_{K^{-1}}`.
    TvH1,
}

/// A dual objective: energy, gradient, Lipschitz constant and primal
/// recovery rule for one model instance (fidelity weight and observed
/// image).
#[derive(Debug, Clone)]
pub struct EnergyModel {
    kind: ModelKind,
    lambda: f64,
    f: CellField,
}

/// Relative residual used when the inverse Laplacian shows up in
/// diagnostics; it never enters the iteration itself.
const INNER_SOLVE_REL_TOL: f64 = 1e-12;

impl EnergyModel {
    pub fn new(kind: ModelKind, lambda: f64, f: CellField) -> Result<Self> {
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "fidelity weight must be positive, got {lambda}"
            )));
        }
        Ok(EnergyModel { kind, lambda, f })
    }

    pub fn rof(lambda: f64, f: CellField) -> Result<Self> {
        EnergyModel::new(ModelKind::Rof, lambda, f)
    }

    pub fn tv_h1(lambda: f64, f: CellField) -> Result<Self> {
        EnergyModel::new(ModelKind::TvH1, lambda, f)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The observed image `f`.
    pub fn data(&self) -> &CellField {
        &self.f
    }

    pub fn geometry(&self) -> GridGeometry {
        self.f.geometry()
    }

    fn check_edge(&self, p: &EdgeField) -> Result<()> {
        if p.geometry() == self.geometry() {
            Ok(())
        } else {
            Err(Error::geometry_mismatch(self.geometry(), p.geometry()))
        }
    }

    fn check_cell(&self, u: &CellField) -> Result<()> {
        if u.geometry() == self.geometry() {
            Ok(())
        } else {
            Err(Error::geometry_mismatch(self.geometry(), u.geometry()))
        }
    }

    /// Lipschitz constant of the dual gradient: `8 / (lambda h^2)` for the
    /// quadratic model and `64 / (lambda h^4)` for the inverse-Laplacian
    /// model (the inverse inequality gives `||div||^2 <= 8/h^2`, and
    /// Gershgorin bounds the Laplacian spectrum by `8/h^2`). At `h = 1`
    /// these are `8/lambda` and `64/lambda`.
    pub fn lipschitz_constant(&self) -> f64 {
        let h2 = self.geometry().h * self.geometry().h;
        match self.kind {
            ModelKind::Rof => 8.0 / (self.lambda * h2),
            ModelKind::TvH1 => 64.0 / (self.lambda * h2 * h2),
        }
    }

    /// Strong convexity modulus of the primal fidelity `F`.
    pub fn strong_convexity_alpha(&self) -> f64 {
        match self.kind {
            ModelKind::Rof => self.lambda,
            ModelKind::TvH1 => self.lambda / laplacian_eigenvalue_max(self.geometry()),
        }
    }

    /// Lipschitz constant of `F'`; `1/(2 beta)` scales the sufficient
    /// decrease audit of the Schwarz iteration.
    pub fn gradient_lipschitz_beta(&self) -> f64 {
        match self.kind {
            ModelKind::Rof => self.lambda,
            ModelKind::TvH1 => self.lambda / laplacian_eigenvalue_min(self.geometry()),
        }
    }

    /// The model constant in `primal + dual - offset = duality gap`:
    /// `(lambda/2) ||f||^2` for the quadratic model (whose dual energy
    /// carries that additive shift), zero for the inverse-Laplacian model.
    pub fn gap_offset(&self) -> f64 {
        match self.kind {
            ModelKind::Rof => 0.5 * self.lambda * self.f.norm_squared(),
            ModelKind::TvH1 => 0.0,
        }
    }

    /// Dual energy `F*(div p)`.
    pub fn dual_energy(&self, p: &EdgeField) -> Result<f64> {
        self.check_edge(p)?;
        let mut a = CellField::zeros(self.geometry());
        let mut b = CellField::zeros(self.geometry());
        Ok(self.dual_energy_buffered(p, &mut a, &mut b))
    }

    pub(crate) fn dual_energy_buffered(
        &self,
        p: &EdgeField,
        a: &mut CellField,
        b: &mut CellField,
    ) -> f64 {
        p.divergence_into(a);
        match self.kind {
            ModelKind::Rof => {
                a.axpy(self.lambda, &self.f);
                0.5 / self.lambda * a.norm_squared()
            }
            ModelKind::TvH1 => {
                apply_laplacian_into(a, b);
                0.5 / self.lambda * b.dot_unchecked(a) + self.f.dot_unchecked(a)
            }
        }
    }

    /// Gradient of the dual energy:
    /// `div*((div p + lambda f) / lambda)` for the quadratic model,
    /// `div*((K div p + lambda f) / lambda)` for the inverse-Laplacian one.
    pub fn dual_gradient(&self, p: &EdgeField) -> Result<EdgeField> {
        self.check_edge(p)?;
        let mut out = EdgeField::zeros(self.geometry());
        let mut a = CellField::zeros(self.geometry());
        let mut b = CellField::zeros(self.geometry());
        self.dual_gradient_buffered(p, &mut out, &mut a, &mut b);
        Ok(out)
    }

    pub(crate) fn dual_gradient_buffered(
        &self,
        p: &EdgeField,
        out: &mut EdgeField,
        a: &mut CellField,
        b: &mut CellField,
    ) {
        p.divergence_into(a);
        let v = match self.kind {
            ModelKind::Rof => a,
            ModelKind::TvH1 => {
                apply_laplacian_into(a, b);
                b
            }
        };
        v.axpy(self.lambda, &self.f);
        v.scale(1.0 / self.lambda);
        v.divergence_adjoint_into(out);
    }

    /// The conjugate fidelity `F*` evaluated on a cell field (the dual
    /// energy is `F*` composed with the divergence).
    pub fn conjugate_value(&self, v: &CellField) -> Result<f64> {
        self.check_cell(v)?;
        match self.kind {
            ModelKind::Rof => {
                let mut w = v.clone();
                w.axpy(self.lambda, &self.f);
                Ok(0.5 / self.lambda * w.norm_squared())
            }
            ModelKind::TvH1 => {
                let kv = apply_laplacian(v);
                Ok(0.5 / self.lambda * kv.dot_unchecked(v) + self.f.dot_unchecked(v))
            }
        }
    }

    /// Derivative of the conjugate fidelity.
    pub fn conjugate_gradient(&self, v: &CellField) -> Result<CellField> {
        self.check_cell(v)?;
        let mut out = match self.kind {
            ModelKind::Rof => v.clone(),
            ModelKind::TvH1 => apply_laplacian(v),
        };
        out.axpy(self.lambda, &self.f);
        out.scale(1.0 / self.lambda);
        Ok(out)
    }

    /// Bregman distance of the dual energy,
    /// `D(p, q) = F(p) - F(q) - <F'(q), p - q>`; nonnegative by convexity.
    pub fn bregman_distance(&self, p: &EdgeField, q: &EdgeField) -> Result<f64> {
        self.check_edge(p)?;
        self.check_edge(q)?;
        let grad_q = self.dual_gradient(q)?;
        let mut diff = p.clone();
        diff.axpy(-1.0, q);
        Ok(self.dual_energy(p)? - self.dual_energy(q)? - grad_q.dot_unchecked(&diff))
    }

    /// Primal recovery: `u = f + div p / lambda` (quadratic) or
    /// `u = f + K div p / lambda` (inverse-Laplacian).
    pub fn recover_primal(&self, p: &EdgeField) -> Result<CellField> {
        self.check_edge(p)?;
        let div = p.divergence();
        let mut u = self.f.clone();
        match self.kind {
            ModelKind::Rof => u.axpy(1.0 / self.lambda, &div),
            ModelKind::TvH1 => u.axpy(1.0 / self.lambda, &apply_laplacian(&div)),
        }
        Ok(u)
    }

    /// Discrete primal energy `F(u) + TV(u)`, with the total variation
    /// defined as the support function of the constraint set (the
    /// anisotropic edge-jump sum), so the duality gap vanishes exactly at
    /// the discrete optimum.
    pub fn primal_energy(&self, u: &CellField) -> Result<f64> {
        self.check_cell(u)?;
        let mut diff = u.clone();
        diff.axpy(-1.0, &self.f);
        let fidelity = match self.kind {
            ModelKind::Rof => 0.5 * self.lambda * diff.norm_squared(),
            ModelKind::TvH1 => {
                let v = invert_laplacian(&diff, INNER_SOLVE_REL_TOL, 16 * diff.geometry().cell_count());
                0.5 * self.lambda * v.dot_unchecked(&diff)
            }
        };
        Ok(fidelity + total_variation(u))
    }

    /// `primal(recover(p)) + dual(p) - offset`; nonnegative up to round-off,
    /// zero exactly at optimality.
    pub fn duality_gap(&self, p: &EdgeField) -> Result<f64> {
        let u = self.recover_primal(p)?;
        let gap = self.primal_energy(&u)? + self.dual_energy(p)? - self.gap_offset();
        if !gap.is_finite() {
            return Err(Error::NonFinite("duality gap"));
        }
        Ok(gap)
    }
}

/// 5-point approximation of the negative Laplacian with the homogeneous
/// essential boundary condition:
/// `(K u)_{i,j} = (4 u_{i,j} - u_{i-1,j} - u_{i+1,j} - u_{i,j-1} - u_{i,j+1}) / h^2`
/// with out-of-range neighbors equal to zero.
pub fn apply_laplacian(u: &CellField) -> CellField {
    let mut out = CellField::zeros(u.geometry());
    apply_laplacian_into(u, &mut out);
    out
}

pub fn apply_laplacian_into(u: &CellField, out: &mut CellField) {
    let g = u.geometry();
    debug_assert_eq!(g, out.geometry());
    let inv_h2 = 1.0 / (g.h * g.h);
    let vals = u.values();
    let out_vals = out.values_mut();
    for j in 0..g.m2 {
        for i in 0..g.m1 {
            let idx = j * g.m1 + i;
            let mut acc = 4.0 * vals[idx];
            if i > 0 {
                acc -= vals[idx - 1];
            }
            if i + 1 < g.m1 {
                acc -= vals[idx + 1];
            }
            if j > 0 {
                acc -= vals[idx - g.m1];
            }
            if j + 1 < g.m2 {
                acc -= vals[idx + g.m1];
            }
            out_vals[idx] = acc * inv_h2;
        }
    }
}

/// Smallest eigenvalue of the 5-point Dirichlet Laplacian on the mesh.
pub fn laplacian_eigenvalue_min(g: GridGeometry) -> f64 {
    laplacian_eigenvalue(g, 1, 1)
}

/// Largest eigenvalue of the 5-point Dirichlet Laplacian on the mesh.
pub fn laplacian_eigenvalue_max(g: GridGeometry) -> f64 {
    laplacian_eigenvalue(g, g.m1, g.m2)
}

fn laplacian_eigenvalue(g: GridGeometry, i: usize, j: usize) -> f64 {
    let sx = (std::f64::consts::PI * i as f64 / (2.0 * (g.m1 as f64 + 1.0))).sin();
    let sy = (std::f64::consts::PI * j as f64 / (2.0 * (g.m2 as f64 + 1.0))).sin();
    4.0 / (g.h * g.h) * (sx * sx + sy * sy)
}

/// Solve `K v = b` by conjugate gradients to the given relative residual.
pub fn invert_laplacian(b: &CellField, rel_tol: f64, max_iterations: usize) -> CellField {
    let g = b.geometry();
    let mut v = CellField::zeros(g);
    let mut r = b.clone();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return v;
    }
    let mut d = r.clone();
    let mut kd = CellField::zeros(g);
    let mut rs = r.dot_unchecked(&r);
    for _ in 0..max_iterations {
        apply_laplacian_into(&d, &mut kd);
        let alpha = rs / d.dot_unchecked(&kd);
        v.axpy(alpha, &d);
        r.axpy(-alpha, &kd);
        let rs_new = r.dot_unchecked(&r);
        if rs_new.sqrt() <= rel_tol * b_norm {
            break;
        }
        let beta = rs_new / rs;
        d.scale(beta);
        d.axpy(1.0, &r);
        rs = rs_new;
    }
    v
}

/// Discrete total variation: `h` times the sum of absolute jumps across
/// interior edges. This is the support function of the constraint set under
/// the duality pairing `<u, div p>`.
pub fn total_variation(u: &CellField) -> f64 {
    let g = u.geometry();
    let mut acc = 0.0;
    for j in 0..g.m2 {
        for i in 0..g.m1 - 1 {
            acc += (u.at(i, j) - u.at(i + 1, j)).abs();
        }
    }
    for j in 0..g.m2 - 1 {
        for i in 0..g.m1 {
            acc += (u.at(i, j) - u.at(i, j + 1)).abs();
        }
    }
    g.h * acc
}
