//! Overlapping checkerboard domain decomposition and the damped additive
//! Schwarz outer iteration for the dual problem.
//!
//! The image is split into an `n1 x n2` grid of disjoint cell rectangles,
//! each enlarged by `delta` layers of cells and colored so that same-color
//! enlarged subdomains stay pairwise disjoint (at most four colors; two for
//! strips, one for a single subdomain). Every outer iteration solves, for
//! each subdomain, a box-constrained local problem on the enlarged
//! rectangle with the rest of the current iterate frozen, then adds the
//! damped sum of the zero-extended corrections.
//!
//! The local problem reduces exactly to a dual model of the same kind on
//! the patch mesh: freezing the outside contributes a cell offset that
//! folds into the patch data term, and the zero-extension turns the global
//! operators into their patch-local Dirichlet counterparts. Local solves
//! therefore reuse [`DualProblem`] and the FISTA solver unchanged.
//!
//! Subdomain solves are independent (read-only view of the iterate,
//! private scratch) and may run on any number of workers; corrections are
//! accumulated in canonical subdomain order afterwards, so the result is
//! bit-identical for any worker count.

use std::time::Instant;

use crate::analysis::ConvergenceRecord;
use crate::error::{Error, Result};
use crate::fista::{self, DualProblem, FistaConfig};
use crate::grid::{CellField, EdgeField, GridGeometry};
use crate::models::{EnergyModel, ModelKind};
use crate::par;

/// Half-open rectangle of cells `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CellRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn cell_count(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.x0 && i < self.x1 && j >= self.y0 && j < self.y1
    }

    fn disjoint(&self, other: &CellRect) -> bool {
        self.x1 <= other.x0 || other.x1 <= self.x0 || self.y1 <= other.y0 || other.y1 <= self.y0
    }
}

/// One subdomain: its core rectangle in the disjoint partition, the
/// enlarged (overlapping) rectangle, and its color class.
#[derive(Debug, Clone, Copy)]
pub struct Subdomain {
    pub core: CellRect,
    pub extended: CellRect,
    pub color: usize,
}

/// Index maps between a patch (an enlarged subdomain) and the global mesh.
/// Local degrees of freedom are exactly the edges strictly interior to the
/// patch rectangle, so the zero extension of any local field has vanishing
/// normal trace on the patch boundary.
#[derive(Debug, Clone, Copy)]
pub struct LocalPatch {
    pub subdomain: usize,
    pub rect: CellRect,
    global: GridGeometry,
    local: GridGeometry,
}

impl LocalPatch {
    fn new(subdomain: usize, rect: CellRect, global: GridGeometry) -> Self {
        let local = GridGeometry {
            m1: rect.width(),
            m2: rect.height(),
            h: global.h,
        };
        LocalPatch {
            subdomain,
            rect,
            global,
            local,
        }
    }

    pub fn local_geometry(&self) -> GridGeometry {
        self.local
    }

    /// Copy the patch-interior degrees of freedom into a local field.
    pub fn restrict(&self, p: &EdgeField) -> EdgeField {
        debug_assert_eq!(p.geometry(), self.global);
        let mut out = EdgeField::zeros(self.local);
        let (w, ht) = (self.local.m1, self.local.m2);
        for lj in 0..ht {
            for li in 0..w.saturating_sub(1) {
                out.set_x(li, lj, p.at_x(self.rect.x0 + li, self.rect.y0 + lj));
            }
        }
        for lj in 0..ht.saturating_sub(1) {
            for li in 0..w {
                out.set_y(li, lj, p.at_y(self.rect.x0 + li, self.rect.y0 + lj));
            }
        }
        out
    }

    /// Copy the patch cells of a global cell field into a local one.
    pub fn restrict_cells(&self, u: &CellField) -> CellField {
        debug_assert_eq!(u.geometry(), self.global);
        let mut out = CellField::zeros(self.local);
        for lj in 0..self.local.m2 {
            for li in 0..self.local.m1 {
                out.set(li, lj, u.at(self.rect.x0 + li, self.rect.y0 + lj));
            }
        }
        out
    }

    /// Zero extension of a local field into the global space.
    pub fn extend_by_zero(&self, local: &EdgeField) -> EdgeField {
        let mut out = EdgeField::zeros(self.global);
        self.extend_add_into(local, 1.0, &mut out);
        out
    }

    /// `global += scale * extend_by_zero(local)`.
    pub fn extend_add_into(&self, local: &EdgeField, scale: f64, global: &mut EdgeField) {
        debug_assert_eq!(local.geometry(), self.local);
        debug_assert_eq!(global.geometry(), self.global);
        let (w, ht) = (self.local.m1, self.local.m2);
        for lj in 0..ht {
            for li in 0..w.saturating_sub(1) {
                let gi = self.rect.x0 + li;
                let gj = self.rect.y0 + lj;
                let v = global.at_x(gi, gj) + scale * local.at_x(li, lj);
                global.set_x(gi, gj, v);
            }
        }
        for lj in 0..ht.saturating_sub(1) {
            for li in 0..w {
                let gi = self.rect.x0 + li;
                let gj = self.rect.y0 + lj;
                let v = global.at_y(gi, gj) + scale * local.at_y(li, lj);
                global.set_y(gi, gj, v);
            }
        }
    }

    /// Apply the 5-point operator to `v` on the patch, where `v` equals
    /// `interior` on patch cells and `ring_source` on cells outside the
    /// patch (zero outside the image). Needed because the frozen outside
    /// couples into the patch through the Laplacian stencil.
    fn laplacian_with_ring(&self, interior: &CellField, ring_source: &CellField) -> CellField {
        debug_assert_eq!(interior.geometry(), self.local);
        debug_assert_eq!(ring_source.geometry(), self.global);
        let g = self.local;
        let inv_h2 = 1.0 / (g.h * g.h);
        let mut out = CellField::zeros(g);
        let value_at = |li: isize, lj: isize| -> f64 {
            if li >= 0 && (li as usize) < g.m1 && lj >= 0 && (lj as usize) < g.m2 {
                interior.at(li as usize, lj as usize)
            } else {
                let gi = self.rect.x0 as isize + li;
                let gj = self.rect.y0 as isize + lj;
                if gi >= 0
                    && (gi as usize) < self.global.m1
                    && gj >= 0
                    && (gj as usize) < self.global.m2
                {
                    ring_source.at(gi as usize, gj as usize)
                } else {
                    0.0
                }
            }
        };
        for lj in 0..g.m2 {
            for li in 0..g.m1 {
                let (i, j) = (li as isize, lj as isize);
                let acc = 4.0 * interior.at(li, lj)
                    - value_at(i - 1, j)
                    - value_at(i + 1, j)
                    - value_at(i, j - 1)
                    - value_at(i, j + 1);
                out.set(li, lj, acc * inv_h2);
            }
        }
        out
    }
}

/// An overlapping checkerboard decomposition with color classes.
#[derive(Debug, Clone)]
pub struct Decomposition {
    geometry: GridGeometry,
    n1: usize,
    n2: usize,
    delta: usize,
    subdomains: Vec<Subdomain>,
    patches: Vec<LocalPatch>,
    color_count: usize,
}

/// Build the decomposition: an `n1 x n2` grid of disjoint rectangles of
/// roughly equal size (remainders absorbed by the last row/column), each
/// enlarged by `delta` cell layers and clipped to the image. Colors follow
/// the block parity `(a mod 2, b mod 2)`, compacted to the colors actually
/// used. Requires `2 delta <= H` (minimum core side) so that same-color
/// enlarged subdomains stay disjoint, which is what makes the per-color
/// problems separable; disjointness is additionally verified pairwise.
pub fn build_decomposition(
    geometry: GridGeometry,
    n1: usize,
    n2: usize,
    delta: usize,
) -> Result<Decomposition> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Config("subdomain grid must be at least 1x1".into()));
    }
    if n1 > geometry.m1 || n2 > geometry.m2 {
        return Err(Error::Config(format!(
            "subdomain grid {n1}x{n2} exceeds the {}x{} cell grid",
            geometry.m1, geometry.m2
        )));
    }
    if delta == 0 {
        return Err(Error::Config("overlap width must be at least 1".into()));
    }
    let base_w = geometry.m1 / n1;
    let base_h = geometry.m2 / n2;
    // Same-color cores sit two subdomains apart, so their enlargements stay
    // disjoint (as half-open cell ranges) exactly when 2*delta <= H.
    if 2 * delta > base_w.min(base_h) {
        return Err(Error::Config(format!(
            "overlap too large: 2*{delta} must not exceed the minimum subdomain side {}",
            base_w.min(base_h)
        )));
    }

    let mut subdomains = Vec::with_capacity(n1 * n2);
    let mut raw_colors = Vec::with_capacity(n1 * n2);
    for b in 0..n2 {
        for a in 0..n1 {
            let core = CellRect {
                x0: a * base_w,
                y0: b * base_h,
                x1: if a + 1 == n1 { geometry.m1 } else { (a + 1) * base_w },
                y1: if b + 1 == n2 { geometry.m2 } else { (b + 1) * base_h },
            };
            let extended = CellRect {
                x0: core.x0.saturating_sub(delta),
                y0: core.y0.saturating_sub(delta),
                x1: (core.x1 + delta).min(geometry.m1),
                y1: (core.y1 + delta).min(geometry.m2),
            };
            let raw = (a % 2) + 2 * (b % 2);
            raw_colors.push(raw);
            subdomains.push(Subdomain {
                core,
                extended,
                color: raw,
            });
        }
    }

    // Compact the parity colors to the ones actually used (4 on a proper
    // grid, 2 on a strip, 1 for a single subdomain).
    let mut used: Vec<usize> = raw_colors.clone();
    used.sort_unstable();
    used.dedup();
    for sub in &mut subdomains {
        sub.color = used.iter().position(|&c| c == sub.color).unwrap();
    }
    let color_count = used.len();

    // Same-color enlarged subdomains must be pairwise disjoint.
    for i in 0..subdomains.len() {
        for j in i + 1..subdomains.len() {
            if subdomains[i].color == subdomains[j].color
                && !subdomains[i].extended.disjoint(&subdomains[j].extended)
            {
                return Err(Error::Config(format!(
                    "same-color subdomains {i} and {j} overlap; decrease delta"
                )));
            }
        }
    }

    let patches = subdomains
        .iter()
        .enumerate()
        .map(|(s, sub)| LocalPatch::new(s, sub.extended, geometry))
        .collect();

    Ok(Decomposition {
        geometry,
        n1,
        n2,
        delta,
        subdomains,
        patches,
        color_count,
    })
}

impl Decomposition {
    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn subdomain_count(&self) -> usize {
        self.subdomains.len()
    }

    pub fn color_count(&self) -> usize {
        self.color_count
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn patches(&self) -> &[LocalPatch] {
        &self.patches
    }

    pub fn color_members(&self, color: usize) -> Vec<usize> {
        self.subdomains
            .iter()
            .enumerate()
            .filter(|(_, s)| s.color == color)
            .map(|(i, _)| i)
            .collect()
    }

    /// Cell mask of the color class (the union of same-color enlarged
    /// subdomains).
    pub fn color_cell_mask(&self, color: usize) -> Vec<bool> {
        let mut mask = vec![false; self.geometry.cell_count()];
        for sub in self.subdomains.iter().filter(|s| s.color == color) {
            for j in sub.extended.y0..sub.extended.y1 {
                for i in sub.extended.x0..sub.extended.x1 {
                    mask[self.geometry.cell_index(i, j)] = true;
                }
            }
        }
        mask
    }
}

/// Outer-iteration settings. `tau` is the damping factor of Algorithm's
/// correction sum and must lie in `(0, 1/colors]` to keep the update a
/// convex combination of feasible fields.
#[derive(Debug, Clone)]
pub struct SchwarzConfig {
    pub tau: f64,
    pub outer_iterations: usize,
    pub local_max_iterations: usize,
    pub local_tolerance: f64,
    /// Start each local solve from the previous correction instead of zero.
    pub warm_start: bool,
    /// Stop early once the relative energy gap drops below this (needs a
    /// reference energy).
    pub gap_target: Option<f64>,
}

impl Default for SchwarzConfig {
    fn default() -> Self {
        SchwarzConfig {
            tau: 0.25,
            outer_iterations: 300,
            local_max_iterations: 1000,
            local_tolerance: 1e-18,
            warm_start: false,
            gap_target: None,
        }
    }
}

impl SchwarzConfig {
    pub fn validate(&self, color_count: usize) -> Result<()> {
        let cap = 1.0 / color_count as f64;
        if !(self.tau > 0.0 && self.tau <= cap) {
            return Err(Error::Config(format!(
                "tau must lie in (0, {cap}], got {}",
                self.tau
            )));
        }
        if self.local_max_iterations == 0 {
            return Err(Error::Config("local solver needs at least 1 iteration".into()));
        }
        if self.local_tolerance.is_nan() || self.local_tolerance < 0.0 {
            return Err(Error::Config("local tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Result of one outer iteration.
#[derive(Debug, Clone)]
pub struct OuterOutcome {
    pub p_next: EdgeField,
    /// Local corrections, one per subdomain (canonical order).
    pub corrections: Vec<EdgeField>,
    /// Per color: sum over its subdomains of `||div (extended correction)||^2`.
    pub color_correction_div_sq: Vec<f64>,
    /// Sum over all subdomains in canonical order; feeds the sufficient
    /// decrease audit.
    pub correction_div_sq: f64,
    pub local_iterations: Vec<usize>,
}

/// Build the local constrained problem on a patch: the global energy with
/// everything outside the patch frozen at `q`, expressed as a dual model of
/// the same kind on the patch mesh. The returned problem reports objective
/// values on the global energy scale, so its value at `restrict(q)` equals
/// the global energy of `q`.
pub fn local_objective(
    model: &EnergyModel,
    patch: &LocalPatch,
    q: &EdgeField,
) -> Result<DualProblem> {
    if q.geometry() != model.geometry() {
        return Err(Error::geometry_mismatch(model.geometry(), q.geometry()));
    }
    if !q.is_feasible() {
        return Err(Error::Infeasible(
            "local problems require a feasible base iterate".into(),
        ));
    }
    let div_q = q.divergence();
    let energy_q = model.dual_energy(q)?;
    Ok(local_objective_with(model, patch, q, &div_q, energy_q))
}

fn local_objective_with(
    model: &EnergyModel,
    patch: &LocalPatch,
    q: &EdgeField,
    div_q: &CellField,
    energy_q: f64,
) -> DualProblem {
    let lambda = model.lambda();
    let q_local = patch.restrict(q);

    // Frozen divergence offset on the patch: g = div q - div(extend(restrict q)).
    let mut g_patch = patch.restrict_cells(div_q);
    g_patch.axpy(-1.0, &q_local.divergence());

    let mut data_local = patch.restrict_cells(model.data());
    match model.kind() {
        ModelKind::Rof => {
            data_local.axpy(1.0 / lambda, &g_patch);
        }
        ModelKind::TvH1 => {
            // The Laplacian couples the frozen outside (where the offset
            // field equals div q) into the patch through one ring of cells.
            let kg = patch.laplacian_with_ring(&g_patch, div_q);
            data_local.axpy(1.0 / lambda, &kg);
        }
    }

    let local_model = EnergyModel::new(model.kind(), lambda, data_local)
        .expect("local model parameters are valid by construction");
    let at_q = local_model
        .dual_energy(&q_local)
        .expect("restricted iterate lives on the patch mesh");
    DualProblem::with_offset(local_model, energy_q - at_q)
}

struct LocalSolve {
    correction: EdgeField,
    div_sq: f64,
    iterations: usize,
}

/// One outer iteration: solve every subdomain problem from the current
/// iterate, then add `tau` times the zero-extended corrections (in
/// canonical subdomain order) and clamp. The clamp only repairs round-off:
/// with `tau <= 1/colors` the exact update is a convex combination of
/// feasible fields.
pub fn outer_iteration(
    model: &EnergyModel,
    decomposition: &Decomposition,
    p: &EdgeField,
    cfg: &SchwarzConfig,
    warm_corrections: Option<&[EdgeField]>,
) -> Result<OuterOutcome> {
    cfg.validate(decomposition.color_count())?;
    if p.geometry() != model.geometry() || decomposition.geometry() != model.geometry() {
        return Err(Error::geometry_mismatch(model.geometry(), p.geometry()));
    }
    if !p.is_feasible() {
        return Err(Error::Infeasible("outer iterate must lie in C".into()));
    }

    let div_p = p.divergence();
    let energy_p = model.dual_energy(p)?;
    let local_cfg = FistaConfig::new(
        model.lipschitz_constant(),
        cfg.local_max_iterations,
        cfg.local_tolerance,
    )?;

    let indices: Vec<usize> = (0..decomposition.subdomain_count()).collect();
    let solved: Vec<Result<LocalSolve>> = par::map_ordered(&indices, |&s| {
        let patch = &decomposition.patches()[s];
        let mut problem = local_objective_with(model, patch, p, &div_p, energy_p);
        let q_local = patch.restrict(p);
        let mut x0 = q_local.clone();
        if let Some(previous) = warm_corrections {
            x0.axpy(1.0, &previous[s]);
            x0.project_feasible();
        }
        let out = fista::solve(&mut problem, x0, &local_cfg).map_err(|e| Error::LocalSolve {
            subdomain: s,
            source: Box::new(e),
        })?;
        let mut correction = out.x;
        correction.axpy(-1.0, &q_local);
        let div_sq = correction.divergence().norm_squared();
        Ok(LocalSolve {
            correction,
            div_sq,
            iterations: out.iterations,
        })
    });

    let mut corrections = Vec::with_capacity(solved.len());
    let mut local_iterations = Vec::with_capacity(solved.len());
    let mut color_div = vec![0.0; decomposition.color_count()];
    let mut total_div = 0.0;
    for (s, item) in solved.into_iter().enumerate() {
        let item = item?;
        color_div[decomposition.subdomains()[s].color] += item.div_sq;
        total_div += item.div_sq;
        local_iterations.push(item.iterations);
        corrections.push(item.correction);
    }

    let mut p_next = p.clone();
    for (s, correction) in corrections.iter().enumerate() {
        decomposition.patches()[s].extend_add_into(correction, cfg.tau, &mut p_next);
    }
    p_next.project_feasible();

    Ok(OuterOutcome {
        p_next,
        corrections,
        color_correction_div_sq: color_div,
        correction_div_sq: total_div,
        local_iterations,
    })
}

/// Run the outer iteration for `cfg.outer_iterations` steps (or until the
/// relative-gap target), emitting one convergence record per outer
/// iteration, plus a baseline record for the start iterate. `sink` runs on
/// each record before it is stored and may fill caller-only fields (PSNR).
pub fn solve_schwarz(
    model: &EnergyModel,
    decomposition: &Decomposition,
    cfg: &SchwarzConfig,
    p0: Option<EdgeField>,
    reference_energy: Option<f64>,
    mut sink: impl FnMut(&mut ConvergenceRecord, &EdgeField),
) -> Result<(EdgeField, Vec<ConvergenceRecord>)> {
    let mut p = match p0 {
        Some(field) => field,
        None => EdgeField::zeros(model.geometry()),
    };
    if cfg.outer_iterations == 0 {
        return Ok((p, Vec::new()));
    }

    let start = Instant::now();
    let beta = model.gradient_lipschitz_beta();
    let mut energy = model.dual_energy(&p)?;
    let gap0 = reference_energy.map(|r| energy - r);
    let relative = |e: f64| match (reference_energy, gap0) {
        (Some(r), Some(g0)) if g0 > 0.0 => (e - r) / g0,
        (Some(_), Some(_)) => 0.0,
        _ => f64::NAN,
    };

    let mut records = Vec::with_capacity(cfg.outer_iterations + 1);
    let mut baseline = ConvergenceRecord {
        iteration: 0,
        energy,
        gap: reference_energy.map_or(f64::NAN, |r| energy - r),
        relative_gap: relative(energy),
        duality_gap: model.duality_gap(&p)?,
        decrease_lhs: 0.0,
        decrease_rhs: 0.0,
        wall_seconds: start.elapsed().as_secs_f64(),
        psnr: None,
    };
    sink(&mut baseline, &p);
    records.push(baseline);

    let mut warm: Option<Vec<EdgeField>> = None;
    for n in 1..=cfg.outer_iterations {
        let outcome = outer_iteration(model, decomposition, &p, cfg, warm.as_deref())?;
        p = outcome.p_next;
        let new_energy = model.dual_energy(&p)?;
        let mut record = ConvergenceRecord {
            iteration: n,
            energy: new_energy,
            gap: reference_energy.map_or(f64::NAN, |r| new_energy - r),
            relative_gap: relative(new_energy),
            duality_gap: model.duality_gap(&p)?,
            decrease_lhs: energy - new_energy,
            decrease_rhs: cfg.tau / (2.0 * beta) * outcome.correction_div_sq,
            wall_seconds: start.elapsed().as_secs_f64(),
            psnr: None,
        };
        sink(&mut record, &p);
        records.push(record);
        energy = new_energy;
        if cfg.warm_start {
            warm = Some(outcome.corrections);
        }
        if let (Some(target), Some(_)) = (cfg.gap_target, reference_energy) {
            if relative(new_energy) <= target {
                break;
            }
        }
    }
    Ok((p, records))
}
