//! Projected accelerated gradient (FISTA).
//!
//! The same solver drives the global dual problem (as baseline and reference)
//! and the local subdomain problems of the Schwarz iteration, through the
//! [`SmoothProblem`] adapter. Plain FISTA: fixed step `1/L`, standard
//! `t`-extrapolation, no restarts, no line search. Progress is measured by
//! the divergence of the iterate difference scaled by the domain area, and
//! the loop stops when that drops below the configured tolerance or the
//! iteration cap is hit.

use std::time::Instant;

use crate::analysis::ConvergenceRecord;
use crate::error::{Error, Result};
use crate::grid::{CellField, EdgeField, GridGeometry};
use crate::models::EnergyModel;

/// Solver settings. `lipschitz` is the gradient Lipschitz constant of the
/// objective (the step is its reciprocal); iteration `k` stops the loop when
/// `||div(x_k - x_{k-1})||^2 / area <= divergence_tolerance` or
/// `k == max_iterations`.
#[derive(Debug, Clone)]
pub struct FistaConfig {
    pub lipschitz: f64,
    pub max_iterations: usize,
    pub divergence_tolerance: f64,
    /// Record the objective every this many iterations (0 = endpoints only).
    pub log_every: usize,
}

impl FistaConfig {
    pub fn new(lipschitz: f64, max_iterations: usize, divergence_tolerance: f64) -> Result<Self> {
        let cfg = FistaConfig {
            lipschitz,
            max_iterations,
            divergence_tolerance,
            log_every: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_log_every(mut self, log_every: usize) -> Self {
        self.log_every = log_every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lipschitz <= 0.0 || !self.lipschitz.is_finite() {
            return Err(Error::Config(format!(
                "Lipschitz constant must be positive, got {}",
                self.lipschitz
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.divergence_tolerance.is_nan() || self.divergence_tolerance < 0.0 {
            return Err(Error::Config(format!(
                "divergence tolerance must be nonnegative, got {}",
                self.divergence_tolerance
            )));
        }
        Ok(())
    }
}

/// An abstract smooth objective over an edge field with a projectable
/// feasible set. Adapters supply the progress measure used by the stop
/// criterion (for the dual problems it is the area-scaled divergence of the
/// iterate difference).
pub trait SmoothProblem {
    fn geometry(&self) -> GridGeometry;
    fn objective(&mut self, p: &EdgeField) -> f64;
    fn gradient_into(&mut self, p: &EdgeField, out: &mut EdgeField);
    fn project(&self, p: &mut EdgeField);
    fn step_measure(&mut self, current: &EdgeField, previous: &EdgeField) -> f64;
}

/// The dual model as a [`SmoothProblem`], with scratch buffers so the hot
/// loop does not allocate. An additive `value_offset` lets local subdomain
/// problems report objective values on the global energy scale.
#[derive(Debug, Clone)]
pub struct DualProblem {
    model: EnergyModel,
    value_offset: f64,
    cell_a: CellField,
    cell_b: CellField,
    edge_diff: EdgeField,
}

impl DualProblem {
    pub fn new(model: EnergyModel) -> Self {
        DualProblem::with_offset(model, 0.0)
    }

    pub fn with_offset(model: EnergyModel, value_offset: f64) -> Self {
        let g = model.geometry();
        DualProblem {
            model,
            value_offset,
            cell_a: CellField::zeros(g),
            cell_b: CellField::zeros(g),
            edge_diff: EdgeField::zeros(g),
        }
    }

    pub fn model(&self) -> &EnergyModel {
        &self.model
    }

    pub fn value_offset(&self) -> f64 {
        self.value_offset
    }
}

impl SmoothProblem for DualProblem {
    fn geometry(&self) -> GridGeometry {
        self.model.geometry()
    }

    fn objective(&mut self, p: &EdgeField) -> f64 {
        self.model.dual_energy_buffered(p, &mut self.cell_a, &mut self.cell_b) + self.value_offset
    }

    fn gradient_into(&mut self, p: &EdgeField, out: &mut EdgeField) {
        self.model
            .dual_gradient_buffered(p, out, &mut self.cell_a, &mut self.cell_b);
    }

    fn project(&self, p: &mut EdgeField) {
        p.project_feasible();
    }

    fn step_measure(&mut self, current: &EdgeField, previous: &EdgeField) -> f64 {
        self.edge_diff.copy_from(current);
        self.edge_diff.axpy(-1.0, previous);
        self.edge_diff.divergence_into(&mut self.cell_a);
        self.cell_a.norm_squared() / self.geometry().area()
    }
}

/// Result of a solve: final iterate, iterations actually run, and the
/// objective trace (initial value, every `log_every` iterations, final).
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: EdgeField,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Snapshot handed to the observer on logged iterations.
pub struct IterationEvent<'a> {
    pub iteration: usize,
    pub objective: f64,
    pub iterate: &'a EdgeField,
    pub step_measure: f64,
}

pub fn solve(
    problem: &mut impl SmoothProblem,
    x0: EdgeField,
    cfg: &FistaConfig,
) -> Result<SolveOutcome> {
    solve_observed(problem, x0, cfg, |_| {})
}

/// Run FISTA, invoking `observer` at every logged iteration. Every iterate
/// is feasible (the projection runs each step and is audited on logged
/// iterations); a non-finite objective or progress measure aborts the solve.
pub fn solve_observed(
    problem: &mut impl SmoothProblem,
    x0: EdgeField,
    cfg: &FistaConfig,
    mut observer: impl FnMut(&IterationEvent<'_>),
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let g = problem.geometry();
    if x0.geometry() != g {
        return Err(Error::geometry_mismatch(g, x0.geometry()));
    }

    let mut x = x0;
    problem.project(&mut x);
    let mut x_prev = x.clone();
    let mut y = x.clone();
    let mut grad = EdgeField::zeros(g);

    let initial = problem.objective(&x);
    if !initial.is_finite() {
        return Err(Error::NonFinite("objective at the initial iterate"));
    }
    let mut trace = vec![initial];

    let inv_l = 1.0 / cfg.lipschitz;
    let mut t: f64 = 1.0;
    let mut iterations = 0;

    for k in 1..=cfg.max_iterations {
        problem.gradient_into(&y, &mut grad);

        // x_{k} = project(y - grad / L), built in the storage of x_{k-2}.
        std::mem::swap(&mut x, &mut x_prev);
        x.copy_from(&y);
        x.axpy(-inv_l, &grad);
        problem.project(&mut x);

        let measure = problem.step_measure(&x, &x_prev);
        if !measure.is_finite() {
            return Err(Error::NonFinite("progress measure"));
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y.copy_from(&x);
        y.scale(1.0 + momentum);
        y.axpy(-momentum, &x_prev);
        t = t_next;

        iterations = k;
        let stopping = measure <= cfg.divergence_tolerance || k == cfg.max_iterations;
        let logged = cfg.log_every > 0 && k % cfg.log_every == 0;
        if stopping || logged {
            let value = problem.objective(&x);
            if !value.is_finite() {
                return Err(Error::NonFinite("objective"));
            }
            if !x.is_feasible() {
                return Err(Error::Infeasible(format!("iterate {k} left the feasible set")));
            }
            trace.push(value);
            observer(&IterationEvent {
                iteration: k,
                objective: value,
                iterate: &x,
                step_measure: measure,
            });
        }
        if measure <= cfg.divergence_tolerance {
            break;
        }
    }

    Ok(SolveOutcome {
        x,
        iterations,
        trace,
    })
}

/// High-budget global solve used as ground truth for energy-error logs:
/// runs FISTA on the dual with the model's Lipschitz constant from the zero
/// field and returns the final iterate and its energy.
pub fn reference_minimum(model: &EnergyModel, iterations: usize) -> Result<(EdgeField, f64)> {
    let cfg = FistaConfig::new(model.lipschitz_constant(), iterations, 0.0)?;
    let mut problem = DualProblem::new(model.clone());
    let out = solve(&mut problem, EdgeField::zeros(model.geometry()), &cfg)?;
    let energy = *out.trace.last().expect("trace always has the initial value");
    Ok((out.x, energy))
}

/// Run the global dual solve while emitting per-logged-iteration convergence
/// records (the FISTA counterpart of the Schwarz record stream; the decrease
/// audit fields do not apply and are zero). `enrich` may fill in fields the
/// solver cannot know, such as PSNR against a clean image.
pub fn solve_dual_recorded(
    model: &EnergyModel,
    p0: EdgeField,
    cfg: &FistaConfig,
    reference_energy: Option<f64>,
    mut enrich: impl FnMut(&mut ConvergenceRecord, &EdgeField),
) -> Result<(EdgeField, Vec<ConvergenceRecord>)> {
    let start = Instant::now();
    let mut problem = DualProblem::new(model.clone());

    let mut p_init = p0;
    problem.project(&mut p_init);
    let initial_energy = model.dual_energy(&p_init)?;
    let gap0 = reference_energy.map(|r| initial_energy - r);
    let relative = |energy: f64| match (reference_energy, gap0) {
        (Some(r), Some(g0)) if g0 > 0.0 => (energy - r) / g0,
        (Some(_), Some(_)) => 0.0,
        _ => f64::NAN,
    };

    let mut records = Vec::new();
    let mut initial_record = ConvergenceRecord {
        iteration: 0,
        energy: initial_energy,
        gap: reference_energy.map_or(f64::NAN, |r| initial_energy - r),
        relative_gap: relative(initial_energy),
        duality_gap: model.duality_gap(&p_init)?,
        decrease_lhs: 0.0,
        decrease_rhs: 0.0,
        wall_seconds: start.elapsed().as_secs_f64(),
        psnr: None,
    };
    enrich(&mut initial_record, &p_init);
    records.push(initial_record);

    let mut deferred: Result<()> = Ok(());
    let out = solve_observed(&mut problem, p_init, cfg, |event| {
        if deferred.is_err() {
            return;
        }
        let gap = match problem_duality_gap(model, event.iterate) {
            Ok(v) => v,
            Err(e) => {
                deferred = Err(e);
                return;
            }
        };
        let mut record = ConvergenceRecord {
            iteration: event.iteration,
            energy: event.objective,
            gap: reference_energy.map_or(f64::NAN, |r| event.objective - r),
            relative_gap: relative(event.objective),
            duality_gap: gap,
            decrease_lhs: 0.0,
            decrease_rhs: 0.0,
            wall_seconds: start.elapsed().as_secs_f64(),
            psnr: None,
        };
        enrich(&mut record, event.iterate);
        records.push(record);
    })?;
    deferred?;
    Ok((out.x, records))
}

fn problem_duality_gap(model: &EnergyModel, p: &EdgeField) -> Result<f64> {
    model.duality_gap(p)
}
