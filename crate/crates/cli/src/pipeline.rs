//! Experiment orchestration: denoising runs, solver comparison, and the
//! overlap / subdomain-count sweeps. All pipelines are deterministic for a
//! fixed configuration and seed, for any worker count.

use std::path::{Path, PathBuf};

use dualtv::analysis::{fit_pseudo_linear_records, psnr, ConvergenceRecord, RateFit};
use dualtv::fista::{self, FistaConfig};
use dualtv::schwarz::{build_decomposition, solve_schwarz, SchwarzConfig};
use dualtv::{CellField, EdgeField, EnergyModel};

use crate::config::{model_name, ImageSource, RunConfig, SolverChoice};
use crate::noise::add_gaussian_noise;
use crate::pgm::{load_pgm, save_pgm, PgmFormat};
use crate::report::{records_to_csv, run_comment};
use crate::synthetic::synthetic_image;
use crate::{CliError, CliResult};

/// Run `f` on a worker pool of the requested size (0 = library default).
/// The pool size affects speed only; results are bit-identical.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            Ok(f())
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(f())
    }
}

/// The clean image and its source quantization depth.
pub fn load_or_synthesize(cfg: &RunConfig) -> CliResult<(CellField, u16)> {
    match &cfg.image {
        ImageSource::File(path) => {
            let img = load_pgm(path)?;
            Ok((img.field, img.maxval))
        }
        ImageSource::Synthetic { kind, width, height } => {
            Ok((synthetic_image(*kind, *width, *height)?, 255))
        }
    }
}

/// Everything a denoising run produces.
#[derive(Debug, Clone)]
pub struct DenoiseArtifacts {
    pub clean: CellField,
    pub noisy: CellField,
    pub restored: CellField,
    pub dual: EdgeField,
    pub records: Vec<ConvergenceRecord>,
    pub reference_energy: f64,
    pub final_energy: f64,
    pub duality_gap: f64,
    pub psnr_noisy: f64,
    pub psnr_restored: f64,
    pub csv: String,
    pub summary: String,
}

pub fn run_denoise(cfg: &RunConfig) -> CliResult<DenoiseArtifacts> {
    cfg.validate()?;
    let artifacts = with_threads(cfg.threads, || run_denoise_inner(cfg))??;
    if let Some(path) = &cfg.out_csv {
        std::fs::write(path, artifacts.csv.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &cfg.out_image {
        let maxval = cfg.out_maxval.unwrap_or(artifacts_source_maxval(cfg)?);
        save_pgm(&artifacts.restored, path, maxval, PgmFormat::Binary)?;
    }
    Ok(artifacts)
}

fn artifacts_source_maxval(cfg: &RunConfig) -> CliResult<u16> {
    match &cfg.image {
        ImageSource::File(path) => Ok(load_pgm(path)?.maxval),
        ImageSource::Synthetic { .. } => Ok(255),
    }
}

fn run_denoise_inner(cfg: &RunConfig) -> CliResult<DenoiseArtifacts> {
    let (clean, _) = load_or_synthesize(cfg)?;
    let noisy = add_gaussian_noise(&clean, cfg.noise_variance, cfg.seed);
    let model = EnergyModel::new(cfg.model, cfg.lambda, noisy.clone())?;
    let (_, reference_energy) = fista::reference_minimum(&model, cfg.reference_iterations)?;
    let (dual, records) = run_solver(cfg, &model, &clean, Some(reference_energy))?;

    let restored = model.recover_primal(&dual)?;
    let final_energy = model.dual_energy(&dual)?;
    let duality_gap = model.duality_gap(&dual)?;
    let psnr_noisy = psnr(&noisy, &clean)?;
    let psnr_restored = psnr(&restored, &clean)?;
    let csv = records_to_csv(&run_comment(cfg), &records, cfg.omit_wall_time);

    let wall = records.last().map_or(0.0, |r| r.wall_seconds);
    let relative_gap = records.last().map_or(f64::NAN, |r| r.relative_gap);
    let solver_line = match cfg.solver {
        SolverChoice::Schwarz => format!(
            "schwarz {}x{}, delta {}, tau {}, {} outer iterations",
            cfg.n1, cfg.n2, cfg.delta, cfg.tau, cfg.outer_iterations
        ),
        SolverChoice::Fista => format!(
            "fista, {} iterations, tolerance {:e}",
            cfg.fista_iterations, cfg.fista_tolerance
        ),
    };
    let image_line = match &cfg.image {
        ImageSource::File(path) => path.display().to_string(),
        ImageSource::Synthetic { kind, width, height } => {
            format!("synthetic {} {}x{}", kind.name(), width, height)
        }
    };
    let summary = format!(
        "model:            {} (lambda = {})\n\
         image:            {}\n\
         noise:            variance {}, seed {}\n\
         solver:           {}\n\
         reference energy: {:.12e} ({} iterations)\n\
         final energy:     {:.12e} (relative gap {:.3e})\n\
         duality gap:      {:.3e}\n\
         psnr noisy:       {:.2} dB\n\
         psnr restored:    {:.2} dB\n\
         wall time:        {:.3} s\n",
        model_name(cfg.model),
        cfg.lambda,
        image_line,
        cfg.noise_variance,
        cfg.seed,
        solver_line,
        reference_energy,
        cfg.reference_iterations,
        final_energy,
        relative_gap,
        duality_gap,
        psnr_noisy,
        psnr_restored,
        wall,
    );

    Ok(DenoiseArtifacts {
        clean,
        noisy,
        restored,
        dual,
        records,
        reference_energy,
        final_energy,
        duality_gap,
        psnr_noisy,
        psnr_restored,
        csv,
        summary,
    })
}

fn run_solver(
    cfg: &RunConfig,
    model: &EnergyModel,
    clean: &CellField,
    reference_energy: Option<f64>,
) -> CliResult<(EdgeField, Vec<ConvergenceRecord>)> {
    let fill_psnr = |record: &mut ConvergenceRecord, p: &EdgeField| {
        if let Ok(u) = model.recover_primal(p) {
            record.psnr = psnr(&u, clean).ok();
        }
    };
    match cfg.solver {
        SolverChoice::Schwarz => {
            let decomposition =
                build_decomposition(model.geometry(), cfg.n1, cfg.n2, cfg.delta)?;
            let schwarz_cfg = SchwarzConfig {
                tau: cfg.tau,
                outer_iterations: cfg.outer_iterations,
                local_max_iterations: cfg.local_max_iterations,
                local_tolerance: cfg.local_tolerance,
                warm_start: cfg.warm_start,
                gap_target: None,
            };
            Ok(solve_schwarz(
                model,
                &decomposition,
                &schwarz_cfg,
                None,
                reference_energy,
                fill_psnr,
            )?)
        }
        SolverChoice::Fista => {
            let fista_cfg =
                FistaConfig::new(model.lipschitz_constant(), cfg.fista_iterations, cfg.fista_tolerance)?
                    .with_log_every(cfg.log_every.max(1));
            Ok(fista::solve_dual_recorded(
                model,
                EdgeField::zeros(model.geometry()),
                &fista_cfg,
                reference_energy,
                fill_psnr,
            )?)
        }
    }
}

/// Cross-solver comparison on one shared problem instance.
#[derive(Debug, Clone)]
pub struct CompareArtifacts {
    pub schwarz: DenoiseArtifacts,
    pub fista: DenoiseArtifacts,
    pub relative_energy_difference: f64,
    pub summary: String,
}

pub fn run_compare(cfg: &RunConfig) -> CliResult<CompareArtifacts> {
    let mut schwarz_cfg = cfg.clone();
    schwarz_cfg.solver = SolverChoice::Schwarz;
    schwarz_cfg.out_csv = None;
    schwarz_cfg.out_image = None;
    let mut fista_cfg = cfg.clone();
    fista_cfg.solver = SolverChoice::Fista;
    fista_cfg.out_csv = None;
    fista_cfg.out_image = None;

    let schwarz = run_denoise(&schwarz_cfg)?;
    let fista_run = run_denoise(&fista_cfg)?;
    let scale = schwarz.final_energy.abs().max(fista_run.final_energy.abs()).max(1e-300);
    let relative_energy_difference =
        (schwarz.final_energy - fista_run.final_energy).abs() / scale;
    let summary = format!(
        "cross-solver comparison ({}, lambda {})\n\
         {:<9} final energy {:.12e}, duality gap {:.3e}, psnr {:.2} dB\n\
         {:<9} final energy {:.12e}, duality gap {:.3e}, psnr {:.2} dB\n\
         relative energy difference: {:.3e}\n",
        model_name(cfg.model),
        cfg.lambda,
        "schwarz",
        schwarz.final_energy,
        schwarz.duality_gap,
        schwarz.psnr_restored,
        "fista",
        fista_run.final_energy,
        fista_run.duality_gap,
        fista_run.psnr_restored,
        relative_energy_difference,
    );
    Ok(CompareArtifacts {
        schwarz,
        fista: fista_run,
        relative_energy_difference,
        summary,
    })
}

/// One sweep point: its label, full record stream, and the fitted
/// pseudo-linear parameters.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub delta: usize,
    pub records: Vec<ConvergenceRecord>,
    pub fit: RateFit,
    pub final_relative_gap: f64,
    pub csv: String,
}

#[derive(Debug, Clone)]
pub struct SweepArtifacts {
    pub points: Vec<SweepPoint>,
    pub summary: String,
}

/// Overlap sweep: same image, noise and reference; one Schwarz run per
/// overlap width. Writes one CSV per point when a prefix is given.
pub fn run_sweep_delta(
    cfg: &RunConfig,
    deltas: &[usize],
    csv_prefix: Option<&Path>,
) -> CliResult<SweepArtifacts> {
    let variants: Vec<RunConfig> = deltas
        .iter()
        .map(|&delta| {
            let mut c = cfg.clone();
            c.delta = delta;
            c
        })
        .collect();
    let labels: Vec<String> = deltas.iter().map(|d| format!("delta{d}")).collect();
    let points = run_sweep(cfg, &variants, &labels, csv_prefix)?;

    let mut summary = format!(
        "overlap sweep (domains {}x{}, {} outer iterations)\n\
         {:<8} {:>14} {:>10} {:>12} {:>8}\n",
        cfg.n1, cfg.n2, cfg.outer_iterations, "delta", "final_rel_gap", "gamma", "threshold", "r2"
    );
    for p in &points {
        summary.push_str(&format!(
            "{:<8} {:>14.3e} {:>10.4} {:>12.3e} {:>8.4}\n",
            p.delta, p.final_relative_gap, p.fit.gamma, p.fit.threshold, p.fit.r_squared
        ));
    }
    summary.push_str(&ordering_notes(&points));
    Ok(SweepArtifacts { points, summary })
}

/// Subdomain-count sweep at fixed `d/delta` (square images): one Schwarz
/// run per grid.
pub fn run_sweep_domains(
    cfg: &RunConfig,
    domains: &[(usize, usize)],
    d_over_delta: usize,
    csv_prefix: Option<&Path>,
) -> CliResult<SweepArtifacts> {
    let (width, height) = image_size(cfg)?;
    if width != height {
        return Err(CliError::Config(format!(
            "domain sweeps need a square image, got {width}x{height}"
        )));
    }
    if d_over_delta == 0 || width % d_over_delta != 0 {
        return Err(CliError::Config(format!(
            "d/delta = {d_over_delta} must divide the image side {width}"
        )));
    }
    let delta = width / d_over_delta;
    let variants: Vec<RunConfig> = domains
        .iter()
        .map(|&(n1, n2)| {
            let mut c = cfg.clone();
            c.n1 = n1;
            c.n2 = n2;
            c.delta = delta;
            c
        })
        .collect();
    let labels: Vec<String> = domains.iter().map(|(a, b)| format!("domains{a}x{b}")).collect();
    let points = run_sweep(cfg, &variants, &labels, csv_prefix)?;

    let mut summary = format!(
        "subdomain sweep (d/delta = {d_over_delta}, delta = {delta}, {} outer iterations)\n\
         {:<12} {:>14} {:>10} {:>12} {:>8}\n",
        cfg.outer_iterations, "domains", "final_rel_gap", "gamma", "threshold", "r2"
    );
    for (p, &(a, b)) in points.iter().zip(domains) {
        summary.push_str(&format!(
            "{:<12} {:>14.3e} {:>10.4} {:>12.3e} {:>8.4}\n",
            format!("{a}x{b}"),
            p.final_relative_gap,
            p.fit.gamma,
            p.fit.threshold,
            p.fit.r_squared
        ));
    }
    if points.len() >= 2 {
        let spread = gamma_spread(&points);
        summary.push_str(&format!(
            "gamma spread across grids: {:.1}% ({})\n",
            100.0 * spread,
            if spread <= 0.25 { "OK" } else { "VIOLATION" }
        ));
    }
    Ok(SweepArtifacts { points, summary })
}

fn image_size(cfg: &RunConfig) -> CliResult<(usize, usize)> {
    match &cfg.image {
        ImageSource::Synthetic { width, height, .. } => Ok((*width, *height)),
        ImageSource::File(path) => {
            let img = load_pgm(path)?;
            let g = img.field.geometry();
            Ok((g.m1, g.m2))
        }
    }
}

fn run_sweep(
    base: &RunConfig,
    variants: &[RunConfig],
    labels: &[String],
    csv_prefix: Option<&Path>,
) -> CliResult<Vec<SweepPoint>> {
    if variants.is_empty() {
        return Ok(Vec::new());
    }
    // Validate every point before any heavy work.
    for cfg in variants {
        cfg.validate()?;
        build_decomposition(
            dualtv::GridGeometry::unit(image_size(cfg)?.0, image_size(cfg)?.1)?,
            cfg.n1,
            cfg.n2,
            cfg.delta,
        )?;
    }

    // Shared problem instance and reference across the sweep.
    let shared = with_threads(base.threads, || -> CliResult<_> {
        let (clean, _) = load_or_synthesize(base)?;
        let noisy = add_gaussian_noise(&clean, base.noise_variance, base.seed);
        let model = EnergyModel::new(base.model, base.lambda, noisy.clone())?;
        let (_, reference_energy) = fista::reference_minimum(&model, base.reference_iterations)?;
        Ok((clean, model, reference_energy))
    })??;
    let (clean, model, reference_energy) = shared;

    let mut points = Vec::with_capacity(variants.len());
    for (cfg, label) in variants.iter().zip(labels) {
        let (_, records) = with_threads(cfg.threads, || {
            run_solver(cfg, &model, &clean, Some(reference_energy))
        })??;
        let fit = fit_pseudo_linear_records(&records);
        let final_relative_gap = records.last().map_or(f64::NAN, |r| r.relative_gap);
        let csv = records_to_csv(&run_comment(cfg), &records, cfg.omit_wall_time);
        if let Some(prefix) = csv_prefix {
            let path = sweep_csv_path(prefix, label);
            std::fs::write(&path, csv.as_bytes())
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        }
        points.push(SweepPoint {
            label: label.clone(),
            delta: cfg.delta,
            records,
            fit,
            final_relative_gap,
            csv,
        });
    }
    Ok(points)
}

fn sweep_csv_path(prefix: &Path, label: &str) -> PathBuf {
    let mut name = prefix.file_name().map_or_else(String::new, |s| {
        let mut text = s.to_string_lossy().into_owned();
        text.push('-');
        text
    });
    name.push_str(label);
    name.push_str(".csv");
    prefix.with_file_name(name)
}

fn gamma_spread(points: &[SweepPoint]) -> f64 {
    let gammas: Vec<f64> = points
        .iter()
        .filter(|p| p.fit.valid)
        .map(|p| p.fit.gamma)
        .collect();
    if gammas.len() < 2 {
        return f64::NAN;
    }
    let max = gammas.iter().fold(f64::MIN, |m, &v| m.max(v));
    let min = gammas.iter().fold(f64::MAX, |m, &v| m.min(v));
    (max - min) / max
}

fn ordering_notes(points: &[SweepPoint]) -> String {
    let mut notes = String::new();
    if points.len() < 2 {
        return notes;
    }
    // Larger overlap must not produce a larger plateau (10% fit slack).
    let mut ok = true;
    for w in points.windows(2) {
        let bound = w[0].fit.threshold * 1.1 + 1e-300;
        // NaN thresholds (invalid fits) count as violations.
        if w[1].fit.threshold > bound || w[1].fit.threshold.is_nan() {
            ok = false;
        }
    }
    notes.push_str(&format!(
        "threshold nonincreasing in delta: {}\n",
        if ok { "OK" } else { "VIOLATION" }
    ));
    let spread = gamma_spread(points);
    if spread.is_finite() {
        notes.push_str(&format!(
            "gamma spread across deltas: {:.1}% ({})\n",
            100.0 * spread,
            if spread <= 0.25 { "OK" } else { "VIOLATION" }
        ));
    }
    notes
}
