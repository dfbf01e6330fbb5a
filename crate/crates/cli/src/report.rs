//! CSV and plain-text reporting. The CSV schema is stable:
//! `iter,energy,gap,rel_gap,duality_gap,decrease_lhs,decrease_rhs,wall_s,psnr`
//! with floats at 17 significant digits. A `#` comment line pins the run
//! parameters (never the worker count, which must not affect output bytes).

use dualtv::analysis::ConvergenceRecord;

use crate::config::{model_name, ImageSource, RunConfig};

pub const CSV_HEADER: &str =
    "iter,energy,gap,rel_gap,duality_gap,decrease_lhs,decrease_rhs,wall_s,psnr";

/// 17 significant digits, reproducible across runs.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn run_comment(cfg: &RunConfig) -> String {
    let image = match &cfg.image {
        ImageSource::File(path) => format!("file:{}", path.display()),
        ImageSource::Synthetic { kind, width, height } => {
            format!("synthetic:{}:{}x{}", kind.name(), width, height)
        }
    };
    format!(
        "# dualtv model={} lambda={} image={} noise_variance={} seed={} solver={} domains={}x{} \
         delta={} tau={} outer_iterations={} local_max_iterations={} local_tolerance={} \
         reference_iterations={}",
        model_name(cfg.model),
        cfg.lambda,
        image,
        cfg.noise_variance,
        cfg.seed,
        cfg.solver.name(),
        cfg.n1,
        cfg.n2,
        cfg.delta,
        cfg.tau,
        cfg.outer_iterations,
        cfg.local_max_iterations,
        cfg.local_tolerance,
        cfg.reference_iterations,
    )
}

pub fn records_to_csv(comment: &str, records: &[ConvergenceRecord], omit_wall: bool) -> String {
    let mut out = String::new();
    out.push_str(comment);
    out.push('\n');
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let wall = if omit_wall { 0.0 } else { r.wall_seconds };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iteration,
            format_float(r.energy),
            format_float(r.gap),
            format_float(r.relative_gap),
            format_float(r.duality_gap),
            format_float(r.decrease_lhs),
            format_float(r.decrease_rhs),
            format_float(wall),
            r.psnr.map_or_else(|| "NaN".to_string(), format_float),
        ));
    }
    out
}
