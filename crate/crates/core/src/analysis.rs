//! Convergence diagnostics: per-iteration records, pseudo-linear rate and
//! threshold fitting, the partition of unity over the color classes, the
//! stable-decomposition audit, and PSNR.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::{interpolate_cutoff, CellField, CutoffFunction, EdgeField};
use crate::schwarz::Decomposition;

/// One row of the convergence log. `gap` and `relative_gap` are NaN when no
/// reference energy is available; `psnr` is filled by drivers that know the
/// clean image.
#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub iteration: usize,
    pub energy: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub duality_gap: f64,
    pub decrease_lhs: f64,
    pub decrease_rhs: f64,
    pub wall_seconds: f64,
    pub psnr: Option<f64>,
}

/// Result of fitting `gap_n ~ gamma^n c + threshold` to a gap sequence.
/// Purely diagnostic; `valid` is false when no linear regime was found.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub gamma: f64,
    pub threshold: f64,
    pub window_start: usize,
    pub window_end: usize,
    pub r_squared: f64,
    pub valid: bool,
}

impl RateFit {
    fn invalid() -> Self {
        RateFit {
            gamma: f64::NAN,
            threshold: f64::NAN,
            window_start: 0,
            window_end: 0,
            r_squared: f64::NAN,
            valid: false,
        }
    }
}

const MIN_FIT_WINDOW: usize = 10;
const FIT_R_SQUARED: f64 = 0.98;

/// Fit the pseudo-linear model to a positive gap sequence: estimate the
/// plateau as the tail median, subtract it, and run a least-squares line
/// through the log over the longest window that stays affine (r^2 at least
/// 0.98). A candidate plateau of zero is also tried so plateau-free decay
/// fits the whole sequence. Heuristic by construction.
pub fn fit_pseudo_linear(gaps: &[f64]) -> RateFit {
    let n = gaps.len();
    if n < MIN_FIT_WINDOW || gaps.iter().filter(|&&v| v > 0.0).count() < MIN_FIT_WINDOW {
        return RateFit::invalid();
    }

    let tail_len = (n / 5).max(5).min(n);
    let mut tail: Vec<f64> = gaps[n - tail_len..].to_vec();
    tail.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail_median = tail[tail.len() / 2];

    let mut candidates = vec![0.0];
    if tail_median > 0.0 {
        candidates.push(tail_median);
    }

    let mut best: Option<(usize, f64, f64, f64, usize, usize)> = None; // (len, r2, slope, eps, start, end)
    for &eps in &candidates {
        // Contiguous runs where the shifted gap stays positive.
        let mut run_start = None;
        let mut runs: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, &a) in gaps.iter().enumerate() {
            let d = a - eps;
            if d > 0.0 && d.is_finite() {
                if run_start.is_none() {
                    run_start = Some(i);
                    runs.push((i, Vec::new()));
                }
                runs.last_mut().unwrap().1.push(d.ln());
            } else {
                run_start = None;
            }
        }
        for (offset, ys) in runs {
            if ys.len() < MIN_FIT_WINDOW {
                continue;
            }
            // Prefix sums make every window fit O(1).
            let m = ys.len();
            let mut sy = vec![0.0; m + 1];
            let mut syy = vec![0.0; m + 1];
            let mut sxy = vec![0.0; m + 1];
            for (k, &y) in ys.iter().enumerate() {
                let x = (offset + k) as f64;
                sy[k + 1] = sy[k] + y;
                syy[k + 1] = syy[k] + y * y;
                sxy[k + 1] = sxy[k] + x * y;
            }
            for start in 0..m {
                for end in (start + MIN_FIT_WINDOW - 1)..m {
                    let len = end - start + 1;
                    if let Some(current) = best {
                        if len < current.0 {
                            continue;
                        }
                    }
                    let count = len as f64;
                    let x0 = (offset + start) as f64;
                    let x1 = (offset + end) as f64;
                    let sum_x = (x0 + x1) * count / 2.0;
                    // Sum of consecutive squares via the closed form.
                    let sq = |t: f64| t * (t + 1.0) * (2.0 * t + 1.0) / 6.0;
                    let sum_xx = sq(x1) - if x0 > 0.0 { sq(x0 - 1.0) } else { 0.0 };
                    let sum_y = sy[end + 1] - sy[start];
                    let sum_yy = syy[end + 1] - syy[start];
                    let sum_xy = sxy[end + 1] - sxy[start];
                    let sxx_c = sum_xx - sum_x * sum_x / count;
                    let syy_c = sum_yy - sum_y * sum_y / count;
                    let sxy_c = sum_xy - sum_x * sum_y / count;
                    if sxx_c <= 0.0 {
                        continue;
                    }
                    let slope = sxy_c / sxx_c;
                    let r2 = if syy_c <= 1e-300 {
                        1.0
                    } else {
                        (sxy_c * sxy_c) / (sxx_c * syy_c)
                    };
                    if r2 < FIT_R_SQUARED {
                        continue;
                    }
                    let replace = match best {
                        None => true,
                        Some((blen, br2, ..)) => len > blen || (len == blen && r2 > br2),
                    };
                    if replace {
                        best = Some((len, r2, slope, eps, offset + start, offset + end));
                    }
                }
            }
        }
    }

    match best {
        Some((_, r2, slope, eps, start, end)) => {
            let gamma = slope.exp();
            if !(gamma > 0.0 && gamma < 1.0) {
                return RateFit::invalid();
            }
            RateFit {
                gamma,
                threshold: eps,
                window_start: start,
                window_end: end,
                r_squared: r2,
                valid: true,
            }
        }
        None => RateFit::invalid(),
    }
}

/// Convenience wrapper: fit on the relative gaps of a record stream.
pub fn fit_pseudo_linear_records(records: &[ConvergenceRecord]) -> RateFit {
    let gaps: Vec<f64> = records.iter().map(|r| r.relative_gap).collect();
    fit_pseudo_linear(&gaps)
}

/// Build the partition of unity subordinate to the color classes: per color
/// the raw bump is the saturated Chebyshev distance (in cell units, scaled
/// by the overlap width) from each vertex to the complement of the class
/// within the image, and the bumps are normalized to sum to one at every
/// vertex. Each cutoff vanishes outside its class, lies in `[0, 1]`, and
/// its gradient is of order one over the overlap width.
pub fn build_partition_of_unity(decomposition: &Decomposition) -> Vec<CutoffFunction> {
    let g = decomposition.geometry();
    let (vw, vh) = (g.m1 + 1, g.m2 + 1);
    let nv = vw * vh;
    let delta = decomposition.delta() as f64;

    let mut bumps: Vec<Vec<f64>> = Vec::with_capacity(decomposition.color_count());
    for color in 0..decomposition.color_count() {
        let mask = decomposition.color_cell_mask(color);
        // Multi-source BFS with 8-neighborhood computes the Chebyshev
        // distance to the nearest vertex touching a complement cell.
        let mut dist = vec![usize::MAX; nv];
        let mut queue = VecDeque::new();
        for vj in 0..vh {
            for vi in 0..vw {
                let mut touches_complement = false;
                for (ci, cj) in [
                    (vi.wrapping_sub(1), vj.wrapping_sub(1)),
                    (vi, vj.wrapping_sub(1)),
                    (vi.wrapping_sub(1), vj),
                    (vi, vj),
                ] {
                    if ci < g.m1 && cj < g.m2 && !mask[g.cell_index(ci, cj)] {
                        touches_complement = true;
                        break;
                    }
                }
                if touches_complement {
                    dist[vj * vw + vi] = 0;
                    queue.push_back((vi, vj));
                }
            }
        }
        while let Some((vi, vj)) = queue.pop_front() {
            let d = dist[vj * vw + vi];
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let ni = vi as i64 + di;
                    let nj = vj as i64 + dj;
                    if ni < 0 || nj < 0 || ni >= vw as i64 || nj >= vh as i64 {
                        continue;
                    }
                    let idx = nj as usize * vw + ni as usize;
                    if dist[idx] == usize::MAX {
                        dist[idx] = d + 1;
                        queue.push_back((ni as usize, nj as usize));
                    }
                }
            }
        }
        let bump: Vec<f64> = dist
            .iter()
            .map(|&d| {
                if d == usize::MAX {
                    1.0 // the class covers the whole image
                } else {
                    (d as f64 / delta).min(1.0)
                }
            })
            .collect();
        bumps.push(bump);
    }

    let mut thetas = Vec::with_capacity(bumps.len());
    for k in 0..bumps.len() {
        let values: Vec<f64> = (0..nv)
            .map(|v| {
                let total: f64 = bumps.iter().map(|b| b[v]).sum();
                debug_assert!(total > 0.0, "color classes must cover every vertex");
                bumps[k][v] / total
            })
            .collect();
        thetas.push(
            CutoffFunction::new(g, values)
                .expect("normalized bumps lie in [0, 1] by construction"),
        );
    }
    thetas
}

/// Per-pair output of the stable-decomposition construction.
#[derive(Debug, Clone)]
pub struct StableDecompositionReport {
    /// Max-norm of the reassembly defect, relative to the difference field.
    pub reassembly_error: f64,
    /// Per color: does `q` plus the extended part stay feasible?
    pub feasible: Vec<bool>,
    /// `sum_k ||div R_k* r_k||^2`.
    pub correction_div_sq: f64,
    /// `||div (p - q)||^2`.
    pub difference_div_sq: f64,
    /// `||p - q||^2`.
    pub difference_norm_sq: f64,
}

/// Decompose `p - q` across the color classes as the nodal interpolation of
/// the cutoff-weighted difference. Returns the per-color parts (already
/// extended to the global space; their support lies in the class) and the
/// audit report. Both inputs must be feasible.
pub fn stable_decompose(
    decomposition: &Decomposition,
    thetas: &[CutoffFunction],
    p: &EdgeField,
    q: &EdgeField,
) -> Result<(Vec<EdgeField>, StableDecompositionReport)> {
    if thetas.len() != decomposition.color_count() {
        return Err(Error::Config(format!(
            "need one cutoff per color ({}), got {}",
            decomposition.color_count(),
            thetas.len()
        )));
    }
    if p.geometry() != decomposition.geometry() || q.geometry() != decomposition.geometry() {
        return Err(Error::geometry_mismatch(decomposition.geometry(), p.geometry()));
    }
    if !p.is_feasible() || !q.is_feasible() {
        return Err(Error::Infeasible(
            "stable decomposition requires feasible inputs".into(),
        ));
    }

    let mut diff = p.clone();
    diff.axpy(-1.0, q);

    let mut parts = Vec::with_capacity(thetas.len());
    for theta in thetas {
        parts.push(interpolate_cutoff(theta, &diff)?);
    }

    let mut reassembled = EdgeField::zeros(decomposition.geometry());
    for part in &parts {
        reassembled.axpy(1.0, part);
    }
    reassembled.axpy(-1.0, &diff);
    let reassembly_error = reassembled.max_abs() / diff.max_abs().max(1.0);

    let feasible = parts
        .iter()
        .map(|part| {
            let mut shifted = q.clone();
            shifted.axpy(1.0, part);
            shifted.is_feasible()
        })
        .collect();

    let correction_div_sq = parts
        .iter()
        .map(|part| part.divergence().norm_squared())
        .sum();

    let report = StableDecompositionReport {
        reassembly_error,
        feasible,
        correction_div_sq,
        difference_div_sq: diff.divergence().norm_squared(),
        difference_norm_sq: diff.norm_squared(),
    };
    Ok((parts, report))
}

/// Constants measured from a batch of stable-decomposition samples such
/// that `sum_k ||div R_k* r_k||^2 <= c1 ||div(p-q)||^2 + c2 ||p-q||^2`
/// holds for every sample.
#[derive(Debug, Clone, Copy)]
pub struct StableConstants {
    pub c1: f64,
    pub c2: f64,
}

/// Two-stage estimate: samples with negligible divergence pin `c2` (they
/// constrain nothing else), then the remaining samples pin `c1` given that
/// `c2`. Include low-divergence pairs in the batch to make the split
/// meaningful.
pub fn fit_stable_constants(reports: &[StableDecompositionReport]) -> StableConstants {
    let low_div = |r: &StableDecompositionReport| {
        r.difference_div_sq <= 1e-6 * r.difference_norm_sq.max(1e-300)
    };
    let mut c2: f64 = 0.0;
    for r in reports.iter().filter(|r| low_div(r)) {
        if r.difference_norm_sq > 0.0 {
            c2 = c2.max(r.correction_div_sq / r.difference_norm_sq);
        }
    }
    let mut c1: f64 = 0.0;
    for r in reports.iter().filter(|r| !low_div(r)) {
        if r.difference_div_sq > 0.0 {
            let excess = r.correction_div_sq - c2 * r.difference_norm_sq;
            c1 = c1.max(excess / r.difference_div_sq);
        }
    }
    StableConstants { c1, c2 }
}

/// Peak signal-to-noise ratio in dB with unit peak value:
/// `10 log10(area / ||u - u_orig||^2)`. Identical images map to positive
/// infinity.
pub fn psnr(u: &CellField, u_orig: &CellField) -> Result<f64> {
    if u.geometry() != u_orig.geometry() {
        return Err(Error::geometry_mismatch(u_orig.geometry(), u.geometry()));
    }
    let mut diff = u.clone();
    diff.axpy(-1.0, u_orig);
    let err = diff.norm_squared();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (u.geometry().area() / err).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{vertex_curl, GridGeometry};
    use crate::schwarz::build_decomposition;
    use crate::test_util::{random_cell, random_edge, rng};
    use rand::prelude::*;

    #[test]
    fn single_subdomain_partition_is_identically_one() {
        let g = GridGeometry::unit(16, 16).unwrap();
        let d = build_decomposition(g, 1, 1, 2).unwrap();
        let thetas = build_partition_of_unity(&d);
        assert_eq!(thetas.len(), 1);
        assert!(thetas[0].values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn partition_of_unity_sums_to_one_and_respects_supports() {
        let g = GridGeometry::unit(40, 28).unwrap();
        let d = build_decomposition(g, 4, 2, 3).unwrap();
        let thetas = build_partition_of_unity(&d);
        assert_eq!(thetas.len(), d.color_count());
        for v in 0..g.vertex_count() {
            let total: f64 = thetas.iter().map(|t| t.values()[v]).sum();
            assert!((total - 1.0).abs() <= 1e-14);
        }
        // Support containment: zero on vertices that touch no class cell.
        for (color, theta) in thetas.iter().enumerate() {
            let mask = d.color_cell_mask(color);
            for vj in 0..=g.m2 {
                for vi in 0..=g.m1 {
                    let touches = [(vi.wrapping_sub(1), vj.wrapping_sub(1)),
                        (vi, vj.wrapping_sub(1)),
                        (vi.wrapping_sub(1), vj),
                        (vi, vj)]
                        .into_iter()
                        .any(|(ci, cj)| ci < g.m1 && cj < g.m2 && mask[g.cell_index(ci, cj)]);
                    if !touches {
                        assert_eq!(theta.at_vertex(vi, vj), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn deep_interior_vertices_get_full_weight() {
        let g = GridGeometry::unit(32, 32).unwrap();
        let d = build_decomposition(g, 2, 2, 4).unwrap();
        let thetas = build_partition_of_unity(&d);
        // The image corner (0, 0) lies deep inside the first subdomain and
        // beyond delta from every other class.
        let color = d.subdomains()[0].color;
        assert_eq!(thetas[color].at_vertex(0, 0), 1.0);
        for (k, theta) in thetas.iter().enumerate() {
            if k != color {
                assert_eq!(theta.at_vertex(0, 0), 0.0);
            }
        }
    }

    #[test]
    fn partition_gradient_scales_with_overlap() {
        let g = GridGeometry::unit(64, 64).unwrap();
        for delta in [2usize, 4, 8] {
            let d = build_decomposition(g, 4, 4, delta).unwrap();
            let thetas = build_partition_of_unity(&d);
            let max_grad = thetas
                .iter()
                .map(|t| t.max_gradient())
                .fold(0.0_f64, f64::max);
            // Nodal ramps change by at most 1/delta per cell before
            // normalization; the normalized gradient stays of that order.
            assert!(
                max_grad <= 2.5 / delta as f64 + 1e-12,
                "delta {delta}: gradient {max_grad}"
            );
        }
    }

    #[test]
    fn stable_decomposition_of_equal_fields_is_zero() {
        let g = GridGeometry::unit(24, 24).unwrap();
        let d = build_decomposition(g, 2, 2, 3).unwrap();
        let thetas = build_partition_of_unity(&d);
        let mut r = rng(90);
        let p = random_edge(g, &mut r);
        let (parts, report) = stable_decompose(&d, &thetas, &p, &p).unwrap();
        assert!(parts.iter().all(|part| part.max_abs() == 0.0));
        assert_eq!(report.reassembly_error, 0.0);
        assert!(report.feasible.iter().all(|&f| f));
        assert_eq!(report.correction_div_sq, 0.0);
    }

    #[test]
    fn single_subdomain_measures_unit_constants() {
        let g = GridGeometry::unit(16, 16).unwrap();
        let d = build_decomposition(g, 1, 1, 2).unwrap();
        let thetas = build_partition_of_unity(&d);
        let mut r = rng(92);
        let mut reports = Vec::new();
        for _ in 0..10 {
            let p = random_edge(g, &mut r);
            let q = random_edge(g, &mut r);
            let (parts, report) = stable_decompose(&d, &thetas, &p, &q).unwrap();
            // The only part is exactly the difference.
            let mut expected = p.clone();
            expected.axpy(-1.0, &q);
            assert_eq!(parts[0], expected);
            reports.push(report);
        }
        let constants = fit_stable_constants(&reports);
        assert_eq!(constants.c1, 1.0);
        assert_eq!(constants.c2, 0.0);
    }

    #[test]
    fn stable_decomposition_reassembles_and_stays_feasible() {
        let g = GridGeometry::unit(48, 48).unwrap();
        let mut r = rng(94);
        for delta in [2usize, 4] {
            let d = build_decomposition(g, 4, 4, delta).unwrap();
            let thetas = build_partition_of_unity(&d);
            for _ in 0..10 {
                let p = random_edge(g, &mut r);
                let q = random_edge(g, &mut r);
                let (_, report) = stable_decompose(&d, &thetas, &p, &q).unwrap();
                assert!(report.reassembly_error <= 1e-12);
                assert!(report.feasible.iter().all(|&f| f));
            }
        }
    }

    #[test]
    fn measured_constants_follow_the_overlap_scaling() {
        let g = GridGeometry::unit(48, 48).unwrap();
        let mut r = rng(96);
        let mut scaled = Vec::new();
        for delta in [2usize, 4] {
            let d = build_decomposition(g, 4, 4, delta).unwrap();
            let thetas = build_partition_of_unity(&d);
            let mut reports = Vec::new();
            for pair in 0..16 {
                let (p, q) = if pair % 2 == 0 {
                    (random_edge(g, &mut r), random_edge(g, &mut r))
                } else {
                    let phi: Vec<f64> =
                        (0..g.vertex_count()).map(|_| r.gen_range(-0.25..0.25)).collect();
                    (vertex_curl(g, &phi).unwrap(), EdgeField::zeros(g))
                };
                let (_, report) = stable_decompose(&d, &thetas, &p, &q).unwrap();
                reports.push(report);
            }
            let constants = fit_stable_constants(&reports);
            assert!(constants.c1 <= 10.0, "c1 = {}", constants.c1);
            assert!(constants.c2 > 0.0);
            scaled.push(constants.c2 * (delta * delta) as f64);
        }
        let ratio = scaled.iter().fold(0.0_f64, |m, &v| m.max(v))
            / scaled.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        assert!(ratio <= 10.0, "c2 * delta^2 spread {ratio}");
    }

    #[test]
    fn infeasible_inputs_are_rejected() {
        let g = GridGeometry::unit(16, 16).unwrap();
        let d = build_decomposition(g, 2, 2, 2).unwrap();
        let thetas = build_partition_of_unity(&d);
        let mut p = EdgeField::zeros(g);
        p.set_x(0, 0, 1.5);
        assert!(stable_decompose(&d, &thetas, &p, &EdgeField::zeros(g)).is_err());
    }

    #[test]
    fn fit_recovers_planted_rate_and_threshold() {
        let gaps: Vec<f64> = (0..80).map(|n| 0.5_f64.powi(n) * 10.0 + 1e-9).collect();
        let fit = fit_pseudo_linear(&gaps);
        assert!(fit.valid);
        assert!((fit.gamma - 0.5).abs() <= 0.01, "gamma {}", fit.gamma);
        assert!(
            fit.threshold >= 0.5e-9 && fit.threshold <= 1.5e-9,
            "threshold {}",
            fit.threshold
        );
    }

    #[test]
    fn fit_rejects_constant_sequences() {
        let gaps = vec![3.0; 50];
        assert!(!fit_pseudo_linear(&gaps).valid);
        assert!(!fit_pseudo_linear(&gaps[..5]).valid);
    }

    #[test]
    fn fit_handles_plateau_free_decay() {
        let gaps: Vec<f64> = (0..60).map(|n| 0.8_f64.powi(n)).collect();
        let fit = fit_pseudo_linear(&gaps);
        assert!(fit.valid);
        assert!((fit.gamma - 0.8).abs() <= 0.01);
        assert!(fit.threshold <= *gaps.last().unwrap());
    }

    #[test]
    fn psnr_examples() {
        let g = GridGeometry::unit(10, 10).unwrap();
        let mut r = rng(98);
        let clean = random_cell(g, &mut r);

        // Uniform error of 0.1 per pixel: 10 log10(1 / 0.01) = 20 dB.
        let mut noisy = clean.clone();
        noisy.axpy(1.0, &CellField::constant(g, 0.1));
        assert!((psnr(&noisy, &clean).unwrap() - 20.0).abs() < 1e-12);

        // Identical images saturate.
        assert_eq!(psnr(&clean, &clean).unwrap(), f64::INFINITY);

        // Halving the error field adds 10 log10(4) dB.
        let mut err = random_cell(g, &mut r);
        err.scale(0.05);
        let mut u1 = clean.clone();
        u1.axpy(1.0, &err);
        let mut u2 = clean.clone();
        u2.axpy(0.5, &err);
        let gain = psnr(&u2, &clean).unwrap() - psnr(&u1, &clean).unwrap();
        assert!((gain - 10.0 * 4.0_f64.log10()).abs() < 1e-9);

        let other = CellField::zeros(GridGeometry::unit(9, 10).unwrap());
        assert!(psnr(&other, &clean).is_err());
    }
}
