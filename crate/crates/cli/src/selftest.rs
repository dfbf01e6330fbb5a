//! Fast self-contained verification of the discrete inequalities and the
//! plumbing, printable as one line per check.

use dualtv::analysis::build_partition_of_unity;
use dualtv::grid::{interpolate_cutoff, inverse_inequality_check};
use dualtv::schwarz::build_decomposition;
use dualtv::{CellField, EdgeField, EnergyModel, GridGeometry, ModelKind};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::noise::add_gaussian_noise;
use crate::pgm::{encode_pgm, parse_pgm, PgmFormat};

pub struct SelftestOutcome {
    pub report: String,
    pub passed: bool,
}

struct Suite {
    report: String,
    passed: bool,
}

impl Suite {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.report.push_str(&format!(
            "[{}] {name}: {detail}\n",
            if ok { "ok" } else { "FAIL" }
        ));
        self.passed &= ok;
    }
}

fn random_edge(g: GridGeometry, rng: &mut ChaCha8Rng) -> EdgeField {
    let x = (0..g.x_edge_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = (0..g.y_edge_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    EdgeField::new(g, x, y).unwrap()
}

fn random_cell(g: GridGeometry, rng: &mut ChaCha8Rng) -> CellField {
    CellField::new(g, (0..g.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn run_selftest() -> SelftestOutcome {
    let mut suite = Suite {
        report: String::new(),
        passed: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Adjointness of the divergence pair across geometries.
    let mut worst_adj = 0.0f64;
    for (m1, m2) in [(1usize, 2usize), (3, 3), (17, 5), (64, 64)] {
        let g = GridGeometry::unit(m1, m2).unwrap();
        for _ in 0..50 {
            let p = random_edge(g, &mut rng);
            let u = random_cell(g, &mut rng);
            let lhs = p.divergence().dot(&u).unwrap();
            let rhs = p.dot(&u.divergence_adjoint()).unwrap();
            let scale = (p.norm() * u.norm()).max(1e-300);
            worst_adj = worst_adj.max((lhs - rhs).abs() / scale);
        }
    }
    suite.check(
        "adjointness <div p, u> = <p, div* u>",
        worst_adj <= 1e-12,
        format!("worst relative defect {worst_adj:.2e}"),
    );

    // Inverse inequality and constraint diameter.
    let g = GridGeometry::unit(64, 64).unwrap();
    let mut inv_ok = true;
    let mut diam_ok = true;
    for _ in 0..200 {
        let p = random_edge(g, &mut rng);
        let (lhs, rhs) = inverse_inequality_check(&p);
        inv_ok &= lhs <= rhs * (1.0 + 1e-14);
        let q = random_edge(g, &mut rng);
        let mut d = p.clone();
        d.axpy(-1.0, &q);
        diam_ok &= d.norm_squared() <= 8.0 * g.area() + 1e-9;
    }
    suite.check(
        "inverse inequality ||div p||^2 <= 8/h^2 ||p||^2",
        inv_ok,
        "200 random fields".into(),
    );
    suite.check(
        "constraint diameter ||p-q||^2 <= 8 |Omega|",
        diam_ok,
        "200 random feasible pairs".into(),
    );

    // Gradient consistency for both models.
    let g16 = GridGeometry::unit(16, 16).unwrap();
    let mut worst_grad = 0.0f64;
    for kind in [ModelKind::Rof, ModelKind::TvH1] {
        let model = EnergyModel::new(kind, 10.0, random_cell(g16, &mut rng)).unwrap();
        let p = random_edge(g16, &mut rng);
        let grad = model.dual_gradient(&p).unwrap();
        for _ in 0..20 {
            let q = random_edge(g16, &mut rng);
            let eps = 1e-5;
            let mut plus = p.clone();
            plus.axpy(eps, &q);
            let mut minus = p.clone();
            minus.axpy(-eps, &q);
            let fd = (model.dual_energy(&plus).unwrap() - model.dual_energy(&minus).unwrap())
                / (2.0 * eps);
            let ip = grad.dot(&q).unwrap();
            worst_grad = worst_grad.max((fd - ip).abs() / ip.abs().max(1e-10));
        }
    }
    suite.check(
        "dual gradient vs central differences",
        worst_grad <= 1e-6,
        format!("worst relative error {worst_grad:.2e}"),
    );

    // Partition of unity over a touching-overlap decomposition.
    let decomp = build_decomposition(g, 4, 4, 8).unwrap();
    let thetas = build_partition_of_unity(&decomp);
    let mut worst_sum = 0.0f64;
    for v in 0..g.vertex_count() {
        let total: f64 = thetas.iter().map(|t| t.values()[v]).sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
    }
    suite.check(
        "partition of unity sums to one",
        worst_sum <= 1e-14,
        format!("worst defect {worst_sum:.2e}"),
    );

    // Interpolation stability constant (reported, bounded).
    let mut worst_c = 0.0f64;
    for theta in &thetas {
        let grad_sq = theta.max_gradient().powi(2);
        for _ in 0..5 {
            let p = random_edge(g, &mut rng);
            let lhs = interpolate_cutoff(theta, &p).unwrap().divergence().norm_squared();
            let rhs = p.divergence().norm_squared() + grad_sq * p.norm_squared();
            worst_c = worst_c.max(lhs / rhs);
        }
    }
    suite.check(
        "interpolation stability constant",
        worst_c <= 8.0,
        format!("measured c = {worst_c:.3}"),
    );

    // Image plumbing round trips.
    let img = crate::synthetic::synthetic_image(crate::synthetic::SyntheticKind::Blocks, 16, 16)
        .unwrap();
    let bytes = encode_pgm(&img, 255, PgmFormat::Binary).unwrap();
    let back = parse_pgm(&bytes).unwrap();
    let round_trip_ok = img
        .values()
        .iter()
        .zip(back.field.values())
        .all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12);
    suite.check("pgm round trip", round_trip_ok, "8-bit binary".into());

    let noisy_a = add_gaussian_noise(&img, 0.05, 11);
    let noisy_b = add_gaussian_noise(&img, 0.05, 11);
    suite.check(
        "seeded noise determinism",
        noisy_a == noisy_b,
        "same seed, identical field".into(),
    );

    SelftestOutcome {
        passed: suite.passed,
        report: suite.report,
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        let outcome = super::run_selftest();
        assert!(outcome.passed, "{}", outcome.report);
        assert!(outcome.report.lines().count() >= 7);
    }
}
