//! Seeded additive Gaussian noise.

use dualtv::CellField;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Add i.i.d. normal noise with the given variance, drawn from a seeded
/// deterministic stream (Box-Muller over a counter-based generator, pixels
/// in canonical order). Values are intentionally not clamped: the models
/// consume the raw noisy data. The same seed reproduces the field bit for
/// bit.
pub fn add_gaussian_noise(u: &CellField, variance: f64, seed: u64) -> CellField {
    if variance == 0.0 {
        return u.clone();
    }
    let sigma = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = u.clone();
    let values = out.values_mut();
    let mut i = 0;
    while i < values.len() {
        // Box-Muller pair; u1 is kept away from zero for the logarithm.
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        let radius = sigma * (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        values[i] += radius * angle.cos();
        if i + 1 < values.len() {
            values[i + 1] += radius * angle.sin();
        }
        i += 2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use dualtv::GridGeometry;

    #[test]
    fn zero_variance_is_the_identity() {
        let g = GridGeometry::unit(8, 8).unwrap();
        let u = CellField::constant(g, 0.4);
        assert_eq!(add_gaussian_noise(&u, 0.0, 7), u);
    }

    #[test]
    fn same_seed_reproduces_bit_identical_noise() {
        let g = GridGeometry::unit(16, 16).unwrap();
        let u = CellField::constant(g, 0.5);
        let a = add_gaussian_noise(&u, 0.05, 1234);
        let b = add_gaussian_noise(&u, 0.05, 1234);
        assert_eq!(a, b);
        let c = add_gaussian_noise(&u, 0.05, 1235);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_moments_match_within_standard_error() {
        let g = GridGeometry::unit(512, 512).unwrap();
        let u = CellField::zeros(g);
        let noisy = add_gaussian_noise(&u, 0.05, 99);
        let n = g.cell_count() as f64;
        let mean: f64 = noisy.values().iter().sum::<f64>() / n;
        let var: f64 = noisy.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let se_mean = (0.05f64).sqrt() / n.sqrt();
        let se_var = 0.05 * (2.0 / n).sqrt();
        assert!(mean.abs() <= 3.0 * se_mean, "mean {mean} vs {se_mean}");
        assert!((var - 0.05).abs() <= 3.0 * se_var, "variance {var}");
    }

    #[test]
    fn noise_is_not_clamped() {
        let g = GridGeometry::unit(64, 64).unwrap();
        let u = CellField::constant(g, 1.0);
        let noisy = add_gaussian_noise(&u, 0.05, 3);
        assert!(noisy.values().iter().any(|&v| v > 1.0));
    }
}
