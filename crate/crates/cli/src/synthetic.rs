//! Deterministic synthetic test images (the published test photographs are
//! not redistributable).

use dualtv::{CellField, GridGeometry};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Piecewise-constant rectangles on a flat background.
    Blocks,
    /// The same blocks with a horizontal brightness ramp on top.
    BlocksRamp,
}

impl SyntheticKind {
    pub fn parse(text: &str) -> CliResult<Self> {
        match text {
            "blocks" => Ok(SyntheticKind::Blocks),
            "blocks-ramp" => Ok(SyntheticKind::BlocksRamp),
            other => Err(CliError::Config(format!(
                "unknown synthetic image kind {other:?} (expected blocks or blocks-ramp)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::Blocks => "blocks",
            SyntheticKind::BlocksRamp => "blocks-ramp",
        }
    }
}

pub fn synthetic_image(kind: SyntheticKind, width: usize, height: usize) -> CliResult<CellField> {
    let geometry = GridGeometry::unit(width, height).map_err(CliError::from)?;
    let frac = |f: f64, n: usize| -> usize { (f * n as f64) as usize };
    let mut values = vec![0.2; geometry.cell_count()];
    let mut paint = |x0: usize, x1: usize, y0: usize, y1: usize, level: f64| {
        for j in y0..y1.min(height) {
            for i in x0..x1.min(width) {
                values[geometry.cell_index(i, j)] = level;
            }
        }
    };
    paint(0, width, frac(0.05, height), frac(0.12, height), 1.0);
    paint(
        frac(0.15, width),
        frac(0.55, width),
        frac(0.20, height),
        frac(0.60, height),
        0.85,
    );
    paint(
        frac(0.60, width),
        frac(0.85, width),
        frac(0.55, height),
        frac(0.85, height),
        0.5,
    );
    if kind == SyntheticKind::BlocksRamp {
        let denom = (width.max(2) - 1) as f64;
        for j in 0..height {
            for i in 0..width {
                let idx = geometry.cell_index(i, j);
                values[idx] = (values[idx] + 0.15 * i as f64 / denom).min(1.0);
            }
        }
    }
    CellField::new(geometry, values).map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_image_is_piecewise_constant_and_deterministic() {
        let a = synthetic_image(SyntheticKind::Blocks, 64, 64).unwrap();
        let b = synthetic_image(SyntheticKind::Blocks, 64, 64).unwrap();
        assert_eq!(a, b);
        let mut levels: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
        levels.sort_unstable();
        levels.dedup();
        assert!(levels.len() <= 4, "expected a handful of levels, got {}", levels.len());
        assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn ramp_variant_adds_gradient() {
        let flat = synthetic_image(SyntheticKind::Blocks, 32, 32).unwrap();
        let ramp = synthetic_image(SyntheticKind::BlocksRamp, 32, 32).unwrap();
        assert_ne!(flat, ramp);
        assert!(ramp.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(SyntheticKind::parse("blocks").unwrap(), SyntheticKind::Blocks);
        assert_eq!(
            SyntheticKind::parse("blocks-ramp").unwrap(),
            SyntheticKind::BlocksRamp
        );
        assert!(SyntheticKind::parse("peppers").is_err());
    }
}
