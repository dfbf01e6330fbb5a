//! Grayscale PGM (P2 ascii / P5 binary) reading and writing, 8- and 16-bit.
//!
//! Loaded pixel values are scaled to `[0, 1]` by the file's maxval; saving
//! clamps to `[0, 1]` and quantizes at the requested bit depth, so a save
//! and load round trip moves each pixel by at most half a quantization
//! step.

use std::path::Path;

use dualtv::{CellField, GridGeometry};

use crate::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct PgmImage {
    pub field: CellField,
    pub maxval: u16,
}

/// Which PGM encoding to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    Ascii,
    Binary,
}

pub fn load_pgm(path: &Path) -> CliResult<PgmImage> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_pgm(&bytes).map_err(|e| match e {
        CliError::Io(msg) => CliError::Io(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_pgm(
    field: &CellField,
    path: &Path,
    maxval: u16,
    format: PgmFormat,
) -> CliResult<()> {
    let bytes = encode_pgm(field, maxval, format)?;
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Header tokenizer: skips whitespace and `#` comments.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_filler(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn next_int(&mut self) -> CliResult<u64> {
        self.skip_filler();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(CliError::Io("malformed PGM header: expected an integer".into()));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| CliError::Io("malformed PGM header".into()))?;
        text.parse::<u64>()
            .map_err(|_| CliError::Io(format!("malformed PGM integer {text}")))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> CliResult<PgmImage> {
    if bytes.len() < 2 {
        return Err(CliError::Io("truncated PGM: missing magic number".into()));
    }
    let binary = match &bytes[..2] {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(CliError::Io(format!(
                "unsupported format: expected P2 or P5, found {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut tokens = Tokens { bytes, pos: 2 };
    let width = tokens.next_int()? as usize;
    let height = tokens.next_int()? as usize;
    let maxval = tokens.next_int()?;
    if width == 0 || height == 0 {
        return Err(CliError::Io(format!("invalid PGM size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(CliError::Io(format!("invalid PGM maxval {maxval}")));
    }
    let maxval = maxval as u16;
    let count = width * height;
    let scale = 1.0 / maxval as f64;

    let mut values = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the payload.
        if tokens.pos >= bytes.len() || !bytes[tokens.pos].is_ascii_whitespace() {
            return Err(CliError::Io("malformed P5 header: missing separator".into()));
        }
        let payload = &bytes[tokens.pos + 1..];
        if maxval < 256 {
            if payload.len() < count {
                return Err(CliError::Io(format!(
                    "truncated P5 payload: need {count} bytes, found {}",
                    payload.len()
                )));
            }
            values.extend(payload[..count].iter().map(|&b| b as f64 * scale));
        } else {
            if payload.len() < 2 * count {
                return Err(CliError::Io(format!(
                    "truncated P5 payload: need {} bytes, found {}",
                    2 * count,
                    payload.len()
                )));
            }
            for chunk in payload[..2 * count].chunks_exact(2) {
                let v = u16::from_be_bytes([chunk[0], chunk[1]]);
                values.push(v as f64 * scale);
            }
        }
    } else {
        for _ in 0..count {
            let v = tokens
                .next_int()
                .map_err(|_| CliError::Io("truncated P2 payload".into()))?;
            values.push(v as f64 * scale);
        }
    }
    for &v in &values {
        if v > 1.0 {
            return Err(CliError::Io("PGM sample exceeds maxval".into()));
        }
    }

    let geometry = GridGeometry::unit(width, height)
        .map_err(|e| CliError::Io(format!("invalid PGM geometry: {e}")))?;
    let field = CellField::new(geometry, values)
        .map_err(|e| CliError::Io(format!("invalid PGM data: {e}")))?;
    Ok(PgmImage { field, maxval })
}

pub fn encode_pgm(field: &CellField, maxval: u16, format: PgmFormat) -> CliResult<Vec<u8>> {
    if maxval == 0 {
        return Err(CliError::Config("PGM maxval must be positive".into()));
    }
    let g = field.geometry();
    let quantize = |v: f64| -> u16 { (v.clamp(0.0, 1.0) * maxval as f64).round() as u16 };
    let mut out = Vec::new();
    match format {
        PgmFormat::Binary => {
            out.extend_from_slice(format!("P5\n{} {}\n{}\n", g.m1, g.m2, maxval).as_bytes());
            if maxval < 256 {
                out.extend(field.values().iter().map(|&v| quantize(v) as u8));
            } else {
                for &v in field.values() {
                    out.extend_from_slice(&quantize(v).to_be_bytes());
                }
            }
        }
        PgmFormat::Ascii => {
            out.extend_from_slice(format!("P2\n{} {}\n{}\n", g.m1, g.m2, maxval).as_bytes());
            for row in field.values().chunks(g.m1) {
                // Keep ascii lines short (the format caps them at 70 chars;
                // 11 five-digit samples plus separators fit).
                for chunk in row.chunks(11) {
                    let line: Vec<String> =
                        chunk.iter().map(|&v| quantize(v).to_string()).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_example_scales_linearly() {
        let text = b"P2\n2 2\n255\n0 255\n128 64\n";
        let img = parse_pgm(text).unwrap();
        assert_eq!(img.maxval, 255);
        let v = img.field.values();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
        assert_eq!(v[2], 128.0 / 255.0);
        assert_eq!(v[3], 64.0 / 255.0);
    }

    #[test]
    fn ascii_and_binary_encodings_load_identically() {
        // The same 2x3 image hand-encoded both ways.
        let ascii = b"P2\n# a comment\n3 2\n255\n10 20 30\n40 50 60\n";
        let mut binary = b"P5\n3 2\n255\n".to_vec();
        binary.extend_from_slice(&[10, 20, 30, 40, 50, 60]);
        let a = parse_pgm(ascii).unwrap();
        let b = parse_pgm(&binary).unwrap();
        assert_eq!(a.maxval, b.maxval);
        assert_eq!(a.field, b.field);
    }

    #[test]
    fn round_trip_stays_within_half_a_quantization_step() {
        let g = GridGeometry::unit(5, 4).unwrap();
        let values: Vec<f64> = (0..20).map(|k| k as f64 / 19.0).collect();
        let field = CellField::new(g, values).unwrap();
        for (maxval, format) in [
            (255u16, PgmFormat::Binary),
            (255, PgmFormat::Ascii),
            (65535, PgmFormat::Binary),
            (4095, PgmFormat::Ascii),
        ] {
            let bytes = encode_pgm(&field, maxval, format).unwrap();
            let back = parse_pgm(&bytes).unwrap();
            assert_eq!(back.maxval, maxval);
            let tol = 0.5 / maxval as f64 + 1e-12;
            for (a, b) in field.values().iter().zip(back.field.values()) {
                assert!((a - b).abs() <= tol, "{a} vs {b} at maxval {maxval}");
            }
        }
    }

    #[test]
    fn sixteen_bit_binary_uses_big_endian_pairs() {
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x00, 0x00, 0xff, 0xff]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!(img.field.values(), &[0.0, 1.0]);
    }

    #[test]
    fn malformed_inputs_give_descriptive_io_errors() {
        let cases: Vec<Vec<u8>> = vec![
            b"P6\n2 2\n255\n".to_vec(),                   // unsupported format
            b"P2\n2\n".to_vec(),                          // header cut short
            b"P2\n2 2\n0\n0 0 0 0\n".to_vec(),            // maxval zero
            b"P2\n2 2\n70000\n0 0 0 0\n".to_vec(),        // maxval too large
            b"P2\n2 2\n255\n0 0 0\n".to_vec(),            // truncated payload
            b"P5\n2 2\n255\n".to_vec(),                   // missing binary payload
            b"P2\n2 2\n255\n0 0 0 999\n".to_vec(),        // sample above maxval
        ];
        for case in cases {
            match parse_pgm(&case) {
                Err(CliError::Io(_)) => {}
                other => panic!("expected an I/O error, got {other:?}"),
            }
        }
    }

    #[test]
    fn save_and_load_round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let g = GridGeometry::unit(3, 3).unwrap();
        let field = CellField::new(g, (0..9).map(|k| k as f64 / 8.0).collect()).unwrap();
        save_pgm(&field, &path, 255, PgmFormat::Binary).unwrap();
        let back = load_pgm(&path).unwrap();
        for (a, b) in field.values().iter().zip(back.field.values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert!(load_pgm(&dir.path().join("missing.pgm")).is_err());
    }
}
