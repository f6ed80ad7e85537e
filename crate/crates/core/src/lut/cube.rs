//! Adobe/Resolve `.cube` text interchange.
//!
//! ```text
//! LUT_3D_SIZE 2
//! 0.000000 0.000000 0.000000
//! 1.000000 0.000000 0.000000
//! ...
//! ```
//!
//! Data lines run red-fastest, then green, then blue.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::Lut3D;
use crate::error::{Error, Result};

pub fn write_cube<W: Write>(lut: &Lut3D, mut out: W) -> std::io::Result<()> {
    let d = lut.size();
    writeln!(out, "LUT_3D_SIZE {d}")?;
    for b in 0..d {
        for g in 0..d {
            for r in 0..d {
                let [x, y, z] = lut.get(r, g, b);
                writeln!(out, "{x:.6} {y:.6} {z:.6}")?;
            }
        }
    }
    out.flush()
}

pub fn export_cube(lut: &Lut3D, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path.as_ref())?;
    write_cube(lut, BufWriter::new(file))?;
    Ok(())
}

pub fn import_cube(path: impl AsRef<Path>) -> Result<Lut3D> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_cube(&text, path)
}

/// Parses `.cube` text; `origin` is only used in error messages.
pub fn parse_cube(text: &str, origin: &Path) -> Result<Lut3D> {
    let err = |line: usize, msg: String| Error::CubeParse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    let mut size: Option<usize> = None;
    let mut values: Vec<[f32; 3]> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().unwrap_or_default();
        match head {
            "TITLE" => continue,
            "LUT_3D_SIZE" => {
                if size.is_some() {
                    return Err(err(line_no, "duplicate LUT_3D_SIZE".into()));
                }
                let d = tokens
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| err(line_no, format!("invalid LUT_3D_SIZE line `{line}`")))?;
                if d < 2 {
                    return Err(err(line_no, format!("LUT_3D_SIZE must be >= 2, got {d}")));
                }
                size = Some(d);
            }
            "DOMAIN_MIN" | "DOMAIN_MAX" => {
                let expected = if head == "DOMAIN_MIN" { 0.0 } else { 1.0 };
                let vals: Vec<f32> = tokens.filter_map(|t| t.parse().ok()).collect();
                if vals.len() != 3 || vals.iter().any(|&v| v != expected) {
                    return Err(err(line_no, format!("only the unit domain is supported: `{line}`")));
                }
            }
            "LUT_1D_SIZE" => return Err(err(line_no, "1D LUTs are not supported".into())),
            _ => {
                let Some(d) = size else {
                    return Err(err(line_no, "data line before LUT_3D_SIZE".into()));
                };
                let parsed: Vec<f32> = line
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f32>()
                            .map_err(|_| err(line_no, format!("non-numeric token `{t}`")))
                    })
                    .collect::<Result<_>>()?;
                if parsed.len() != 3 {
                    return Err(err(line_no, format!("expected 3 values, found {}", parsed.len())));
                }
                if values.len() == d * d * d {
                    return Err(err(line_no, format!("expected D³ entries ({d}³ = {}), found more", d * d * d)));
                }
                values.push([parsed[0], parsed[1], parsed[2]]);
            }
        }
    }

    let d = size.ok_or_else(|| err(last_line.max(1), "missing LUT_3D_SIZE".into()))?;
    if values.len() != d * d * d {
        return Err(err(
            last_line,
            format!("expected D³ entries ({d}³ = {}), found {}", d * d * d, values.len()),
        ));
    }

    // File order is red-fastest; the lattice is stored (r, g, b, channel).
    let mut table = vec![0.0f32; d * d * d * 3];
    for (n, rgb) in values.iter().enumerate() {
        let r = n % d;
        let g = (n / d) % d;
        let b = n / (d * d);
        let idx = ((r * d + g) * d + b) * 3;
        table[idx..idx + 3].copy_from_slice(rgb);
    }
    Lut3D::from_table(d, table)
}
