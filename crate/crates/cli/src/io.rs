//! On-disk formats: 16-bit binary PGM for count images, plain-text CSV
//! matrices for real-valued images, and `key = value` metadata files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pidal_core::{Counts, Image};

const PGM_MAX: f64 = 65535.0;

/// Writes counts as binary PGM (P5, maxval 65535, big-endian samples).
/// Errors if any count exceeds the 16-bit range.
pub fn write_pgm16(path: &Path, counts: &Counts) -> Result<()> {
    let image = counts.image();
    if let Some(&v) = image.data().iter().find(|&&v| v > PGM_MAX) {
        bail!(
            "count {v} exceeds the 16-bit PGM range at {}; data would saturate",
            path.display()
        );
    }
    let file = fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{} {}\n65535\n", image.width(), image.height())?;
    for &v in image.data() {
        let sample = v.round() as u16;
        out.write_all(&sample.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a binary PGM (P5); accepts 8-bit and 16-bit sample depth.
pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cursor = 0usize;

    let mut next_token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and '#' comment lines
        loop {
            while cursor < bytes.len() && bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if cursor < bytes.len() && bytes[cursor] == b'#' {
                while cursor < bytes.len() && bytes[cursor] != b'\n' {
                    cursor += 1;
                }
                continue;
            }
            break;
        }
        let start = cursor;
        while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
            cursor += 1;
        }
        if start == cursor {
            bail!("truncated PGM header");
        }
        Ok(String::from_utf8_lossy(&bytes[start..cursor]).into_owned())
    };

    let magic = next_token(&bytes)?;
    if magic != "P5" {
        bail!("{}: expected binary PGM (P5), found {magic}", path.display());
    }
    let width: usize = next_token(&bytes)?.parse().context("PGM width")?;
    let height: usize = next_token(&bytes)?.parse().context("PGM height")?;
    let maxval: u32 = next_token(&bytes)?.parse().context("PGM maxval")?;
    cursor += 1; // single whitespace after maxval

    let n = width * height;
    let data: Vec<f64> = if maxval <= 255 {
        if bytes.len() < cursor + n {
            bail!("{}: truncated PGM data", path.display());
        }
        bytes[cursor..cursor + n].iter().map(|&b| b as f64).collect()
    } else if maxval <= 65535 {
        if bytes.len() < cursor + 2 * n {
            bail!("{}: truncated PGM data", path.display());
        }
        bytes[cursor..cursor + 2 * n]
            .chunks_exact(2)
            .map(|pair| u16::from_be_bytes([pair[0], pair[1]]) as f64)
            .collect()
    } else {
        bail!("{}: unsupported PGM maxval {maxval}", path.display());
    };
    Image::new(height, width, data)
        .with_context(|| format!("invalid image data in {}", path.display()))
}

pub fn read_pgm_counts(path: &Path) -> Result<Counts> {
    let image = read_pgm(path)?;
    Counts::new(image).with_context(|| format!("invalid counts in {}", path.display()))
}

/// Writes a real-valued image as a CSV matrix; `f64` Display round-trips
/// exactly.
pub fn write_csv_matrix(path: &Path, image: &Image) -> Result<()> {
    let file = fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for r in 0..image.height() {
        let row = &image.data()[r * image.width()..(r + 1) * image.width()];
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b",")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a CSV matrix written by [`write_csv_matrix`] (or any plain
/// comma-separated numeric grid).
pub fn read_csv_matrix(path: &Path) -> Result<Image> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .with_context(|| format!("{}:{}: bad value {tok:?}", path.display(), line_no + 1))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Image::from_rows(&rows).with_context(|| format!("invalid matrix in {}", path.display()))
}

/// Loads either format by extension: `.pgm` binary graymap, anything else a
/// CSV matrix.
pub fn read_image_auto(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        _ => read_csv_matrix(path),
    }
}

/// Writes `key = value` metadata lines.
pub fn write_metadata(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let file = fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for (key, value) in entries {
        writeln!(out, "{key} = {value}")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a flat `key = value` file (the config-file format; `#` comments and
/// blank lines ignored).
pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut entries = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            bail!(
                "{}:{}: expected `key = value`, found {trimmed:?}",
                path.display(),
                line_no + 1
            );
        };
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Reads an entire file to a string (small helper for tests and reports).
pub fn read_to_string(path: &Path) -> Result<String> {
    let mut buf = String::new();
    fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_string(&mut buf)?;
    Ok(buf)
}
