//! Readers for spectral archive files.
//!
//! Two formats cover the fixtures and the common public archives: RRUFF-style
//! text (## headers followed by comma-separated x,y pairs) and bare
//! two-column CSV.

use crate::error::{Error, Result};
use crate::spectra::{Meta, RawSpectrum, SpectrumKind};

/// Parse an RRUFF-style text file.
///
/// Header lines look like `##NAMES=Quartz`; everything until an optional
/// `##END` is `x, y` pairs. Pairs may appear in any order; duplicated
/// positions are collapsed by averaging.
pub fn parse_rruff_text(bytes: &[u8], kind: SpectrumKind) -> Result<RawSpectrum> {
    let text = String::from_utf8_lossy(bytes);
    let mut meta = Meta::new();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("##") {
            let (key, value) = rest.split_once('=').unwrap_or((rest, ""));
            let key = key.trim().to_lowercase();
            if key == "end" {
                break;
            }
            let meta_key = if key == "names" || key == "name" { "name".to_string() } else { key };
            meta.insert(meta_key, value.trim().to_string());
            continue;
        }
        points.push(parse_pair(line, lineno)?);
    }
    finish(points, kind, meta)
}

/// Parse a two-column CSV (`x,y`), with an optional single header row.
pub fn parse_csv_xy(bytes: &[u8], kind: SpectrumKind) -> Result<RawSpectrum> {
    let text = String::from_utf8_lossy(bytes);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match parse_pair(line, lineno) {
            Ok(p) => points.push(p),
            // Only the first row may be a non-numeric header.
            Err(e) if lineno == 0 && points.is_empty() => {
                let _ = e;
            }
            Err(e) => return Err(e),
        }
    }
    finish(points, kind, Meta::new())
}

fn parse_pair(line: &str, lineno: usize) -> Result<(f64, f64)> {
    let mut it = line.split(',').map(str::trim);
    let (Some(xs), Some(ys)) = (it.next(), it.next()) else {
        return Err(Error::Parse(format!("line {}: expected `x, y`", lineno + 1)));
    };
    if it.next().is_some() {
        return Err(Error::Parse(format!("line {}: more than two columns", lineno + 1)));
    }
    let x: f64 = xs
        .parse()
        .map_err(|_| Error::Parse(format!("line {}: bad number `{xs}`", lineno + 1)))?;
    let y: f64 = ys
        .parse()
        .map_err(|_| Error::Parse(format!("line {}: bad number `{ys}`", lineno + 1)))?;
    Ok((x, y))
}

fn finish(mut points: Vec<(f64, f64)>, kind: SpectrumKind, meta: Meta) -> Result<RawSpectrum> {
    if points.len() < 2 {
        return Err(Error::Parse(format!("need at least 2 data points, got {}", points.len())));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Collapse duplicate positions by averaging their intensities.
    let mut positions = Vec::with_capacity(points.len());
    let mut intensities = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        let x = points[i].0;
        let mut sum = 0.0;
        let mut n = 0usize;
        while i < points.len() && points[i].0 == x {
            sum += points[i].1;
            n += 1;
            i += 1;
        }
        positions.push(x);
        intensities.push(sum / n as f64);
    }
    if positions.len() < 2 {
        return Err(Error::Parse("fewer than 2 distinct positions".into()));
    }
    RawSpectrum::new(positions, intensities, kind, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rruff_basic() {
        let text = b"##NAMES=Quartz\n##RRUFFID=R100134\n100.0, 5.0\n101.0, 6.0\n##END=\n";
        let raw = parse_rruff_text(text, SpectrumKind::Raman).unwrap();
        assert_eq!(raw.positions(), &[100.0, 101.0]);
        assert_eq!(raw.intensities(), &[5.0, 6.0]);
        assert_eq!(raw.meta().get("name").unwrap(), "Quartz");
        assert_eq!(raw.meta().get("rruffid").unwrap(), "R100134");
    }

    #[test]
    fn rruff_headers_only_is_error() {
        let text = b"##NAMES=Quartz\n##END=\n";
        assert!(matches!(
            parse_rruff_text(text, SpectrumKind::Raman),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn rruff_descending_input_sorted() {
        let text = b"##NAME=X\n300.0, 3.0\n200.0, 2.0\n100.0, 1.0\n";
        let raw = parse_rruff_text(text, SpectrumKind::Raman).unwrap();
        assert_eq!(raw.positions(), &[100.0, 200.0, 300.0]);
        assert_eq!(raw.intensities(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn rruff_duplicate_positions_averaged() {
        let text = b"##NAME=X\n100.0, 2.0\n100.0, 4.0\n200.0, 1.0\n";
        let raw = parse_rruff_text(text, SpectrumKind::Raman).unwrap();
        assert_eq!(raw.positions(), &[100.0, 200.0]);
        assert_eq!(raw.intensities(), &[3.0, 1.0]);
    }

    #[test]
    fn csv_header_autoskip() {
        let text = b"wavelength,reflectance\n350.0, 0.5\n360.0, 0.6\n";
        let raw = parse_csv_xy(text, SpectrumKind::Vnir).unwrap();
        assert_eq!(raw.positions(), &[350.0, 360.0]);
    }

    #[test]
    fn csv_descending_sorted() {
        let text = b"360.0, 0.6\n350.0, 0.5\n";
        let raw = parse_csv_xy(text, SpectrumKind::Vnir).unwrap();
        assert_eq!(raw.positions(), &[350.0, 360.0]);
        assert_eq!(raw.intensities(), &[0.5, 0.6]);
    }

    #[test]
    fn csv_single_row_is_error() {
        assert!(matches!(
            parse_csv_xy(b"350.0, 0.5\n", SpectrumKind::Vnir),
            Err(Error::Parse(_))
        ));
        // A header plus one data row is still a single point.
        assert!(matches!(
            parse_csv_xy(b"x,y\n350.0, 0.5\n", SpectrumKind::Vnir),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn csv_garbage_mid_file_is_error() {
        assert!(matches!(
            parse_csv_xy(b"1.0, 2.0\nhello, there\n3.0, 4.0\n", SpectrumKind::Vnir),
            Err(Error::Parse(_))
        ));
    }
}
