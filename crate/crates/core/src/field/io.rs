//! ScalarField serialization: 16-bit binary PGM for images in `[0,1]` and
//! plain CSV (one line per grid row, `j = 0` first) for exact values.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{FieldError, GridFunction, GridSpec, ScalarField};

fn io_err(path: &Path, source: std::io::Error) -> FieldError {
    FieldError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> FieldError {
    FieldError::Parse {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Writes `u` as a 16-bit P5 PGM, clamping values to `[0,1]`.
pub fn write_pgm(u: &ScalarField, path: impl AsRef<Path>) -> Result<(), FieldError> {
    let path = path.as_ref();
    let m = u.spec().side();
    let mut buf = format!("P5\n{m} {m}\n65535\n").into_bytes();
    buf.reserve(2 * u.values().len());
    for &v in u.values() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Reads a square binary PGM (8- or 16-bit) into a field scaled to `[0,1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<ScalarField, FieldError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| io_err(path, e))?;

    // header: magic, width, height, maxval separated by whitespace, with
    // optional '#' comments
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, "truncated PGM header"));
        }
        tokens.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;

    if tokens[0] != "P5" {
        return Err(parse_err(path, format!("unsupported magic {:?}", tokens[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(path, format!("bad header field {s:?}")))
    };
    let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if w != h {
        return Err(parse_err(path, format!("image must be square, got {w}x{h}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(path, format!("bad maxval {maxval}")));
    }
    let spec = GridSpec::new(w)?;
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let raster = data.get(pos..).unwrap_or(&[]);
    if raster.len() < spec.len() * bytes_per {
        return Err(parse_err(path, "truncated raster"));
    }
    let scale = 1.0 / maxval as f64;
    let values = raster
        .chunks_exact(bytes_per)
        .take(spec.len())
        .map(|c| {
            let q = if bytes_per == 2 {
                u16::from_be_bytes([c[0], c[1]]) as f64
            } else {
                c[0] as f64
            };
            q * scale
        })
        .collect();
    ScalarField::from_values(spec, values)
}

/// Writes exact values, shortest round-trip formatting.
pub fn write_csv(u: &ScalarField, path: impl AsRef<Path>) -> Result<(), FieldError> {
    let path = path.as_ref();
    let m = u.spec().side();
    let mut out = Vec::with_capacity(u.values().len() * 20);
    for row in u.values().chunks(m) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(b',');
            }
            first = false;
            write!(out, "{v}").expect("write to Vec");
        }
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<ScalarField, FieldError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| {
                parse_err(path, format!("line {}: bad number {:?}", lineno + 1, tok))
            })?;
            values.push(v);
        }
        let n = values.len() - before;
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(parse_err(
                    path,
                    format!("line {}: expected {w} columns, got {n}", lineno + 1),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let w = width.unwrap_or(0);
    if w != rows {
        return Err(parse_err(path, format!("field must be square, got {rows} rows of {w}")));
    }
    ScalarField::from_values(GridSpec::new(w)?, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(7).unwrap();
        let u = ScalarField::from_fn(spec, |x, y| (x * 13.0).sin() * y.exp() / 3.0);
        let path = dir.path().join("u.csv");
        write_csv(&u, &path).unwrap();
        let v = read_csv(&path).unwrap();
        assert_eq!(u, v);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn pgm_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(16).unwrap();
        let u = ScalarField::from_fn(spec, |x, y| x * y);
        let path = dir.path().join("u.pgm");
        write_pgm(&u, &path).unwrap();
        let v = read_pgm(&path).unwrap();
        assert!((&u - &v).norm_linf() <= 0.5 / 65535.0 + 1e-15);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_csv(&path), Err(FieldError::Parse { .. })));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_csv("/nonexistent/field.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/field.csv"));
    }
}
