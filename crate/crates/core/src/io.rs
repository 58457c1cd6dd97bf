//! Text formats: the CALFIELD node dump and CSV export of DN matrices.
//!
//! A field dump starts with `CALFIELD v1 m=<m> L=<L>` followed by one line `i j k re im` per
//! node in flat order. Floats are written with Rust's shortest round-trip formatting, so a
//! dump reloads bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{CalError, Result};
use crate::field::ScalarField;
use crate::forward::DnMap;
use crate::geometry::Grid;

pub fn field_to_string(field: &ScalarField) -> String {
    let m = field.m;
    let mut s = String::with_capacity(40 * field.values.len() + 40);
    writeln!(s, "CALFIELD v1 m={} L={}", m, field.l).unwrap();
    for (g, v) in field.values.iter().enumerate() {
        writeln!(s, "{} {} {} {} {}", g / (m * m), (g / m) % m, g % m, v.re, v.im).unwrap();
    }
    s
}

pub fn dump_field(field: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, field_to_string(field))?;
    Ok(())
}

fn perr<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(CalError::Parse { line, msg: msg.into() })
}

pub fn field_from_str(text: &str) -> Result<ScalarField> {
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(h) => h,
        None => return perr(1, "empty file"),
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "CALFIELD" || parts[1] != "v1" {
        return perr(1, format!("bad header {header:?}"));
    }
    let m: usize = match parts[2].strip_prefix("m=").and_then(|v| v.parse().ok()) {
        Some(v) if v >= 2 => v,
        _ => return perr(1, format!("bad m in header {header:?}")),
    };
    let l: f64 = match parts[3].strip_prefix("L=").and_then(|v| v.parse().ok()) {
        Some(v) => v,
        None => return perr(1, format!("bad L in header {header:?}")),
    };
    let n = m * m * m;
    let mut values = Vec::with_capacity(n);
    for g in 0..n {
        let ln = g + 2;
        let line = match lines.next() {
            Some(x) => x,
            None => return perr(ln, format!("file ends after {g} of {n} nodes")),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return perr(ln, format!("expected 5 fields, got {}", f.len()));
        }
        let idx: Vec<usize> = match f[..3].iter().map(|t| t.parse()).collect() {
            Ok(v) => v,
            Err(_) => return perr(ln, "bad node index"),
        };
        if idx != [g / (m * m), (g / m) % m, g % m] {
            return perr(ln, format!("node {idx:?} out of order"));
        }
        let (re, im) = match (f[3].parse::<f64>(), f[4].parse::<f64>()) {
            (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => (a, b),
            _ => return perr(ln, "bad value"),
        };
        values.push(C64::new(re, im));
    }
    if let Some((k, extra)) = lines.enumerate().find(|(_, x)| !x.trim().is_empty()) {
        return perr(n + 2 + k, format!("unexpected trailing line {extra:?}"));
    }
    Ok(ScalarField { m, l, values })
}

/// Loads a dump; with a grid, also checks that the declared size and L match it.
pub fn load_field(path: &Path, grid: Option<&Grid>) -> Result<ScalarField> {
    let f = field_from_str(&fs::read_to_string(path)?)?;
    if let Some(g) = grid {
        if f.m != g.m {
            return Err(CalError::DimensionMismatch { expected: g.n_nodes(), got: f.values.len() });
        }
        f.check_grid(g)?;
    }
    Ok(f)
}

/// Row-major CSV with `re,im` pairs per entry.
pub fn dn_to_csv(map: &DnMap) -> String {
    let mut s = String::with_capacity(map.n * map.n * 24);
    for row in map.matrix.chunks_exact(map.n) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{},{}", v.re, v.im).unwrap();
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;
    use crate::rng::Lcg64;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let mut r = Lcg64::new(7);
        let values = (0..g.n_nodes()).map(|_| C64::new(r.range(-1e3, 1e3) * 1e-7, r.uniform() / 3.0)).collect();
        let f = ScalarField::from_values(&g, values).unwrap();
        let back = field_from_str(&field_to_string(&f)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn truncated_file_reports_line() {
        let g = make_grid(2.0, 1.0, 9, 16).unwrap();
        let text = field_to_string(&ScalarField::zeros(&g));
        let cut: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        match field_from_str(&cut) {
            Err(CalError::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_mismatch() {
        let g9 = make_grid(2.0, 1.0, 9, 16).unwrap();
        let g11 = make_grid(2.0, 1.0, 11, 16).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        dump_field(&ScalarField::zeros(&g9), &p).unwrap();
        assert!(matches!(load_field(&p, Some(&g11)), Err(CalError::DimensionMismatch { .. })));
        assert!(load_field(&p, Some(&g9)).is_ok());
    }
}
