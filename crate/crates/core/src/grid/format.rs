//! Plain-text value field files: `key = value` header lines, a blank line,
//! then one value per line in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Grid, ValueField, ValueKind};
use crate::error::{Error, Result};

/// Digits after the point in scientific notation; 17 significant digits.
pub const FORMAT_PRECISION: usize = 16;

pub(crate) fn fmt_scalar(x: f64) -> String {
    format!("{x:.prec$e}", prec = FORMAT_PRECISION)
}

pub(crate) fn fmt_vector(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_scalar(x)).collect::<Vec<_>>().join(", ")
}

pub fn field_to_string(field: &ValueField) -> String {
    let grid = field.grid();
    let mut out = String::with_capacity(grid.len() * 26 + 256);
    let counts = grid
        .counts()
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "dim = {}", grid.dim());
    let _ = writeln!(out, "lower = {}", fmt_vector(grid.lower()));
    let _ = writeln!(out, "upper = {}", fmt_vector(grid.upper()));
    let _ = writeln!(out, "counts = {counts}");
    let _ = writeln!(out, "gamma = {}", fmt_scalar(field.gamma()));
    let _ = writeln!(out, "kind = {}", field.kind());
    out.push('\n');
    for &v in field.values() {
        out.push_str(&fmt_scalar(v));
        out.push('\n');
    }
    out
}

pub fn field_from_str(text: &str, origin: &str) -> Result<ValueField> {
    let mut lines = text.lines().enumerate();
    let mut dim = None;
    let mut lower = None;
    let mut upper = None;
    let mut counts = None;
    let mut gamma = None;
    let mut kind = None;
    for (lineno, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() {
            break;
        }
        let at = |msg: String| Error::parse(origin, format!("line {}: {msg}", lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "dim" => dim = Some(value.parse::<usize>().map_err(|e| at(e.to_string()))?),
            "lower" => lower = Some(parse_floats(value).map_err(at)?),
            "upper" => upper = Some(parse_floats(value).map_err(at)?),
            "counts" => {
                counts = Some(
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| at(e.to_string()))?,
                )
            }
            "gamma" => gamma = Some(value.parse::<f64>().map_err(|e| at(e.to_string()))?),
            "kind" => kind = Some(value.parse::<ValueKind>().map_err(|e| at(e.to_string()))?),
            other => return Err(at(format!("unknown header key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::parse(origin, format!("header is missing `{k}`"));
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let grid = Grid::new(
        lower.ok_or_else(|| missing("lower"))?,
        upper.ok_or_else(|| missing("upper"))?,
        counts.ok_or_else(|| missing("counts"))?,
    )?;
    if grid.dim() != dim {
        return Err(Error::parse(
            origin,
            format!("dim = {dim} but the grid vectors have {} entries", grid.dim()),
        ));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v = line.parse::<f64>().map_err(|e| {
            Error::parse(origin, format!("line {}: {e}", lineno + 1))
        })?;
        values.push(v);
    }
    ValueField::new(
        grid,
        values,
        gamma.ok_or_else(|| missing("gamma"))?,
        kind.ok_or_else(|| missing("kind"))?,
    )
}

fn parse_floats(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

pub fn write_value_field(path: &Path, field: &ValueField) -> Result<()> {
    fs::write(path, field_to_string(field)).map_err(|e| Error::io(path, e))
}

pub fn read_value_field(path: &Path) -> Result<ValueField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    field_from_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let grid = Grid::new(vec![-1.0], vec![1.0], vec![3]).unwrap();
        let field = ValueField::new(grid, vec![0.1, 0.0, -0.25], 0.1, ValueKind::Upper).unwrap();
        let text = field_to_string(&field);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("dim = 1"));
        assert_eq!(lines.next(), Some("lower = -1.0000000000000000e0"));
        assert_eq!(lines.next(), Some("upper = 1.0000000000000000e0"));
        assert_eq!(lines.next(), Some("counts = 3"));
        assert_eq!(lines.next(), Some("gamma = 1.0000000000000001e-1"));
        assert_eq!(lines.next(), Some("kind = upper"));
        assert_eq!(lines.next(), Some(""));
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(field_from_str("dim = 1\nfoo = 2\n\n", "t").is_err());
        let short = "dim = 1\nlower = 0\nupper = 1\ncounts = 3\ngamma = 0.1\nkind = lower\n\n0\n1\n";
        assert!(matches!(field_from_str(short, "t"), Err(Error::Shape(_))));
        let nan = "dim = 1\nlower = 0\nupper = 1\ncounts = 3\ngamma = 0.1\nkind = lower\n\n0\nNaN\n1\n";
        assert!(matches!(field_from_str(nan, "t"), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(
            values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 12),
            gamma in 1e-6f64..10.0,
        ) {
            let grid = Grid::new(vec![-0.3, 1e-3], vec![0.7, 2.5], vec![4, 3]).unwrap();
            let field = ValueField::new(grid, values, gamma, ValueKind::Lower).unwrap();
            let back = field_from_str(&field_to_string(&field), "t").unwrap();
            prop_assert_eq!(back, field);
        }
    }
}
