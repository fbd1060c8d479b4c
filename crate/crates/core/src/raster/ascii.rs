use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Grid, Header};
use crate::error::{Error, Result};
use crate::numfmt::sig6;

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ascii_grid(&text, path)
}

/// Parses ASCII grid text; `origin` only labels diagnostics.
pub fn parse_ascii_grid(text: &str, origin: impl AsRef<Path>) -> Result<Grid> {
    let origin = origin.as_ref();
    let mut fields: [Option<&str>; 6] = [None; 6];
    let mut lines = text.lines().enumerate().peekable();

    for slot in 0..HEADER_KEYS.len() {
        let Some((idx, line)) = lines.next() else {
            return Err(Error::parse(origin, slot + 1, "truncated header"));
        };
        let lineno = idx + 1;
        let mut parts = line.split_whitespace();
        let (Some(key), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(origin, lineno, format!("malformed header line {line:?}")));
        };
        let key_lc = key.to_ascii_lowercase();
        let Some(k) = HEADER_KEYS.iter().position(|&h| h == key_lc) else {
            return Err(Error::parse(origin, lineno, format!("malformed header key {key:?}")));
        };
        if fields[k].replace(value).is_some() {
            return Err(Error::parse(origin, lineno, format!("duplicate header key {key:?}")));
        }
    }

    let header_line = |k: usize| {
        text.lines()
            .take(HEADER_KEYS.len())
            .position(|l| {
                l.split_whitespace()
                    .next()
                    .is_some_and(|w| w.eq_ignore_ascii_case(HEADER_KEYS[k]))
            })
            .map_or(0, |p| p + 1)
    };
    let int = |k: usize| -> Result<usize> {
        let raw = fields[k].expect("all six keys present");
        raw.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::parse(origin, header_line(k), format!("{} must be a positive integer, got {raw:?}", HEADER_KEYS[k])))
    };
    let real = |k: usize| -> Result<f64> {
        let raw = fields[k].expect("all six keys present");
        raw.parse::<f64>()
            .map_err(|_| Error::parse(origin, header_line(k), format!("{} is not a number: {raw:?}", HEADER_KEYS[k])))
    };
    let header = Header::new(int(0)?, int(1)?, real(2)?, real(3)?, real(4)?, real(5)?);
    if !(header.cellsize > 0.0) {
        return Err(Error::parse(origin, header_line(4), "cellsize must be positive"));
    }

    let expected = header.len();
    let mut values = Vec::with_capacity(expected);
    for (idx, line) in lines {
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| {
                Error::parse(origin, idx + 1, format!("non-numeric token {token:?}"))
            })?;
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(Error::ValueCount(origin.to_path_buf(), expected, values.len()));
    }
    Grid::new(header, values).map_err(|e| match e {
        Error::InvalidGrid(msg) => Error::InvalidGrid(format!("{}: {msg}", origin.display())),
        other => other,
    })
}

/// Renders a grid as ASCII grid text. Header reals keep full precision so a
/// re-read grid stays aligned with its siblings; cell values use six
/// significant digits and nodata cells repeat the header sentinel.
pub fn render_ascii_grid(grid: &Grid) -> String {
    let h = grid.header();
    let mut out = String::with_capacity(grid.values().len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", h.ncols);
    let _ = writeln!(out, "nrows {}", h.nrows);
    let _ = writeln!(out, "xllcorner {}", h.xll);
    let _ = writeln!(out, "yllcorner {}", h.yll);
    let _ = writeln!(out, "cellsize {}", h.cellsize);
    let nodata = format!("{}", h.nodata);
    let _ = writeln!(out, "NODATA_value {nodata}");
    for row in grid.values().chunks(h.ncols) {
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            if h.is_nodata(v) {
                out.push_str(&nodata);
            } else {
                out.push_str(&sig6(v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_ascii_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_ascii_grid(grid)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1000\nNODATA_value -9999\n0 1\n2 3\n";

    #[test]
    fn reads_two_by_two() {
        let g = parse_ascii_grid(SMALL, "small.asc").unwrap();
        assert_eq!(g.ncols(), 2);
        assert_eq!(g.nrows(), 2);
        assert_eq!(g.values(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.header().cellsize, 1000.0);
    }

    #[test]
    fn header_keys_are_case_insensitive() {
        let text = SMALL.replace("ncols", "NCOLS").replace("NODATA_value", "nodata_VALUE");
        assert!(parse_ascii_grid(&text, "x").is_ok());
    }

    #[test]
    fn short_body_is_a_value_count_mismatch() {
        let text = SMALL.replace("2 3\n", "2\n");
        let err = parse_ascii_grid(&text, "short.asc").unwrap_err();
        assert!(err.to_string().contains("value count mismatch"), "{err}");
    }

    #[test]
    fn bad_key_reports_line() {
        let text = SMALL.replace("cellsize", "cellsise");
        let err = parse_ascii_grid(&text, "bad.asc").unwrap_err().to_string();
        assert!(err.contains("bad.asc:5"), "{err}");
        assert!(err.contains("malformed header key"), "{err}");
    }

    #[test]
    fn bad_token_reports_line() {
        let text = SMALL.replace("2 3", "2 x3");
        let err = parse_ascii_grid(&text, "tok.asc").unwrap_err().to_string();
        assert!(err.contains("tok.asc:8"), "{err}");
        assert!(err.contains("non-numeric"), "{err}");
    }

    #[test]
    fn zeros_and_nodata_are_written_verbatim() {
        let h = Header::new(3, 1, 0.0, 0.0, 1.0, -9999.0);
        let g = Grid::new(h, vec![0.0, -9999.0, 0.0]).unwrap();
        let text = render_ascii_grid(&g);
        assert!(text.ends_with("NODATA_value -9999\n0 -9999 0\n"), "{text}");
    }

    #[test]
    fn writes_to_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        let g = parse_ascii_grid(SMALL, "x").unwrap();
        write_ascii_grid(&g, &path).unwrap();
        assert_eq!(read_ascii_grid(&path).unwrap(), g);
        let missing = dir.path().join("no/such/dir/g.asc");
        assert!(write_ascii_grid(&g, missing).is_err());
    }

    fn arb_grid() -> impl Strategy<Value = Grid> {
        (1usize..12, 1usize..12, -1e6f64..1e6, -1e6f64..1e6, 1.0f64..5000.0).prop_flat_map(
            |(nc, nr, xll, yll, cs)| {
                let cell = prop_oneof![
                    1 => Just(-9999.0),
                    8 => 0.0f64..100.0,
                    1 => 0.0f64..1e-3,
                ];
                proptest::collection::vec(cell, nc * nr).prop_map(move |vals| {
                    Grid::new(Header::new(nc, nr, xll, yll, cs, -9999.0), vals).unwrap()
                })
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn round_trip_within_printed_precision(g in arb_grid()) {
            let back = parse_ascii_grid(&render_ascii_grid(&g), "rt").unwrap();
            prop_assert_eq!(back.header(), g.header());
            for (a, b) in g.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{} vs {}", a, b);
            }
            // A second trip is exact.
            let again = parse_ascii_grid(&render_ascii_grid(&back), "rt").unwrap();
            prop_assert_eq!(again, back);
        }
    }
}
