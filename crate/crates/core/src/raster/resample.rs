use log::warn;

use super::{Crs, Grid, Header, LambertAzimuthal};
use crate::error::{Error, Result};

/// Resampled grid plus the number of target cells whose footprint fell
/// outside the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub grid: Grid,
    pub outside: usize,
}

/// Nearest-neighbour resampling of `src` onto `target`.
///
/// Each target cell centre is mapped into the source's coordinate system and
/// takes the value of the source cell containing it, which for a regular
/// lattice is the cell with the nearest centre. Cells landing outside the
/// source become nodata (the target header's sentinel).
pub fn resample_nearest(src: &Grid, target: &Header, target_crs: Crs) -> Result<Resampled> {
    let src_crs = src
        .crs()
        .ok_or_else(|| Error::Invalid("source grid carries no CRS tag".into()))?;
    let to_source: Box<dyn Fn(f64, f64) -> Option<(f64, f64)>> = match (src_crs, target_crs) {
        (a, b) if a == b => Box::new(|x, y| Some((x, y))),
        (Crs::LonLat, Crs::LambertEqualArea { lon0, lat0 }) => {
            let proj = LambertAzimuthal::new(lon0, lat0);
            Box::new(move |x, y| proj.inverse(x, y).ok())
        }
        (from, to) => {
            return Err(Error::Invalid(format!(
                "unsupported resampling from {from:?} to {to:?}"
            )))
        }
    };

    let sh = src.header();
    let mut outside = 0usize;
    let mut values = Vec::with_capacity(target.len());
    for row in 0..target.nrows {
        for col in 0..target.ncols {
            let (x, y) = target.cell_center(row, col);
            let hit = to_source(x, y).and_then(|(sx, sy)| sh.cell_at(sx, sy));
            match hit {
                Some((r, c)) => {
                    let v = src.get(r, c);
                    values.push(if src.is_nodata(v) { target.nodata } else { v });
                }
                None => {
                    outside += 1;
                    values.push(target.nodata);
                }
            }
        }
    }
    if outside > 0 {
        warn!("resample: {outside} target cells fall outside the source footprint");
    }
    let grid = Grid::new(*target, values)?.with_crs(target_crs);
    Ok(Resampled { grid, outside })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lonlat_src(values: Vec<f64>, n: usize) -> Grid {
        let h = Header::new(n, n, 100.0, 30.0, 0.5, -9999.0);
        Grid::new(h, values).unwrap().with_crs(Crs::LonLat)
    }

    fn target_header(n: usize, cell: f64) -> Header {
        let half = n as f64 * cell / 2.0;
        Header::new(n, n, -half, -half, cell, -1.0)
    }

    const CENTRE: Crs = Crs::LambertEqualArea {
        lon0: 104.0,
        lat0: 34.0,
    };

    #[test]
    fn constant_source_gives_constant_target() {
        let src = lonlat_src(vec![7.0; 256], 16);
        let out = resample_nearest(&src, &target_header(16, 20_000.0), CENTRE).unwrap();
        assert_eq!(out.outside, 0);
        assert!(out.grid.values().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn same_lattice_is_identity() {
        let h = target_header(8, 1000.0);
        let vals: Vec<f64> = (0..64).map(f64::from).collect();
        let src = Grid::new(h, vals).unwrap().with_crs(CENTRE);
        let out = resample_nearest(&src, &h, CENTRE).unwrap();
        assert_eq!(out.grid.values(), src.values());
    }

    #[test]
    fn footprint_outside_source_is_nodata() {
        let src = lonlat_src(vec![1.0; 4], 2);
        let out = resample_nearest(&src, &target_header(16, 50_000.0), CENTRE).unwrap();
        assert!(out.outside > 0);
        let nodata = out.grid.values().iter().filter(|&&v| v == -1.0).count();
        assert_eq!(nodata, out.outside);
    }

    #[test]
    fn untagged_source_is_rejected() {
        let h = target_header(2, 1.0);
        let src = Grid::new(h, vec![0.0; 4]).unwrap();
        assert!(resample_nearest(&src, &h, CENTRE).is_err());
    }

    #[test]
    fn matches_brute_force_nearest_centre() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let n = 16;
            let vals: Vec<f64> = (0..n * n)
                .map(|_| if rng.gen_bool(0.1) { -9999.0 } else { rng.gen_range(0.0..63.0) })
                .collect();
            let src = lonlat_src(vals, n);
            let target = target_header(16, 40_000.0);
            let out = resample_nearest(&src, &target, CENTRE).unwrap();
            let proj = LambertAzimuthal::new(104.0, 34.0);
            let sh = *src.header();
            for row in 0..target.nrows {
                for col in 0..target.ncols {
                    let (x, y) = target.cell_center(row, col);
                    let (lon, lat) = proj.inverse(x, y).unwrap();
                    // O(n^2) scan over all source centres.
                    let mut best = (f64::INFINITY, 0usize, 0usize);
                    for r in 0..sh.nrows {
                        for c in 0..sh.ncols {
                            let (cx, cy) = sh.cell_center(r, c);
                            let d = (cx - lon).powi(2) + (cy - lat).powi(2);
                            if d < best.0 {
                                best = (d, r, c);
                            }
                        }
                    }
                    let inside = lon >= sh.xll
                        && lon < sh.xll + sh.ncols as f64 * sh.cellsize
                        && lat >= sh.yll
                        && lat < sh.yll + sh.nrows as f64 * sh.cellsize;
                    let got = out.grid.get(row, col);
                    if inside {
                        let v = src.get(best.1, best.2);
                        let want = if v == -9999.0 { -1.0 } else { v };
                        assert_eq!(got, want, "cell ({row}, {col})");
                    } else {
                        assert_eq!(got, -1.0);
                    }
                }
            }
            // Only source values (or nodata) appear in the output.
            for &v in out.grid.values() {
                assert!(v == -1.0 || src.values().contains(&v));
            }
        }
    }
}
