use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nightlights_cli::pipeline::list_outputs;

fn nightlights(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nightlights"))
        .args(args)
        .arg("--quiet")
        .current_dir(cwd)
        .output()
        .expect("running nightlights")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = nightlights(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(path: impl AsRef<Path>) -> String {
    let path = path.as_ref();
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn small_scenario() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--size", "200", "--regions", "4", "--seed", "7"], dir.path());
    ok(&["pipeline", "--config", "pipeline.conf"], dir.path());
    dir
}

#[test]
fn stage_by_stage_matches_the_pipeline() {
    let dir = small_scenario();
    let d = dir.path();
    let edges = "F12:F10,F14:F12,F15:F14,F16:F15,F18:F16";
    let s = |a: &[&str]| ok(a, d);
    s(&["calibrate-fit", "--manifest", "manifest.csv", "--site", "site.asc", "--edges", edges, "--out-dir", "st"]);
    s(&["preprocess", "--manifest", "manifest.csv", "--calibration", "st/calibration_fitted.csv", "--out-dir", "st"]);
    s(&[
        "zonal", "--grid", "st/composites", "--mask", "regions.asc", "--legend", "legend.csv", "--tables", "--series",
        "--out-dir", "st",
    ]);
    s(&[
        "fit", "--input", "st/series/lardi.csv", "--model", "linear,quadratic,exponential,power,fourier1",
        "--start-year", "1994", "--out", "fits/lardi.csv", "--out-dir", "st",
    ]);
    s(&["fit", "--input", "st/series/std.csv", "--model", "fourier1", "--start-year", "1994", "--out", "fits/std.csv", "--out-dir", "st"]);
    s(&["agdp", "--gdp", "gdp.csv", "--provinces", "provinces.csv", "--mask", "regions.asc", "--out-dir", "st"]);
    s(&[
        "fit", "--input", "st/series/agdp.csv", "--model", "linear,quadratic,exponential,power,fourier1",
        "--x-offset", "1989", "--x-scale", "100", "--out", "fits/agdp.csv", "--out-dir", "st",
    ]);
    s(&[
        "urban", "--grid", "st/composites", "--mask", "regions.asc", "--threshold", "55", "--binary-years",
        "1992,2003,2004,2013", "--out-dir", "st",
    ]);
    s(&[
        "report", "--slope-fits", "st/fits/lardi.csv", "--std-fits", "st/fits/std.csv", "--first-year", "1994",
        "--last-year", "2013", "--out-dir", "st",
    ]);

    let staged = d.join("st");
    let piped = d.join("out");
    let files = list_outputs(&staged).unwrap();
    assert!(files.len() > 60, "{files:?}");
    for f in files {
        assert_eq!(read(staged.join(&f)), read(piped.join(&f)), "{f}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = small_scenario();
    let b = small_scenario();
    let tree = |d: &Path| -> BTreeMap<String, Vec<u8>> {
        list_outputs(d).unwrap().into_iter().map(|f| (f.clone(), fs::read(d.join(f)).unwrap())).collect()
    };
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn fit_recovers_a_cubic_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("region_id,year,value\n");
    for x in 1..=10 {
        csv.push_str(&format!("1,{},{}\n", 2000 + x, 2 * x * x * x));
    }
    fs::write(dir.path().join("cubic.csv"), csv).unwrap();
    ok(&["fit", "--input", "cubic.csv", "--model", "power", "--x-offset", "2000"], dir.path());
    let fits = nightlights::regress::read_fits_csv(dir.path().join("fits.csv")).unwrap();
    let p = &fits[0].fit.params;
    assert!((p[0] - 2.0).abs() < 1e-9 && (p[1] - 3.0).abs() < 1e-9, "{p:?}");
}

#[test]
fn errors_are_one_line_with_a_failure_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = nightlights(&["pipeline", "--config", "missing.conf"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.trim_end().lines().count() == 1, "{err}");
    assert!(err.contains("missing.conf"));

    fs::write(dir.path().join("bad.conf"), "manifest = m.csv\nmask = r.asc\nthreshold = 55\n").unwrap();
    let out = nightlights(&["pipeline", "--config", "bad.conf"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = nightlights(&["fit", "--input", "x.csv", "--model", "cubic"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim_end().lines().count(), 1);
}

#[test]
fn plots_are_written_per_region() {
    let dir = small_scenario();
    let plots = dir.path().join("out/plots");
    let names: Vec<String> = fs::read_dir(&plots).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    for series in ["lardi", "std", "agdp"] {
        for id in 1..=4 {
            assert!(names.contains(&format!("{series}_region_{id:02}.svg")), "{series} {id}: {names:?}");
        }
    }
    let svg = read(plots.join("lardi_region_01.svg"));
    assert!(svg.starts_with("<svg") && svg.contains("class=\"fit\""));
}

#[test]
fn zonal_wrapper_matches_the_library() {
    use nightlights::raster::{write_ascii_grid, Grid, Header, LabelMask};
    use nightlights::zonal::{write_zonal_csv, zonal_stats, ZonalOptions};

    let dir = tempfile::tempdir().unwrap();
    let h = Header::new(3, 2, 0.0, 0.0, 1000.0, -9999.0);
    let g = Grid::new(h, vec![1.5, 2.0, -9999.0, 40.0, 63.0, 0.0]).unwrap();
    write_ascii_grid(&g, dir.path().join("g.asc")).unwrap();
    let labels = Grid::new(h, vec![1.0, 1.0, 2.0, 2.0, 2.0, 0.0]).unwrap();
    write_ascii_grid(&labels, dir.path().join("m.asc")).unwrap();
    ok(&["zonal", "--grid", "g.asc", "--mask", "m.asc", "--out", "z.csv"], dir.path());

    let mask = LabelMask::from_grid(&labels, None).unwrap();
    write_zonal_csv(&zonal_stats(&g, &mask, 0, ZonalOptions::default()).unwrap(), dir.path().join("want.csv")).unwrap();
    assert_eq!(read(dir.path().join("z.csv")), read(dir.path().join("want.csv")));
}
