//! Quadratic inter-sensor calibration and the graph of calibration edges.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Satellite, SensorProduct};
use crate::error::{csv_error, Error, Result};
use crate::lstsq;
use crate::raster::{Grid, LabelMask};

const DEFAULT_CALIBRATION: &str = include_str!("../../data/calibration_default.csv");

/// Maps `source` sensor DN onto the `target` sensor's scale:
/// `DN' = a·DN² + b·DN + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationModel {
    pub source: Satellite,
    pub target: Satellite,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sse: f64,
    pub r2: f64,
}

impl CalibrationModel {
    pub fn new(
        source: Satellite,
        target: Satellite,
        a: f64,
        b: f64,
        c: f64,
        sse: f64,
        r2: f64,
    ) -> Result<Self> {
        if ![a, b, c].iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid(format!("{source}->{target}: non-finite coefficient")));
        }
        if !(sse >= 0.0) || !(0.0..=1.0).contains(&r2) {
            return Err(Error::Invalid(format!(
                "{source}->{target}: need sse >= 0 and r2 in [0, 1], got sse={sse}, r2={r2}"
            )));
        }
        Ok(CalibrationModel {
            source,
            target,
            a,
            b,
            c,
            sse,
            r2,
        })
    }

    /// Raw quadratic, no clamping.
    pub fn eval(&self, dn: f64) -> f64 {
        self.a * dn * dn + self.b * dn + self.c
    }

    /// The calibrated value as stored: negatives clamp to zero.
    pub fn calibrate(&self, dn: f64) -> f64 {
        self.eval(dn).max(0.0)
    }
}

/// Least-squares quadratic mapping `raw` (source sensor DN) onto
/// `reference` (target sensor DN), sampled over a pseudo-invariant site.
pub fn fit_intercalibration(
    source: Satellite,
    target: Satellite,
    reference: &[f64],
    raw: &[f64],
) -> Result<CalibrationModel> {
    if reference.len() != raw.len() {
        return Err(Error::DegenerateCalibration(format!(
            "{} reference samples vs {} raw samples",
            reference.len(),
            raw.len()
        )));
    }
    if raw.len() < 3 {
        return Err(Error::DegenerateCalibration(format!(
            "need at least 3 paired samples, got {}",
            raw.len()
        )));
    }
    let design: Vec<f64> = raw.iter().flat_map(|&x| [x * x, x, 1.0]).collect();
    let coef = lstsq::solve(&design, 3, reference).ok_or_else(|| {
        Error::DegenerateCalibration(format!("{source}->{target}: rank-deficient design"))
    })?;
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    let sse: f64 = raw
        .iter()
        .zip(reference)
        .map(|(&x, &y)| {
            let r = y - ((a * x + b) * x + c);
            r * r
        })
        .sum();
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let sst: f64 = reference.iter().map(|y| (y - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - sse / sst).clamp(0.0, 1.0) } else { 0.0 };
    CalibrationModel::new(source, target, a, b, c, sse, r2)
}

pub fn apply_calibration(grid: &Grid, model: &CalibrationModel) -> Result<Grid> {
    grid.map_valid(|v| model.calibrate(v))
}

/// Directed calibration edges plus the sensor every chain must reach.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationGraph {
    edges: Vec<CalibrationModel>,
    reference: Satellite,
}

impl CalibrationGraph {
    pub fn new(edges: Vec<CalibrationModel>, reference: Satellite) -> Self {
        CalibrationGraph { edges, reference }
    }

    pub fn edges(&self) -> &[CalibrationModel] {
        &self.edges
    }

    pub fn reference(&self) -> Satellite {
        self.reference
    }

    /// Shortest edge path from `satellite` to the reference. Breadth-first in
    /// edge-list order, so the choice among equal-length paths is stable.
    fn path(&self, satellite: Satellite) -> Result<Vec<CalibrationModel>> {
        if satellite == self.reference {
            return Ok(Vec::new());
        }
        let mut came_from: BTreeMap<Satellite, usize> = BTreeMap::new();
        let mut queue = VecDeque::from([satellite]);
        while let Some(node) = queue.pop_front() {
            for (i, edge) in self.edges.iter().enumerate() {
                if edge.source != node
                    || edge.target == satellite
                    || came_from.contains_key(&edge.target)
                {
                    continue;
                }
                came_from.insert(edge.target, i);
                if edge.target == self.reference {
                    let mut path = Vec::new();
                    let mut at = self.reference;
                    while at != satellite {
                        let e = self.edges[came_from[&at]];
                        path.push(e);
                        at = e.source;
                    }
                    path.reverse();
                    return Ok(path);
                }
                queue.push_back(edge.target);
            }
        }
        Err(Error::UnresolvableCalibration(format!(
            "no edge path from {satellite} to reference {}",
            self.reference
        )))
    }

    /// Chains for every listed sensor; fails on the first unresolvable one.
    pub fn resolve_all(&self, sats: &[Satellite]) -> Result<BTreeMap<Satellite, CalibrationChain>> {
        sats.iter()
            .map(|&s| resolve_calibration_chain(self, s).map(|c| (s, c)))
            .collect()
    }
}

/// Composition of calibration edges taking one sensor onto the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationChain {
    pub satellite: Satellite,
    pub steps: Vec<CalibrationModel>,
}

impl CalibrationChain {
    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn eval(&self, dn: f64) -> f64 {
        self.steps.iter().fold(dn, |v, m| m.calibrate(v))
    }

    pub fn apply(&self, grid: &Grid) -> Result<Grid> {
        if self.is_identity() {
            return Ok(grid.clone());
        }
        grid.map_valid(|v| self.eval(v))
    }

    /// `F16>F15>F14` style description.
    pub fn describe(&self) -> String {
        let mut s = self.satellite.to_string();
        for step in &self.steps {
            let _ = write!(s, ">{}", step.target);
        }
        s
    }
}

pub fn resolve_calibration_chain(
    graph: &CalibrationGraph,
    satellite: Satellite,
) -> Result<CalibrationChain> {
    Ok(CalibrationChain {
        satellite,
        steps: graph.path(satellite)?,
    })
}

/// The shipped coefficient table (five sensor pairs).
pub fn default_calibration() -> Vec<CalibrationModel> {
    parse_calibration_csv(DEFAULT_CALIBRATION.as_bytes(), Path::new("<default calibration>"))
        .expect("bundled calibration table parses")
}

pub fn read_calibration_csv(path: impl AsRef<Path>) -> Result<Vec<CalibrationModel>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_calibration_csv(&bytes[..], path)
}

fn parse_calibration_csv(data: &[u8], path: &Path) -> Result<Vec<CalibrationModel>> {
    let mut reader = csv::Reader::from_reader(data);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["source", "target", "a", "b", "c", "sse", "r2"] {
        return Err(Error::parse(path, 1, "expected header source,target,a,b,c,sse,r2"));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let sat = |k: usize| {
            record[k]
                .parse::<Satellite>()
                .map_err(|e| Error::parse(path, line, e.to_string()))
        };
        let num = |k: usize| {
            record[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("bad number {:?}", &record[k])))
        };
        let model = CalibrationModel::new(sat(0)?, sat(1)?, num(2)?, num(3)?, num(4)?, num(5)?, num(6)?)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(model);
    }
    Ok(out)
}

/// Coefficient table text; reals keep full round-trip precision.
pub fn render_calibration_csv(models: &[CalibrationModel]) -> String {
    let mut out = String::from("source,target,a,b,c,sse,r2\n");
    for m in models {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", m.source, m.target, m.a, m.b, m.c, m.sse, m.r2);
    }
    out
}

pub fn write_calibration_csv(models: &[CalibrationModel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_calibration_csv(models)).map_err(|e| Error::io(path, e))
}

/// The closest pair `(source_year, target_year)`, earliest first on ties.
/// Shared years give distance zero.
pub fn closest_year_pair(source_years: &[i32], target_years: &[i32]) -> Option<(i32, i32)> {
    let mut src = source_years.to_vec();
    let mut tgt = target_years.to_vec();
    src.sort_unstable();
    tgt.sort_unstable();
    let mut best: Option<(i32, i32, i32)> = None;
    for &ys in &src {
        for &yt in &tgt {
            let d = (ys - yt).abs();
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, ys, yt));
            }
        }
    }
    best.map(|(_, ys, yt)| (ys, yt))
}

/// Product years used to fit `source -> target` over a stable site, by
/// [`closest_year_pair`] over the products present.
pub fn select_calibration_years<'a>(
    products: impl IntoIterator<Item = &'a SensorProduct> + Clone,
    source: Satellite,
    target: Satellite,
) -> Option<(i32, i32)> {
    let years = |sat: Satellite| -> Vec<i32> {
        products
            .clone()
            .into_iter()
            .filter(|p| p.satellite() == sat)
            .map(|p| p.year())
            .collect()
    };
    closest_year_pair(&years(source), &years(target))
}

/// Paired (reference, raw) DN samples over the nonzero cells of `site`,
/// in row-major order, skipping cells that are nodata in either grid.
pub fn pseudo_invariant_samples(
    target_grid: &Grid,
    source_grid: &Grid,
    site: &LabelMask,
) -> Result<(Vec<f64>, Vec<f64>)> {
    site.ensure_applies_to(target_grid.header())?;
    site.ensure_applies_to(source_grid.header())?;
    let mut reference = Vec::new();
    let mut raw = Vec::new();
    for (i, &label) in site.labels().iter().enumerate() {
        if label == 0 {
            continue;
        }
        if let (Some(t), Some(s)) = (target_grid.valid(i), source_grid.valid(i)) {
            reference.push(t);
            raw.push(s);
        }
    }
    Ok((reference, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Header;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shipped(source: Satellite, target: Satellite) -> CalibrationModel {
        *default_calibration()
            .iter()
            .find(|m| m.source == source && m.target == target)
            .unwrap()
    }

    /// Normal equations solved with Cramer's rule.
    fn normal_equation_oracle(y: &[f64], x: &[f64]) -> [f64; 3] {
        let mut m = [[0.0f64; 3]; 3];
        let mut v = [0.0f64; 3];
        for (&xi, &yi) in x.iter().zip(y) {
            let basis = [xi * xi, xi, 1.0];
            for r in 0..3 {
                v[r] += basis[r] * yi;
                for c in 0..3 {
                    m[r][c] += basis[r] * basis[c];
                }
            }
        }
        let det = |m: &[[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(&m);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let mut mk = m;
            for r in 0..3 {
                mk[r][k] = v[r];
            }
            out[k] = det(&mk) / d;
        }
        out
    }

    #[test]
    fn shipped_table_is_verbatim() {
        let t = default_calibration();
        assert_eq!(t.len(), 5);
        let m = shipped(Satellite::F16, Satellite::F15);
        assert_eq!((m.a, m.b, m.c, m.sse, m.r2), (-0.001447, 1.091, 0.913, 8.531e4, 0.9309));
        let m = shipped(Satellite::F16, Satellite::F18);
        assert_eq!((m.a, m.b, m.c), (0.004262, 0.673, 0.766));
    }

    #[test]
    fn f16_to_f15_at_zero_and_thirty() {
        let m = shipped(Satellite::F16, Satellite::F15);
        assert!((m.calibrate(0.0) - 0.913).abs() < 1e-12);
        assert!((m.calibrate(30.0) - 32.3407).abs() < 1e-9);
    }

    #[test]
    fn identity_model_is_identity_on_grids() {
        let id = CalibrationModel::new(Satellite::F12, Satellite::F10, 0.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let h = Header::new(3, 1, 0.0, 0.0, 1.0, -9999.0);
        let g = Grid::new(h, vec![0.0, 17.25, -9999.0]).unwrap();
        assert_eq!(apply_calibration(&g, &id).unwrap(), g);
    }

    #[test]
    fn negatives_clamp_and_nodata_passes_through() {
        let m = CalibrationModel::new(Satellite::F12, Satellite::F10, 0.0, 1.0, -2.0, 0.0, 1.0).unwrap();
        let h = Header::new(3, 1, 0.0, 0.0, 1.0, -9999.0);
        let g = Grid::new(h, vec![1.0, 5.0, -9999.0]).unwrap();
        assert_eq!(apply_calibration(&g, &m).unwrap().values(), &[0.0, 3.0, -9999.0]);
    }

    #[test]
    fn recovers_shipped_coefficients_from_noiseless_pairs() {
        let truth = shipped(Satellite::F16, Satellite::F15);
        let raw: Vec<f64> = (0..64).map(f64::from).collect();
        let reference: Vec<f64> = raw.iter().map(|&x| truth.eval(x)).collect();
        let fit = fit_intercalibration(Satellite::F16, Satellite::F15, &reference, &raw).unwrap();
        assert!((fit.a - -0.001447).abs() < 1e-9);
        assert!((fit.b - 1.091).abs() < 1e-9);
        assert!((fit.c - 0.913).abs() < 1e-9);
        assert!(fit.sse < 1e-18);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_pairs_give_identity_model() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 3.0).collect();
        let fit = fit_intercalibration(Satellite::F12, Satellite::F10, &x, &x).unwrap();
        assert!(fit.a.abs() < 1e-12 && (fit.b - 1.0).abs() < 1e-12 && fit.c.abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_pairs_match_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..63.0)).collect();
            let reference: Vec<f64> = raw
                .iter()
                .map(|&x| 0.002 * x * x + 0.9 * x + 1.5 + rng.gen_range(-2.0..2.0))
                .collect();
            let fit = fit_intercalibration(Satellite::F14, Satellite::F12, &reference, &raw).unwrap();
            let want = normal_equation_oracle(&reference, &raw);
            assert!((fit.a - want[0]).abs() < 1e-9, "{} vs {}", fit.a, want[0]);
            assert!((fit.b - want[1]).abs() < 1e-8);
            assert!((fit.c - want[2]).abs() < 1e-7);
            assert!(fit.r2 > 0.0 && fit.r2 <= 1.0 && fit.sse > 0.0);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let err = fit_intercalibration(Satellite::F12, Satellite::F10, &[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0])
            .unwrap_err();
        assert!(err.to_string().contains("degenerate calibration fit"));
        assert!(fit_intercalibration(Satellite::F12, Satellite::F10, &[1.0, 2.0], &[1.0, 2.0]).is_err());
        // Two distinct abscissae cannot pin a quadratic.
        assert!(fit_intercalibration(
            Satellite::F12,
            Satellite::F10,
            &[1.0, 2.0, 1.0, 2.0],
            &[1.0, 2.0, 1.0, 2.0]
        )
        .is_err());
    }

    #[test]
    fn reference_chain_is_identity() {
        let g = CalibrationGraph::new(default_calibration(), Satellite::F10);
        let chain = resolve_calibration_chain(&g, Satellite::F10).unwrap();
        assert!(chain.is_identity());
        assert_eq!(chain.eval(12.5), 12.5);
    }

    #[test]
    fn default_graph_walks_down_to_f10() {
        let g = CalibrationGraph::new(default_calibration(), Satellite::F10);
        let chain = resolve_calibration_chain(&g, Satellite::F16).unwrap();
        assert_eq!(chain.describe(), "F16>F15>F14>F12>F10");
        // F18 only appears as a target; without its own edge it is stranded.
        let err = resolve_calibration_chain(&g, Satellite::F18).unwrap_err();
        assert!(err.to_string().contains("unresolvable calibration graph"));
    }

    #[test]
    fn chain_equals_sequential_application() {
        let g = CalibrationGraph::new(default_calibration(), Satellite::F12);
        let chain = resolve_calibration_chain(&g, Satellite::F15).unwrap();
        assert_eq!(chain.steps.len(), 2);
        let (e1, e2) = (shipped(Satellite::F15, Satellite::F14), shipped(Satellite::F14, Satellite::F12));
        for i in 0..100 {
            let v = i as f64 * 0.63;
            assert_eq!(chain.eval(v), e2.calibrate(e1.calibrate(v)));
        }
    }

    #[test]
    fn cycles_without_a_path_are_unresolvable() {
        let m = |s, t| CalibrationModel::new(s, t, 0.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let g = CalibrationGraph::new(
            vec![m(Satellite::F14, Satellite::F15), m(Satellite::F15, Satellite::F14)],
            Satellite::F10,
        );
        assert!(resolve_calibration_chain(&g, Satellite::F14).is_err());
    }

    #[test]
    fn calibration_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_calibration_csv(&default_calibration(), &path).unwrap();
        assert_eq!(read_calibration_csv(&path).unwrap(), default_calibration());
        std::fs::write(&path, "source,target,a,b,c,sse,r2\nF16,F15,x,1,1,0,1\n").unwrap();
        let err = read_calibration_csv(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
