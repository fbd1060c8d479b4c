//! Regression models over yearly series: linear, quadratic, exponential,
//! power and single-term Fourier fits with R², SSE and F diagnostics, plus
//! AGDP aggregation and growth-rate summaries.

mod agdp;
mod growth;
mod io;
mod nonlinear;

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::lstsq;

pub use agdp::{aggregate_agdp, AgdpRecord, GdpRow};
pub use growth::{growth_summary, GrowthRow};
pub use io::{
    read_agdp_csv, read_fits_csv, read_gdp_csv, read_province_map, read_series_csv,
    render_fits_csv, render_growth_csv, render_series_csv, write_agdp_csv, write_fits_csv,
    write_growth_csv, write_series_csv, FitRow, SeriesTable,
};
pub use nonlinear::{
    fit_exponential, fit_exponential_fixed_rate, fit_fourier1, fit_fourier1_with, fit_power,
    FourierOptions,
};

/// A yearly series with the transform `x = (year - x_offset) / x_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub x_offset: i32,
    pub x_scale: f64,
    pub points: Vec<(i32, f64)>,
}

impl SeriesSpec {
    /// Validates strictly increasing years, finite values and a positive
    /// scale.
    pub fn new(x_offset: i32, x_scale: f64, points: Vec<(i32, f64)>) -> Result<SeriesSpec> {
        if !(x_scale.is_finite() && x_scale > 0.0) {
            return Err(Error::InvalidSeries(format!("x_scale must be positive, got {x_scale}")));
        }
        if points.len() < 2 {
            return Err(Error::InvalidSeries(format!("need at least 2 points, got {}", points.len())));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidSeries(format!(
                "years must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.1.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value in year {}", p.0)));
        }
        Ok(SeriesSpec { x_offset, x_scale, points })
    }

    pub fn x_of(&self, year: f64) -> f64 {
        (year - self.x_offset as f64) / self.x_scale
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| self.x_of(p.0 as f64)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Linear,
    Quadratic,
    Exponential,
    Power,
    Fourier1,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Linear,
        ModelKind::Quadratic,
        ModelKind::Exponential,
        ModelKind::Power,
        ModelKind::Fourier1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Quadratic => "quadratic",
            ModelKind::Exponential => "exponential",
            ModelKind::Power => "power",
            ModelKind::Fourier1 => "fourier1",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Linear => &["a", "b"],
            ModelKind::Quadratic => &["a", "b", "c"],
            ModelKind::Exponential => &["a", "k"],
            ModelKind::Power => &["a", "b"],
            ModelKind::Fourier1 => &["a0", "a1", "b1", "w"],
        }
    }

    /// Model value at `x`.
    pub fn eval(self, p: &[f64], x: f64) -> f64 {
        match self {
            ModelKind::Linear => p[0] * x + p[1],
            ModelKind::Quadratic => p[0] * x * x + p[1] * x + p[2],
            ModelKind::Exponential => p[0] * (p[1] * x).exp(),
            ModelKind::Power => p[0] * x.powf(p[1]),
            ModelKind::Fourier1 => p[0] + p[1] * (p[3] * x).cos() + p[2] * (p[3] * x).sin(),
        }
    }

    /// Fits this model with default options.
    pub fn fit(self, series: &SeriesSpec) -> Result<RegressionFit> {
        match self {
            ModelKind::Linear => fit_linear(series),
            ModelKind::Quadratic => fit_quadratic(series),
            ModelKind::Exponential => fit_exponential(series),
            ModelKind::Power => fit_power(series),
            ModelKind::Fourier1 => fit_fourier1(series),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelKind> {
        let s = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub kind: ModelKind,
    pub params: Vec<f64>,
    pub sse: f64,
    pub r2: f64,
    pub f_stat: f64,
    pub n: usize,
    pub k_regressors: usize,
    pub warnings: Vec<String>,
}

impl RegressionFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.kind.eval(&self.params, x)
    }

    pub(crate) fn assemble(
        kind: ModelKind,
        params: Vec<f64>,
        xs: &[f64],
        ys: &[f64],
        k: usize,
        mut warnings: Vec<String>,
    ) -> Result<RegressionFit> {
        let residuals: Vec<f64> = xs.iter().zip(ys).map(|(&x, &y)| y - kind.eval(&params, x)).collect();
        let gof = goodness_of_fit(&residuals, ys, k)?;
        if gof.constant_response {
            let msg = format!("{kind}: response has zero variance; r2 and F set to 0");
            warn!("{msg}");
            warnings.push(msg);
        }
        Ok(RegressionFit {
            kind,
            params,
            sse: gof.sse,
            r2: gof.r2,
            f_stat: gof.f_stat,
            n: ys.len(),
            k_regressors: k,
            warnings,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessOfFit {
    pub sse: f64,
    pub r2: f64,
    pub f_stat: f64,
    /// SST was zero, so `r2` and `f_stat` are the conventional 0.
    pub constant_response: bool,
}

/// F statistic for `k` regressors over `n` observations.
pub fn f_statistic(r2: f64, n: usize, k: usize) -> f64 {
    if r2 >= 1.0 {
        return f64::INFINITY;
    }
    (r2 / k as f64) / ((1.0 - r2) / (n - k - 1) as f64)
}

/// SSE, R² and F for residuals of a fit to `y` with `k` regressors.
pub fn goodness_of_fit(residuals: &[f64], y: &[f64], k: usize) -> Result<GoodnessOfFit> {
    let n = y.len();
    if residuals.len() != n {
        return Err(Error::Invalid(format!("{} residuals for {n} observations", residuals.len())));
    }
    if n <= k + 1 {
        return Err(Error::InvalidSeries(format!("{n} observations cannot support {k} regressors")));
    }
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst == 0.0 {
        return Ok(GoodnessOfFit { sse, r2: 0.0, f_stat: 0.0, constant_response: true });
    }
    let r2 = 1.0 - sse / sst;
    Ok(GoodnessOfFit { sse, r2, f_stat: f_statistic(r2, n, k), constant_response: false })
}

fn distinct_count(xs: &[f64]) -> usize {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Least-squares line `y = a x + b`.
pub fn fit_linear(series: &SeriesSpec) -> Result<RegressionFit> {
    let (xs, ys) = (series.xs(), series.ys());
    if xs.len() < 3 {
        return Err(Error::InvalidSeries(format!("linear fit needs 3 points, got {}", xs.len())));
    }
    if distinct_count(&xs) < 2 {
        return Err(Error::DegenerateDesign("all x equal".into()));
    }
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    // n·x_i − Σx is unchanged by a shift of integer-valued x, so the slope
    // is too.
    let dx: Vec<f64> = xs.iter().map(|x| n * x - sx).collect();
    let sxy: f64 = dx.iter().zip(&ys).map(|(d, y)| d * y).sum();
    let sxx: f64 = dx.iter().map(|d| d * d).sum();
    let a = n * sxy / sxx;
    let b = ys.iter().sum::<f64>() / n - a * (sx / n);
    RegressionFit::assemble(ModelKind::Linear, vec![a, b], &xs, &ys, 1, Vec::new())
}

/// Least-squares parabola `y = a x² + b x + c`.
pub fn fit_quadratic(series: &SeriesSpec) -> Result<RegressionFit> {
    let (xs, ys) = (series.xs(), series.ys());
    if xs.len() < 4 {
        return Err(Error::InvalidSeries(format!("quadratic fit needs 4 points, got {}", xs.len())));
    }
    if distinct_count(&xs) < 3 {
        return Err(Error::DegenerateDesign("quadratic fit needs 3 distinct x".into()));
    }
    // Solved in t = x - x̄ and expanded back; the centred basis is far
    // better conditioned for year-like x.
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let design: Vec<f64> = xs.iter().flat_map(|&x| [(x - m) * (x - m), x - m, 1.0]).collect();
    let t = lstsq::solve(&design, 3, &ys)
        .ok_or_else(|| Error::DegenerateDesign("rank-deficient quadratic design".into()))?;
    let p = vec![t[0], t[1] - 2.0 * t[0] * m, t[2] - t[1] * m + t[0] * m * m];
    RegressionFit::assemble(ModelKind::Quadratic, p, &xs, &ys, 2, Vec::new())
}
