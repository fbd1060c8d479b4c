//! Gauss–Newton refined power and exponential fits and the single-term
//! Fourier fit.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{distinct_count, ModelKind, RegressionFit, SeriesSpec};
use crate::error::{Error, Result};
use crate::lstsq;

const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 20;
const STEP_TOL: f64 = 1e-10;

fn partials(kind: ModelKind, p: &[f64], x: f64) -> Vec<f64> {
    match kind {
        ModelKind::Linear => vec![x, 1.0],
        ModelKind::Quadratic => vec![x * x, x, 1.0],
        ModelKind::Exponential => {
            let e = (p[1] * x).exp();
            vec![e, p[0] * x * e]
        }
        ModelKind::Power => {
            let e = x.powf(p[1]);
            vec![e, p[0] * e * x.ln()]
        }
        ModelKind::Fourier1 => {
            let (s, c) = (p[3] * x).sin_cos();
            vec![1.0, c, s, x * (p[2] * c - p[1] * s)]
        }
    }
}

pub(crate) fn sse(kind: ModelKind, p: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (y - kind.eval(p, x)).powi(2)).sum()
}

/// Gauss–Newton with step halving. The SSE never increases, so the result
/// is at least as good as `p`.
fn gauss_newton(kind: ModelKind, mut p: Vec<f64>, xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let np = p.len();
    let mut cur = sse(kind, &p, xs, ys);
    for _ in 0..MAX_ITERATIONS {
        let mut jac = Vec::with_capacity(xs.len() * np);
        let mut resid = Vec::with_capacity(xs.len());
        for (&x, &y) in xs.iter().zip(ys) {
            jac.extend(partials(kind, &p, x));
            resid.push(y - kind.eval(&p, x));
        }
        let Some(delta) = lstsq::solve(&jac, np, &resid) else { break };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = p.iter().zip(&delta).map(|(v, d)| v + t * d).collect();
            let s = sse(kind, &cand, xs, ys);
            if s < cur {
                p = cand;
                cur = s;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let step = t * delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        let size = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step < STEP_TOL * (1.0 + size) {
            break;
        }
    }
    p
}

/// Ordinary least squares line through (u, v), as (slope, intercept).
fn line(u: &[f64], v: &[f64]) -> (f64, f64) {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let sxy: f64 = u.iter().zip(v).map(|(a, b)| (a - mu) * (b - mv)).sum();
    let sxx: f64 = u.iter().map(|a| (a - mu) * (a - mu)).sum();
    let slope = sxy / sxx;
    (slope, mv - slope * mu)
}

fn check_nonlinear_size(series: &SeriesSpec, name: &str) -> Result<()> {
    if series.len() < 3 {
        return Err(Error::InvalidSeries(format!("{name} fit needs 3 points, got {}", series.len())));
    }
    Ok(())
}

/// Log-space starting point for `y = a x^b`.
pub(crate) fn power_initializer(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (b, ln_a) = line(&lx, &ly);
    vec![ln_a.exp(), b]
}

/// Log-space starting point for `y = a e^{kx}`.
pub(crate) fn exponential_initializer(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (k, ln_a) = line(xs, &ly);
    vec![ln_a.exp(), k]
}

/// `y = a x^b`, initialised in log space and refined on the original
/// residuals.
pub fn fit_power(series: &SeriesSpec) -> Result<RegressionFit> {
    check_nonlinear_size(series, "power")?;
    let (xs, ys) = (series.xs(), series.ys());
    if let Some(i) = (0..xs.len()).find(|&i| xs[i] <= 0.0 || ys[i] <= 0.0) {
        return Err(Error::PowerDomain(format!(
            "x = {} and y = {} in year {} must both be positive",
            xs[i], ys[i], series.points[i].0
        )));
    }
    if distinct_count(&xs) < 2 {
        return Err(Error::DegenerateDesign("all x equal".into()));
    }
    let p = gauss_newton(ModelKind::Power, power_initializer(&xs, &ys), &xs, &ys);
    RegressionFit::assemble(ModelKind::Power, p, &xs, &ys, 1, Vec::new())
}

/// `y = a e^{kx}`, initialised in log space and refined on the original
/// residuals.
pub fn fit_exponential(series: &SeriesSpec) -> Result<RegressionFit> {
    check_nonlinear_size(series, "exponential")?;
    let (xs, ys) = (series.xs(), series.ys());
    if let Some(i) = (0..ys.len()).find(|&i| ys[i] <= 0.0) {
        return Err(Error::ExponentialDomain(format!(
            "y = {} in year {} must be positive",
            ys[i], series.points[i].0
        )));
    }
    if distinct_count(&xs) < 2 {
        return Err(Error::DegenerateDesign("all x equal".into()));
    }
    let p = gauss_newton(ModelKind::Exponential, exponential_initializer(&xs, &ys), &xs, &ys);
    RegressionFit::assemble(ModelKind::Exponential, p, &xs, &ys, 1, Vec::new())
}

/// `y = a e^{kx}` with `k` held fixed; `k = 1` is the `a·eˣ` form.
pub fn fit_exponential_fixed_rate(series: &SeriesSpec, k: f64) -> Result<RegressionFit> {
    check_nonlinear_size(series, "exponential")?;
    let (xs, ys) = (series.xs(), series.ys());
    let e: Vec<f64> = xs.iter().map(|x| (k * x).exp()).collect();
    let den: f64 = e.iter().map(|v| v * v).sum();
    if !(den.is_finite() && den > 0.0) {
        return Err(Error::DegenerateDesign(format!("e^(kx) overflows for k = {k}")));
    }
    let a = e.iter().zip(&ys).map(|(e, y)| e * y).sum::<f64>() / den;
    RegressionFit::assemble(ModelKind::Exponential, vec![a, k], &xs, &ys, 1, Vec::new())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierOptions {
    /// Number of log-spaced ω candidates.
    pub grid_size: usize,
    /// Search range for ω. Defaults to [2π/(10·span), 2π/Δx_min].
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
}

impl Default for FourierOptions {
    fn default() -> Self {
        FourierOptions { grid_size: 200, omega_min: None, omega_max: None }
    }
}

/// Best (a0, a1, b1) at fixed ω and its SSE; `None` when the basis is
/// degenerate at this ω.
fn fourier_at(xs: &[f64], ys: &[f64], w: f64) -> Option<(Vec<f64>, f64)> {
    let design: Vec<f64> = xs
        .iter()
        .flat_map(|&x| {
            let (s, c) = (w * x).sin_cos();
            [1.0, c, s]
        })
        .collect();
    let mut p = lstsq::solve(&design, 3, ys)?;
    p.push(w);
    let s = sse(ModelKind::Fourier1, &p, xs, ys);
    Some((p, s))
}

fn profile(xs: &[f64], ys: &[f64], w: f64) -> f64 {
    fourier_at(xs, ys, w).map_or(f64::INFINITY, |(_, s)| s)
}

/// `y = a0 + a1 cos(ωx) + b1 sin(ωx)` with default search options.
pub fn fit_fourier1(series: &SeriesSpec) -> Result<RegressionFit> {
    fit_fourier1_with(series, &FourierOptions::default())
}

/// Grid search over ω with the linear coefficients solved per candidate,
/// golden-section refinement of ω around the best candidate, then a joint
/// Gauss–Newton polish kept only if it lowers the SSE.
pub fn fit_fourier1_with(series: &SeriesSpec, opts: &FourierOptions) -> Result<RegressionFit> {
    if series.len() < 5 {
        return Err(Error::InvalidSeries(format!("fourier1 fit needs 5 points, got {}", series.len())));
    }
    if opts.grid_size < 2 {
        return Err(Error::Invalid("fourier grid needs at least 2 candidates".into()));
    }
    let (xs, ys) = (series.xs(), series.ys());
    let span = xs[xs.len() - 1] - xs[0];
    let dx_min = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let lo = opts.omega_min.unwrap_or(2.0 * PI / (10.0 * span));
    let hi = opts.omega_max.unwrap_or(2.0 * PI / dx_min);
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Invalid(format!("invalid omega range [{lo}, {hi}]")));
    }

    if ys.iter().all(|&y| y == ys[0]) {
        let msg = "fourier1: constant response, omega is indeterminate".to_string();
        log::warn!("{msg}");
        return RegressionFit::assemble(ModelKind::Fourier1, vec![ys[0], 0.0, 0.0, lo], &xs, &ys, 3, vec![msg]);
    }

    let n = opts.grid_size;
    let grid: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let scores: Vec<f64> = grid.par_iter().map(|&w| profile(&xs, &ys, w)).collect();
    // Strict comparison in ascending ω: the smallest ω wins ties.
    let mut best = 0;
    for i in 1..n {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    if !scores[best].is_finite() {
        return Err(Error::DegenerateDesign("no omega candidate gives a full-rank basis".into()));
    }

    let w = golden_section(
        |w| profile(&xs, &ys, w),
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(n - 1)],
    );
    let (mut p, mut s) = fourier_at(&xs, &ys, grid[best]).expect("finite score");
    if let Some((q, t)) = fourier_at(&xs, &ys, w) {
        if t <= s {
            p = q;
            s = t;
        }
    }
    let polished = gauss_newton(ModelKind::Fourier1, p.clone(), &xs, &ys);
    if sse(ModelKind::Fourier1, &polished, &xs, &ys) <= s {
        p = polished;
    }
    if p[3] < 0.0 {
        p = vec![p[0], p[1], -p[2], -p[3]];
    }
    RegressionFit::assemble(ModelKind::Fourier1, p, &xs, &ys, 3, Vec::new())
}

/// Minimum of a unimodal `f` on `[a, b]`.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a) <= 1e-13 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}
