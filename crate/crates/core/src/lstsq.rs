//! Dense linear least squares via Householder QR on column-scaled designs.

use nalgebra::{DMatrix, DVector};

/// Relative threshold on |R_ii| below which the design is rank deficient.
const RANK_TOL: f64 = 1e-11;

/// Minimises `||design * x - y||` for a row-major `design` with `cols`
/// columns. Returns `None` when the design is rank deficient.
pub(crate) fn solve(design: &[f64], cols: usize, y: &[f64]) -> Option<Vec<f64>> {
    let rows = y.len();
    if cols == 0 || rows < cols || design.len() != rows * cols {
        return None;
    }
    let mut a = DMatrix::from_row_slice(rows, cols, design);
    let mut scale = vec![0.0; cols];
    for (j, s) in scale.iter_mut().enumerate() {
        let col = a.column(j);
        let m = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m == 0.0 || !m.is_finite() {
            return None;
        }
        *s = m;
        a.column_mut(j).scale_mut(1.0 / m);
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|i| r[(i, i)].abs() <= RANK_TOL * diag_max) {
        return None;
    }
    let q = qr.q();
    let rhs = DVector::from_column_slice(y);
    let mut sol = r.solve_upper_triangular(&(q.transpose() * &rhs))?;
    // One refinement step against the residual recovers digits lost to
    // cancellation when y is large relative to the solution.
    let resid = &rhs - &a * &sol;
    if let Some(delta) = r.solve_upper_triangular(&(q.transpose() * resid)) {
        sol += delta;
    }
    Some(sol.iter().zip(&scale).map(|(v, s)| v / s).collect())
}
