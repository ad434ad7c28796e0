//! Two-unknown linear least squares: accumulated normal equations for cheap
//! repeated solves, and an orthogonal factorisation of explicit rows where
//! accuracy matters.

use nalgebra::{DMatrix, DVector, Matrix2};

/// Largest accepted condition number of the column-equilibrated normal
/// matrix before a system is treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;

/// Accumulated `A^T A`, `A^T b` and `b^T b` for a system with two columns.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormalEquations2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
    pub xb: f64,
    pub yb: f64,
    pub bb: f64,
    pub rows: usize,
}

impl NormalEquations2 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows<'a>(rows: impl IntoIterator<Item = (&'a [f64; 2], &'a f64)>) -> Self {
        let mut ne = Self::new();
        for (row, rhs) in rows {
            ne.push(row[0], row[1], *rhs);
        }
        ne
    }

    pub fn push(&mut self, x: f64, y: f64, b: f64) {
        self.xx += x * x;
        self.xy += x * y;
        self.yy += y * y;
        self.xb += x * b;
        self.yb += y * b;
        self.bb += b * b;
        self.rows += 1;
    }

    /// Condition number of `A^T A` after scaling both columns to unit norm.
    /// Infinite when a column is zero.
    pub fn condition(&self) -> f64 {
        if !(self.xx > 0.0) || !(self.yy > 0.0) {
            return f64::INFINITY;
        }
        let rho = (self.xy / (self.xx.sqrt() * self.yy.sqrt())).abs();
        if rho >= 1.0 {
            return f64::INFINITY;
        }
        (1.0 + rho) / (1.0 - rho)
    }

    /// Solves for `[x, y]`; `None` when the system is too ill-conditioned.
    pub fn solve(&self) -> Option<[f64; 2]> {
        if self.rows < 2 || !(self.condition() <= MAX_CONDITION) {
            return None;
        }
        let det = self.xx * self.yy - self.xy * self.xy;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let x = (self.yy * self.xb - self.xy * self.yb) / det;
        let y = (self.xx * self.yb - self.xy * self.xb) / det;
        (x.is_finite() && y.is_finite()).then_some([x, y])
    }
}

/// Least-squares solution of explicit rows through a QR factorisation of the
/// column-equilibrated matrix, so the error grows with the condition number of
/// `A` rather than its square. Rejects the same systems as
/// [`NormalEquations2::solve`]: the equilibrated `A^T A` must have condition
/// at most [`MAX_CONDITION`].
pub fn solve_rows(rows: &[[f64; 2]], rhs: &[f64]) -> Option<[f64; 2]> {
    if rows.len() < 2 || rows.len() != rhs.len() {
        return None;
    }
    let norm = |j: usize| rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
    let scale = [norm(0), norm(1)];
    if !(scale[0] > 0.0 && scale[1] > 0.0) || !scale.iter().all(|s| s.is_finite()) {
        return None;
    }
    let a = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j] / scale[j]);
    let qr = a.qr();
    let r = qr.r();
    let r2 = Matrix2::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 1)]);
    let sv = r2.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if !(lo > 0.0) || !((hi / lo).powi(2) <= MAX_CONDITION) {
        return None;
    }
    let qtb = qr.q().transpose() * DVector::from_column_slice(rhs);
    let y1 = qtb[1] / r2[(1, 1)];
    let y0 = (qtb[0] - r2[(0, 1)] * y1) / r2[(0, 0)];
    let x = [y0 / scale[0], y1 / scale[1]];
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `||A x - b||` evaluated row by row.
pub fn residual_norm(rows: &[[f64; 2]], rhs: &[f64], x: [f64; 2]) -> f64 {
    rows.iter()
        .zip(rhs)
        .map(|(r, b)| {
            let e = r[0] * x[0] + r[1] * x[1] - b;
            e * e
        })
        .sum::<f64>()
        .sqrt()
}
