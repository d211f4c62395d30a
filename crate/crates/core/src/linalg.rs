//! Small dense linear-algebra and 1-D optimisation helpers shared by the
//! estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    median_in_place(&mut v)
}

pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    assert!(!v.is_empty(), "median of empty slice");
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation about `center`, unnormalised.
pub(crate) fn mad(values: &[f64], center: f64) -> f64 {
    let mut dev: Vec<f64> = values.iter().map(|x| (x - center).abs()).collect();
    median_in_place(&mut dev)
}

/// Column-wise median of a matrix.
pub(crate) fn column_medians(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.ncols(),
        m.column_iter().map(|c| median(c.as_slice())),
    )
}

/// Weighted least squares `min Σ w_i (y_i - x_i β)²` solved through a QR
/// factorisation of `diag(√w) X`.
pub(crate) fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::shape(format!("design has {n} rows, response {}", y.len())));
    }
    let mut xs = x.clone();
    let mut ys = y.clone();
    if let Some(w) = weights {
        for i in 0..n {
            let s = w[i].max(0.0).sqrt();
            xs.row_mut(i).scale_mut(s);
            ys[i] *= s;
        }
    }
    let qr = xs.qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= 1e-12 * scale) {
        return Err(Error::SingularMatrix("least-squares design is rank deficient".into()));
    }
    let qty = qr.q().transpose() * ys;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))
}

/// log|det(A)| through an LU factorisation, accumulating log-magnitudes of
/// the pivots to avoid overflow.
pub(crate) fn log_abs_det(a: &DMatrix<f64>) -> Result<f64> {
    let lu = a.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for k in 0..u.nrows() {
        let d = u[(k, k)].abs();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::SingularMatrix("zero pivot in LU factorisation".into()));
        }
        acc += d.ln();
    }
    Ok(acc)
}

/// Upper-Hessenberg reduction `W = Q H Qᵀ`, reused to factor `(1+ε)I − ρW`
/// in O(n²) for every trial value of ρ.
#[derive(Debug, Clone)]
pub struct HessenbergForm {
    q: DMatrix<f64>,
    h: DMatrix<f64>,
}

impl HessenbergForm {
    pub fn new(w: &DMatrix<f64>) -> Self {
        let (q, h) = nalgebra::linalg::Hessenberg::new(w.clone()).unpack();
        Self { q, h }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Factor `(1 + ridge)·I − ρ·H` with partial pivoting restricted to
    /// adjacent rows, which preserves the Hessenberg structure.
    pub fn factor(&self, rho: f64, ridge: f64) -> HessenbergLu<'_> {
        let n = self.dim();
        let mut a = self.h.scale(-rho);
        for i in 0..n {
            a[(i, i)] += 1.0 + ridge;
        }
        let mut swaps = vec![false; n.saturating_sub(1)];
        let mut mult = vec![0.0; n.saturating_sub(1)];
        for k in 0..n.saturating_sub(1) {
            if a[(k + 1, k)].abs() > a[(k, k)].abs() {
                swaps[k] = true;
                for j in k..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(k + 1, j)];
                    a[(k + 1, j)] = tmp;
                }
            }
            let piv = a[(k, k)];
            let l = if piv != 0.0 { a[(k + 1, k)] / piv } else { 0.0 };
            mult[k] = l;
            a[(k + 1, k)] = 0.0;
            if l != 0.0 {
                for j in (k + 1)..n {
                    let v = a[(k, j)];
                    a[(k + 1, j)] -= l * v;
                }
            }
        }
        HessenbergLu { form: self, u: a, swaps, mult }
    }
}

pub struct HessenbergLu<'a> {
    form: &'a HessenbergForm,
    u: DMatrix<f64>,
    swaps: Vec<bool>,
    mult: Vec<f64>,
}

impl HessenbergLu<'_> {
    /// Ratio of the smallest to the largest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.u.nrows()).map(|k| self.u[(k, k)].abs()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }

    pub fn log_abs_det(&self) -> f64 {
        (0..self.u.nrows()).map(|k| self.u[(k, k)].abs().ln()).sum()
    }

    /// Solve `(I − ρW) x = b` in the original coordinates.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.u.nrows();
        let mut y = self.form.q.tr_mul(b);
        for k in 0..n.saturating_sub(1) {
            if self.swaps[k] {
                y.swap_rows(k, k + 1);
            }
            let v = y[k];
            y[k + 1] -= self.mult[k] * v;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.u[(i, j)] * y[j];
            }
            y[i] = s / self.u[(i, i)];
        }
        &self.form.q * y
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub(crate) fn golden_section<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Scan `f` on an evenly spaced grid over `[a, b]` and polish the best grid
/// point with golden-section search on the neighbouring bracket.
pub(crate) fn grid_then_golden<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    points: usize,
    tol: f64,
) -> (f64, f64) {
    let points = points.max(3);
    let step = (b - a) / (points - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..points {
        let v = f(a + step * i as f64);
        if v < best.1 {
            best = (i, v);
        }
    }
    let lo = a + step * best.0.saturating_sub(1) as f64;
    let hi = (a + step * (best.0 + 1) as f64).min(b);
    let (x, fx) = golden_section(&mut f, lo, hi, tol);
    if fx <= best.1 {
        (x, fx)
    } else {
        (a + step * best.0 as f64, best.1)
    }
}
