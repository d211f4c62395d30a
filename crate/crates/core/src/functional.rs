//! Discretised functional data, basis systems and the Gram-matrix machinery
//! that reduces functional PCA/PLS to finite-dimensional problems.
//!
//! Every curve is observed on one shared, strictly increasing grid and all
//! integrals are trapezoidal sums on that grid. A [`BasisSystem`] carries the
//! basis evaluated on the grid together with its Gram matrix `Ψ = ∫ψψᵀ`, the
//! symmetric square root `Ψ^{1/2}` and its inverse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `n` curves sampled on a common grid, optionally paired with scalar
/// responses.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    grid: Vec<f64>,
    curves: DMatrix<f64>,
    response: Option<DVector<f64>>,
}

impl FunctionalDataset {
    pub fn new(grid: Vec<f64>, curves: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if response.len() != curves.nrows() {
            return Err(Error::shape(format!(
                "{} curves but {} responses",
                curves.nrows(),
                response.len()
            )));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("response contains non-finite values"));
        }
        let mut ds = Self::curves_only(grid, curves)?;
        ds.response = Some(response);
        Ok(ds)
    }

    /// A dataset without responses, e.g. new curves to predict from.
    pub fn curves_only(grid: Vec<f64>, curves: DMatrix<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        if curves.ncols() != grid.len() {
            return Err(Error::shape(format!(
                "curves have {} columns but the grid has {} points",
                curves.ncols(),
                grid.len()
            )));
        }
        if curves.nrows() == 0 {
            return Err(Error::invalid("dataset contains no curves"));
        }
        if curves.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("curves contain non-finite values"));
        }
        Ok(Self { grid, curves, response: None })
    }

    pub fn n(&self) -> usize {
        self.curves.nrows()
    }

    pub fn p(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn curves(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn response(&self) -> Option<&DVector<f64>> {
        self.response.as_ref()
    }

    pub fn require_response(&self) -> Result<&DVector<f64>> {
        self.response
            .as_ref()
            .ok_or_else(|| Error::invalid("dataset has no response vector"))
    }

    /// Rows `indices` of the dataset, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let curves = self.curves.select_rows(indices);
        let response = self
            .response
            .as_ref()
            .map(|y| DVector::from_iterator(indices.len(), indices.iter().map(|&i| y[i])));
        Self { grid: self.grid.clone(), curves, response }
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("grid contains non-finite values"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    Ok(())
}

/// Trapezoid-rule weights `q` such that `∫f ≈ Σ q_j f(t_j)`.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let p = grid.len();
    let mut q = vec![0.0; p];
    for j in 0..p.saturating_sub(1) {
        let h = 0.5 * (grid[j + 1] - grid[j]);
        q[j] += h;
        q[j + 1] += h;
    }
    q
}

/// `⟨f, g⟩ = ∫ f g` by the trapezoid rule on `grid`.
pub fn inner_product(f: &[f64], g: &[f64], grid: &[f64]) -> Result<f64> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(Error::shape(format!(
            "inner product of lengths {} and {} on a grid of {}",
            f.len(),
            g.len(),
            grid.len()
        )));
    }
    let mut acc = 0.0;
    for j in 0..grid.len().saturating_sub(1) {
        let h = grid[j + 1] - grid[j];
        acc += 0.5 * h * (f[j] * g[j] + f[j + 1] * g[j + 1]);
    }
    Ok(acc)
}

/// Family of basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    /// Clamped B-splines of the given degree with equally spaced interior
    /// knots.
    Bspline { degree: usize },
    /// Orthonormal Fourier basis whose period is the grid range:
    /// constant, then sin/cos pairs of increasing frequency.
    Fourier,
}

impl Default for BasisKind {
    fn default() -> Self {
        BasisKind::Bspline { degree: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct BasisSystem {
    kind: BasisKind,
    num_basis: usize,
    grid: Vec<f64>,
    knots: Vec<f64>,
    eval: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_sqrt: DMatrix<f64>,
    gram_inv_sqrt: DMatrix<f64>,
}

impl BasisSystem {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Full (clamped) knot vector; empty for Fourier bases.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `p × M` matrix of basis values on the grid.
    pub fn eval(&self) -> &DMatrix<f64> {
        &self.eval
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_sqrt(&self) -> &DMatrix<f64> {
        &self.gram_sqrt
    }

    pub fn gram_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.gram_inv_sqrt
    }

    /// Evaluate basis-coefficient vectors (one per column of `coeffs`) on the
    /// grid.
    pub fn curves_from_coeffs(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        &self.eval * coeffs
    }

    /// Values of the basis functions at arbitrary points inside the grid range.
    pub fn evaluate_at(&self, points: &[f64]) -> DMatrix<f64> {
        let (a, b) = (self.grid[0], self.grid[self.grid.len() - 1]);
        match self.kind {
            BasisKind::Fourier => fourier_eval(points, self.num_basis, a, b),
            BasisKind::Bspline { degree } => bspline_eval(points, &self.knots, degree, self.num_basis),
        }
    }

    /// True when `other` was built from the same kind, size and grid.
    pub fn same_as(&self, other: &BasisSystem) -> bool {
        self.kind == other.kind && self.num_basis == other.num_basis && self.grid == other.grid
    }
}

/// Build a basis of `num_basis` functions on `grid` together with its Gram
/// matrix and symmetric square roots.
pub fn build_basis(kind: BasisKind, num_basis: usize, grid: &[f64]) -> Result<BasisSystem> {
    validate_grid(grid)?;
    if num_basis == 0 {
        return Err(Error::invalid("basis needs at least one function"));
    }
    if grid.len() < num_basis {
        return Err(Error::invalid(format!(
            "grid of {} points cannot support {} basis functions",
            grid.len(),
            num_basis
        )));
    }
    let (a, b) = (grid[0], grid[grid.len() - 1]);
    let (eval, knots) = match kind {
        BasisKind::Fourier => (fourier_eval(grid, num_basis, a, b), Vec::new()),
        BasisKind::Bspline { degree } => {
            if num_basis < degree + 1 {
                return Err(Error::invalid(format!(
                    "a degree-{degree} B-spline basis needs at least {} functions",
                    degree + 1
                )));
            }
            let knots = clamped_knots(a, b, degree, num_basis);
            (bspline_eval(grid, &knots, degree, num_basis), knots)
        }
    };

    let m = num_basis;
    let mut gram = DMatrix::zeros(m, m);
    for j in 0..m {
        let cj: Vec<f64> = eval.column(j).iter().copied().collect();
        for k in j..m {
            let ck: Vec<f64> = eval.column(k).iter().copied().collect();
            let v = inner_product(&cj, &ck, grid)?;
            gram[(j, k)] = v;
            gram[(k, j)] = v;
        }
    }

    let (gram_sqrt, gram_inv_sqrt) = symmetric_sqrt_pair(&gram)?;
    Ok(BasisSystem {
        kind,
        num_basis,
        grid: grid.to_vec(),
        knots,
        eval,
        gram,
        gram_sqrt,
        gram_inv_sqrt,
    })
}

fn symmetric_sqrt_pair(gram: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::SingularGram { condition: f64::INFINITY });
    }
    let floor = 1e-12 * max;
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= floor {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::SingularGram { condition });
    }
    let v = &eig.eigenvectors;
    let sq = DVector::from_iterator(gram.nrows(), eig.eigenvalues.iter().map(|l| l.max(floor).sqrt()));
    let inv = sq.map(|s| 1.0 / s);
    let sqrt = v * DMatrix::from_diagonal(&sq) * v.transpose();
    let inv_sqrt = v * DMatrix::from_diagonal(&inv) * v.transpose();
    Ok((symmetrize(sqrt), symmetrize(inv_sqrt)))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t).scale(0.5)
}

fn fourier_eval(points: &[f64], m: usize, a: f64, b: f64) -> DMatrix<f64> {
    let len = b - a;
    let c0 = 1.0 / len.sqrt();
    let c = (2.0 / len).sqrt();
    DMatrix::from_fn(points.len(), m, |i, j| {
        if j == 0 {
            return c0;
        }
        let freq = j.div_ceil(2) as f64;
        let arg = 2.0 * PI * freq * (points[i] - a) / len;
        if j % 2 == 1 {
            c * arg.sin()
        } else {
            c * arg.cos()
        }
    })
}

fn clamped_knots(a: f64, b: f64, degree: usize, m: usize) -> Vec<f64> {
    let interior = m - degree - 1;
    let mut knots = Vec::with_capacity(m + degree + 1);
    knots.extend(std::iter::repeat_n(a, degree + 1));
    for i in 1..=interior {
        knots.push(a + (b - a) * i as f64 / (interior + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(b, degree + 1));
    knots
}

/// Cox–de Boor evaluation; entries outside each function's support are
/// exactly zero.
fn bspline_eval(points: &[f64], knots: &[f64], degree: usize, m: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(points.len(), m);
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    let mut vals = vec![0.0; degree + 1];
    for (i, &t) in points.iter().enumerate() {
        let span = find_span(t, knots, degree, m);
        vals[0] = 1.0;
        for j in 1..=degree {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { vals[r] / denom } else { 0.0 };
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        for (r, v) in vals.iter().enumerate() {
            out[(i, span - degree + r)] = *v;
        }
    }
    out
}

fn find_span(t: f64, knots: &[f64], degree: usize, m: usize) -> usize {
    if t >= knots[m] {
        return m - 1;
    }
    if t <= knots[degree] {
        return degree;
    }
    let (mut lo, mut hi) = (degree, m);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Basis-expansion coefficients of each curve, `n × M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    coeffs: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn from_matrix(coeffs: DMatrix<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn n(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn num_basis(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Curves rebuilt from their coefficients, `n × p`.
    pub fn reconstruct(&self, basis: &BasisSystem) -> DMatrix<f64> {
        &self.coeffs * basis.eval().transpose()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self { coeffs: self.coeffs.select_rows(indices) }
    }
}

/// Least-squares projection of every curve onto the basis.
pub fn project_curves(dataset: &FunctionalDataset, basis: &BasisSystem) -> Result<CoefficientMatrix> {
    if dataset.grid() != basis.grid() {
        return Err(Error::ModelMismatch("dataset and basis use different grids".into()));
    }
    let e = basis.eval();
    let m = e.ncols();
    let qr = e.clone().qr();
    let r = qr.r();
    let max = (0..m).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let min = (0..m).map(|j| r[(j, j)].abs()).fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= 1e-10 * max {
        return Err(Error::RankDeficient(format!(
            "basis evaluation matrix has relative pivot {:.3e}",
            if max > 0.0 { min / max } else { 0.0 }
        )));
    }
    let rhs = qr.q().tr_mul(&dataset.curves().transpose());
    let sol = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    Ok(CoefficientMatrix { coeffs: sol.transpose() })
}
