//! Spatial weight matrices: great-circle inverse-distance weights, lattice
//! contiguity, user-supplied matrices, row normalisation and the admissible
//! interval for the autoregressive parameter.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::HessenbergForm;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    InverseDistance,
    Rook,
    Queen,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contiguity {
    Rook,
    Queen,
}

/// Great-circle distance by the haversine formula. Coordinates in degrees.
pub fn haversine_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64, radius_km: f64) -> f64 {
    let (u1, u2) = (lat1.to_radians(), lat2.to_radians());
    let du = u2 - u1;
    let dv = (lon2 - lon1).to_radians();
    let a = (du / 2.0).sin().powi(2) + u1.cos() * u2.cos() * (dv / 2.0).sin().powi(2);
    let a = a.clamp(0.0, 1.0);
    let c = 2.0 * a.sqrt().atan2((1.0 - a).sqrt());
    radius_km * c
}

/// A row-normalised spatial weight matrix with zero diagonal.
#[derive(Debug)]
pub struct SpatialWeights {
    w: DMatrix<f64>,
    scheme: WeightScheme,
    isolated: Vec<usize>,
    eigenvalues: Vec<Complex<f64>>,
    lambda_min: f64,
    rho_bounds: (f64, f64),
    hessenberg: OnceLock<HessenbergForm>,
}

impl Clone for SpatialWeights {
    fn clone(&self) -> Self {
        Self {
            w: self.w.clone(),
            scheme: self.scheme,
            isolated: self.isolated.clone(),
            eigenvalues: self.eigenvalues.clone(),
            lambda_min: self.lambda_min,
            rho_bounds: self.rho_bounds,
            hessenberg: OnceLock::new(),
        }
    }
}

impl SpatialWeights {
    /// Wrap a raw nonnegative-or-custom matrix. The diagonal must be zero;
    /// rows are normalised to sum to one when `normalize` is set, and
    /// all-zero rows are kept and reported as isolated units.
    pub fn from_matrix(raw: DMatrix<f64>, scheme: WeightScheme, normalize: bool) -> Result<Self> {
        let n = raw.nrows();
        if raw.ncols() != n {
            return Err(Error::shape(format!("weight matrix is {}×{}", n, raw.ncols())));
        }
        if n < 2 {
            return Err(Error::invalid("weight matrix needs at least two units"));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weight matrix contains non-finite entries"));
        }
        if (0..n).any(|i| raw[(i, i)] != 0.0) {
            return Err(Error::invalid("weight matrix diagonal must be zero"));
        }
        let symmetric = raw == raw.transpose();
        let mut w = raw;
        let mut sums = vec![1.0; n];
        let mut isolated = Vec::new();
        for i in 0..n {
            let s: f64 = w.row(i).iter().sum();
            if w.row(i).iter().all(|v| *v == 0.0) {
                isolated.push(i);
            } else if normalize {
                if s == 0.0 {
                    return Err(Error::invalid(format!("row {i} sums to zero and cannot be normalised")));
                }
                w.row_mut(i).scale_mut(1.0 / s);
                sums[i] = s;
            }
        }
        let eigenvalues = spectrum(&w, symmetric, &sums)?;
        let lambda_min = min_real_eigenvalue(&eigenvalues)?;
        let rho_bounds = (-1.0 / lambda_min.abs(), 1.0);
        Ok(Self { w, scheme, isolated, eigenvalues, lambda_min, rho_bounds, hessenberg: OnceLock::new() })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    /// Units whose raw row was entirely zero.
    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    pub fn eigenvalues(&self) -> &[Complex<f64>] {
        &self.eigenvalues
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Open interval `(−1/|λ_min|, 1)` of admissible ρ.
    pub fn rho_bounds(&self) -> (f64, f64) {
        self.rho_bounds
    }

    pub fn contains_rho(&self, rho: f64) -> bool {
        rho > self.rho_bounds.0 && rho < self.rho_bounds.1
    }

    pub fn check_rho(&self, rho: f64) -> Result<()> {
        if self.contains_rho(rho) {
            Ok(())
        } else {
            Err(Error::RhoOutOfBounds { rho, lower: self.rho_bounds.0, upper: self.rho_bounds.1 })
        }
    }

    pub(crate) fn hessenberg(&self) -> &HessenbergForm {
        self.hessenberg.get_or_init(|| HessenbergForm::new(&self.w))
    }

    /// `log|det((1+ε)I − ρW)| = Σ log|1 + ε − ρλ_i|` from the cached spectrum.
    pub fn log_abs_det_spectral(&self, rho: f64, ridge: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| (Complex::new(1.0 + ridge, 0.0) - l * rho).norm().ln())
            .sum()
    }

    /// `tr[W((1+ε)I − ρW)⁻¹] = Σ λ_i / (1 + ε − ρλ_i)`.
    pub fn trace_resolvent(&self, rho: f64, ridge: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| (l / (Complex::new(1.0 + ridge, 0.0) - l * rho)).re)
            .sum()
    }

    /// Weights among the units `indices`, rows renormalised.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let sub = self.w.select_rows(indices).select_columns(indices);
        Self::from_matrix(sub, self.scheme, true)
    }
}

/// Eigenvalues of `W = D⁻¹A`. A symmetric `A` with positive row sums makes
/// `W` similar to `D^{-1/2} A D^{-1/2}`.
fn spectrum(w: &DMatrix<f64>, symmetric: bool, sums: &[f64]) -> Result<Vec<Complex<f64>>> {
    let n = w.nrows();
    if symmetric && sums.iter().all(|s| *s > 0.0) {
        let sym = DMatrix::from_fn(n, n, |i, j| w[(i, j)] * (sums[i] / sums[j]).sqrt());
        let sym = (&sym + sym.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        return Ok(eig.eigenvalues.iter().map(|v| Complex::new(*v, 0.0)).collect());
    }
    let max_iter = 1000 * n;
    w.clone()
        .try_schur(f64::EPSILON, max_iter)
        .or_else(|| w.transpose().try_schur(f64::EPSILON, max_iter))
        .map(|s| s.complex_eigenvalues().iter().copied().collect())
        .ok_or(Error::NonConvergence { what: "weight matrix eigenvalues", iterations: max_iter })
}

fn min_real_eigenvalue(eigs: &[Complex<f64>]) -> Result<f64> {
    let real: Vec<f64> = eigs
        .iter()
        .filter(|z| z.im.abs() <= 1e-8 * z.norm().max(1.0))
        .map(|z| z.re)
        .collect();
    if real.is_empty() {
        return Err(Error::NoRealEigenvalue);
    }
    let min = real.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min < 0.0 { min } else { -1.0 })
}

/// Admissible ρ interval of a weight matrix.
pub fn rho_bounds(weights: &SpatialWeights) -> (f64, f64) {
    weights.rho_bounds()
}

fn validate_coords(coords: &[(f64, f64)]) -> Result<()> {
    for (i, &(lat, lon)) in coords.iter().enumerate() {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::invalid(format!("unit {i}: coordinates ({lat}, {lon}) out of range")));
        }
    }
    Ok(())
}

/// Row-normalised inverse great-circle-distance weights from
/// `(latitude, longitude)` pairs in degrees.
pub fn inverse_distance_weights(coords: &[(f64, f64)]) -> Result<SpatialWeights> {
    let n = coords.len();
    if n < 2 {
        return Err(Error::invalid("inverse-distance weights need at least two units"));
    }
    validate_coords(coords)?;
    let mut raw = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (coords[i], coords[j]);
            let d = haversine_distance(a.0, a.1, b.0, b.1, EARTH_RADIUS_KM);
            if d <= 0.0 {
                return Err(Error::DuplicateCoordinates { first: i, second: j });
            }
            raw[(i, j)] = 1.0 / d;
            raw[(j, i)] = 1.0 / d;
        }
    }
    SpatialWeights::from_matrix(raw, WeightScheme::InverseDistance, true)
}

/// Inverse-distance weights from planar coordinates (Euclidean distance).
pub fn inverse_distance_weights_planar(points: &[(f64, f64)]) -> Result<SpatialWeights> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("inverse-distance weights need at least two units"));
    }
    let mut raw = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (points[i].0 - points[j].0).hypot(points[i].1 - points[j].1);
            if d <= 0.0 {
                return Err(Error::DuplicateCoordinates { first: i, second: j });
            }
            raw[(i, j)] = 1.0 / d;
            raw[(j, i)] = 1.0 / d;
        }
    }
    SpatialWeights::from_matrix(raw, WeightScheme::InverseDistance, true)
}

/// Rook or queen contiguity on a `rows × cols` lattice, units numbered
/// row-major.
pub fn grid_contiguity(rows: usize, cols: usize, kind: Contiguity) -> Result<SpatialWeights> {
    let n = rows * cols;
    if n < 2 {
        return Err(Error::invalid("lattice needs at least two cells"));
    }
    let mut raw = DMatrix::zeros(n, n);
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    if kind == Contiguity::Rook && dr != 0 && dc != 0 {
                        continue;
                    }
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= rows as isize || cc >= cols as isize {
                        continue;
                    }
                    let i = (r * cols as isize + c) as usize;
                    let j = (rr * cols as isize + cc) as usize;
                    raw[(i, j)] = 1.0;
                }
            }
        }
    }
    let scheme = match kind {
        Contiguity::Rook => WeightScheme::Rook,
        Contiguity::Queen => WeightScheme::Queen,
    };
    SpatialWeights::from_matrix(raw, scheme, true)
}
