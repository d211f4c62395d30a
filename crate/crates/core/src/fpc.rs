//! Functional principal components: the classical covariance eigenbasis and
//! the robust projection-pursuit basis that maximises an M-scale.
//!
//! Both work on `D = (ã − center)·Ψ^{1/2}`, where inner products of curves
//! become Euclidean inner products of rows. Directions found in that space
//! are mapped back to basis coefficients through `Ψ^{-1/2}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::fpls::PlsState;
use crate::functional::{BasisSystem, CoefficientMatrix};
use crate::linalg::{column_medians, golden_section};
use crate::robust_scale::{m_scale, MScaleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionMethod {
    Fpc,
    Rfpc,
    Fpls,
    Rfpls,
}

impl DecompositionMethod {
    pub fn is_robust(self) -> bool {
        matches!(self, DecompositionMethod::Rfpc | DecompositionMethod::Rfpls)
    }

    pub fn is_pls(self) -> bool {
        matches!(self, DecompositionMethod::Fpls | DecompositionMethod::Rfpls)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecompositionMethod::Fpc => "fpc",
            DecompositionMethod::Rfpc => "rfpc",
            DecompositionMethod::Fpls => "fpls",
            DecompositionMethod::Rfpls => "rfpls",
        }
    }
}

impl std::str::FromStr for DecompositionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fpc" => Ok(Self::Fpc),
            "rfpc" => Ok(Self::Rfpc),
            "fpls" => Ok(Self::Fpls),
            "rfpls" => Ok(Self::Rfpls),
            other => Err(Error::invalid(format!("unknown decomposition method '{other}'"))),
        }
    }
}

/// A fitted set of `K` orthonormal component functions.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub method: DecompositionMethod,
    /// `M × K`; column `k` holds the basis coefficients of `φ̂_k`.
    pub phi: DMatrix<f64>,
    /// Criterion value of each component (variance, squared M-scale or
    /// squared covariance).
    pub lambdas: Vec<f64>,
    /// `n × K` scores `â_ik = ∫ (𝒳_i − center) φ̂_k`.
    pub scores: DMatrix<f64>,
    /// Basis coefficients of the centring function.
    pub center: DVector<f64>,
    /// Fewer components than requested were returned.
    pub truncated: bool,
    /// PLS internals (components, rotations, case weights); `None` for
    /// principal-component methods.
    pub pls: Option<PlsState>,
}

impl Decomposition {
    pub fn num_components(&self) -> usize {
        self.phi.ncols()
    }
}

/// `(ã − center)·Ψ^{1/2}`.
pub(crate) fn whitened(coeffs: &DMatrix<f64>, center: &DVector<f64>, basis: &BasisSystem) -> DMatrix<f64> {
    centered(coeffs, center) * basis.gram_sqrt()
}

pub(crate) fn centered(coeffs: &DMatrix<f64>, center: &DVector<f64>) -> DMatrix<f64> {
    let mut c = coeffs.clone();
    for mut row in c.row_iter_mut() {
        row -= center.transpose();
    }
    c
}

pub(crate) fn check_dims(coeffs: &CoefficientMatrix, basis: &BasisSystem, k: usize) -> Result<()> {
    let (n, m) = coeffs.coeffs().shape();
    if m != basis.num_basis() {
        return Err(Error::shape(format!(
            "coefficients have {m} columns but the basis has {} functions",
            basis.num_basis()
        )));
    }
    if k == 0 {
        return Err(Error::invalid("number of components must be at least 1"));
    }
    if n < 2 || k > (n - 1).min(m) {
        return Err(Error::invalid(format!(
            "K = {k} exceeds min(n − 1, M) = {}",
            (n.max(1) - 1).min(m)
        )));
    }
    Ok(())
}

/// Flip each column so its largest-magnitude entry (first on ties) is
/// positive; returns the applied signs.
pub(crate) fn fix_signs(phi: &mut DMatrix<f64>) -> Vec<f64> {
    let mut signs = Vec::with_capacity(phi.ncols());
    for mut col in phi.column_iter_mut() {
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        let s = if col[best] < 0.0 { -1.0 } else { 1.0 };
        col.scale_mut(s);
        signs.push(s);
    }
    signs
}

/// Classical functional principal components.
pub fn fpc(coeffs: &CoefficientMatrix, basis: &BasisSystem, k: usize) -> Result<Decomposition> {
    check_dims(coeffs, basis, k)?;
    let a = coeffs.coeffs();
    let n = a.nrows();
    let center = a.row_mean().transpose();
    let d = whitened(a, &center, basis);
    let cov = (d.transpose() * &d).scale(1.0 / (n - 1) as f64);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Err(Error::DegenerateData("curves have zero variance".into()));
    }
    let v = DMatrix::from_fn(a.ncols(), k, |r, c| eig.eigenvectors[(r, order[c])]);
    let lambdas: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut phi = basis.gram_inv_sqrt() * v;
    fix_signs(&mut phi);
    let scores = centered(a, &center) * basis.gram() * &phi;
    Ok(Decomposition {
        method: DecompositionMethod::Fpc,
        phi,
        lambdas,
        scores,
        center,
        truncated: false,
        pls: None,
    })
}

const ANGLE_GRID: usize = 24;
const MAX_SWEEPS: usize = 100;
const SWEEP_GAIN_TOL: f64 = 1e-8;

/// Robust functional principal components by projection pursuit on the
/// M-scale of the projected, median-centred curves.
pub fn rfpc(
    coeffs: &CoefficientMatrix,
    basis: &BasisSystem,
    k: usize,
    config: &MScaleConfig,
) -> Result<Decomposition> {
    check_dims(coeffs, basis, k)?;
    config.validate()?;
    let a = coeffs.coeffs();
    let (n, m) = a.shape();
    if n < 4 {
        return Err(Error::invalid("robust principal components need at least 4 curves"));
    }
    let center = column_medians(a);
    let d = whitened(a, &center, basis);
    let crit = |v: &DVector<f64>| -> Result<f64> {
        let proj = &d * v;
        Ok(m_scale(proj.as_slice(), config)?.scale)
    };

    let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut lambdas = Vec::with_capacity(k);
    for _ in 0..k {
        // Candidates: observations projected onto the orthogonal complement.
        let mut best: Option<(DVector<f64>, f64)> = None;
        let norms: Vec<DVector<f64>> = d
            .row_iter()
            .map(|r| deflate(&r.transpose(), &dirs))
            .collect();
        let max_norm = norms.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !(max_norm > 0.0) {
            return Err(Error::DegenerateData("no candidate direction left after deflation".into()));
        }
        for cand in norms {
            let nv = cand.norm();
            if nv <= 1e-10 * max_norm {
                continue;
            }
            let v = cand / nv;
            let s = crit(&v)?;
            if best.as_ref().is_none_or(|(_, bs)| s > *bs) {
                best = Some((v, s));
            }
        }
        let (mut v, mut s) =
            best.ok_or_else(|| Error::DegenerateData("all candidate directions vanish".into()))?;

        let mut others = complement_basis(&dirs, &v, m);
        for _ in 0..MAX_SWEEPS {
            let start = s;
            for j in 0..others.len() {
                let u = others[j].clone();
                let eval = |theta: f64| -> f64 {
                    let w = v.scale(theta.cos()) + u.scale(theta.sin());
                    crit(&w).unwrap_or(f64::NEG_INFINITY)
                };
                let step = 2.0 * FRAC_PI_2 / ANGLE_GRID as f64;
                let mut best_t = 0.0;
                let mut best_s = s;
                for g in 0..ANGLE_GRID {
                    let theta = -FRAC_PI_2 + step * g as f64;
                    if theta == 0.0 {
                        continue;
                    }
                    let val = eval(theta);
                    if val > best_s {
                        best_s = val;
                        best_t = theta;
                    }
                }
                let (t, val) =
                    golden_section(|t| -eval(t), best_t - step, best_t + step, 1e-9);
                let (t, val) = if -val > best_s { (t, -val) } else { (best_t, best_s) };
                if val > s && t != 0.0 {
                    let (c, sn) = (t.cos(), t.sin());
                    let new_v = v.scale(c) + u.scale(sn);
                    others[j] = v.scale(-sn) + u.scale(c);
                    v = new_v;
                    s = val;
                }
            }
            if s - start <= SWEEP_GAIN_TOL * start.abs() {
                break;
            }
        }
        // Re-orthonormalise against earlier directions to remove drift.
        let v = deflate(&v, &dirs);
        let v = &v / v.norm();
        let s = crit(&v)?;
        lambdas.push(s * s);
        dirs.push(v);
    }

    let v = DMatrix::from_columns(&dirs);
    let mut phi = basis.gram_inv_sqrt() * v;
    fix_signs(&mut phi);
    let scores = centered(a, &center) * basis.gram() * &phi;
    Ok(Decomposition {
        method: DecompositionMethod::Rfpc,
        phi,
        lambdas,
        scores,
        center,
        truncated: false,
        pls: None,
    })
}

fn deflate(x: &DVector<f64>, dirs: &[DVector<f64>]) -> DVector<f64> {
    let mut r = x.clone();
    for d in dirs {
        let c = d.dot(&r);
        r.axpy(-c, d, 1.0);
    }
    r
}

/// Orthonormal basis of the complement of `span(dirs ∪ {v})`.
fn complement_basis(dirs: &[DVector<f64>], v: &DVector<f64>, m: usize) -> Vec<DVector<f64>> {
    let mut span: Vec<DVector<f64>> = dirs.to_vec();
    span.push(v.clone());
    let target = m - span.len();
    let mut out = Vec::with_capacity(target);
    for i in 0..m {
        if out.len() == target {
            break;
        }
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        // Two passes of Gram–Schmidt for stability.
        for _ in 0..2 {
            for s in span.iter().chain(out.iter()) {
                let c = s.dot(&e);
                e.axpy(-c, s, 1.0);
            }
        }
        let nrm = e.norm();
        if nrm > 1e-6 {
            out.push(e / nrm);
        }
    }
    out
}

/// Scores of new curves on a fitted decomposition:
/// `(ã_new − center)·Ψ·φ̂`.
pub fn scores_for(
    decomposition: &Decomposition,
    new_coeffs: &CoefficientMatrix,
    basis: &BasisSystem,
) -> Result<DMatrix<f64>> {
    let m = decomposition.phi.nrows();
    if basis.num_basis() != m || new_coeffs.num_basis() != m {
        return Err(Error::ModelMismatch(format!(
            "decomposition uses {m} basis functions, got basis of {} and coefficients with {}",
            basis.num_basis(),
            new_coeffs.num_basis()
        )));
    }
    Ok(centered(new_coeffs.coeffs(), &decomposition.center) * basis.gram() * &decomposition.phi)
}
