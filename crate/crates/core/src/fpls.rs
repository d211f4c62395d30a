//! Functional partial least squares and its partially robust M variant.
//!
//! Functional PLS of `Y` on `𝒳(t)` is computed as ordinary PLS1 of `Y` on
//! `D = ã_c·Ψ^{1/2}`. The robust variant re-runs PLS on case-weighted data
//! `(√r_i·y_i, √r_i·D_i)`, where `r_i` is the product of a Hampel weight on
//! the standardised regression residual and a Hampel weight on the score
//! leverage, until the coefficient vector stabilises.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpc::{check_dims, centered, fix_signs, Decomposition, DecompositionMethod};
use crate::functional::{BasisSystem, CoefficientMatrix};
use crate::linalg::{column_medians, mad, median, weighted_least_squares};
use crate::robust_scale::{m_scale, MScaleConfig, MAD_NORMAL};

/// Cutoffs `a < b < q` of the three-part redescending Hampel weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HampelConfig {
    pub a: f64,
    pub b: f64,
    pub q: f64,
}

impl Default for HampelConfig {
    /// Standard-normal quantiles at 0.95, 0.975 and 0.999.
    fn default() -> Self {
        Self { a: 1.644_853_626_951_472_2, b: 1.959_963_984_540_054, q: 3.090_232_306_167_813_5 }
    }
}

impl HampelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < self.b && self.b < self.q) {
            return Err(Error::invalid(format!(
                "Hampel cutoffs must satisfy 0 < a < b < q, got ({}, {}, {})",
                self.a, self.b, self.q
            )));
        }
        Ok(())
    }

    pub fn weight(&self, z: f64) -> f64 {
        let z = z.abs();
        if z <= self.a {
            1.0
        } else if z <= self.b {
            self.a / z
        } else if z <= self.q {
            self.a * (self.q - z) / ((self.q - self.b) * z)
        } else {
            0.0
        }
    }
}

/// Internals of a (robust) PLS fit, expressed in the whitened `D` space
/// unless stated otherwise.
#[derive(Debug, Clone)]
pub struct PlsState {
    /// `M × K` orthonormal weight vectors `w_h`.
    pub directions: DMatrix<f64>,
    /// `M × K` rotations `R = W (PᵀW)⁻¹`, so that `components = D_c R`.
    pub rotations: DMatrix<f64>,
    /// `M × K` predictor loadings `p_h`.
    pub loadings_p: DMatrix<f64>,
    /// Response loadings `q_h`.
    pub loadings_q: Vec<f64>,
    /// `n × K` mutually orthogonal components (unweighted observations).
    pub components: DMatrix<f64>,
    /// Case weights `r_i ∈ [0, 1]` of the final PLS pass.
    pub case_weights: DVector<f64>,
    /// `Ψ^{-1/2} R`, mapping component regression coefficients to basis
    /// coefficients of `β(t)`.
    pub coef_rotations: DMatrix<f64>,
    pub y_center: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Pls1 {
    w: DMatrix<f64>,
    p: DMatrix<f64>,
    q: Vec<f64>,
    lambdas: Vec<f64>,
    truncated: bool,
}

/// NIPALS PLS1 on centred `(x, y)`, weighted by `r` (the data are scaled by
/// `√r` internally).
fn pls1(x: &DMatrix<f64>, y: &DVector<f64>, r: &DVector<f64>, k: usize) -> Result<Pls1> {
    let n = x.nrows();
    let mut xw = x.clone();
    let mut yw = y.clone();
    for i in 0..n {
        let s = r[i].sqrt();
        xw.row_mut(i).scale_mut(s);
        yw[i] *= s;
    }
    let scale = xw.norm() * yw.norm();
    let mut ws = Vec::with_capacity(k);
    let mut ps = Vec::with_capacity(k);
    let mut qs = Vec::with_capacity(k);
    let mut lambdas = Vec::with_capacity(k);
    let mut truncated = false;
    let dof = (r.sum() - 1.0).max(1.0);
    for h in 0..k {
        let c = xw.tr_mul(&yw);
        let cn = c.norm();
        if !(cn > 1e-10 * scale) || scale == 0.0 {
            if h == 0 {
                return Err(Error::DegenerateData(
                    "response has zero covariance with the predictor".into(),
                ));
            }
            truncated = true;
            break;
        }
        let w = c / cn;
        let t = &xw * &w;
        let tt = t.dot(&t);
        let p = xw.tr_mul(&t) / tt;
        let q = yw.dot(&t) / tt;
        // On √r-scaled data the plain cross-product is the r-weighted one,
        // which is the robust covariance used here.
        let cov = yw.dot(&t) / dof;
        lambdas.push(cov * cov);
        xw -= &t * p.transpose();
        yw.axpy(-q, &t, 1.0);
        ws.push(w);
        ps.push(p);
        qs.push(q);
    }
    Ok(Pls1 {
        w: DMatrix::from_columns(&ws),
        p: DMatrix::from_columns(&ps),
        q: qs,
        lambdas,
        truncated,
    })
}

struct PlsPass {
    state: PlsState,
    phi: DMatrix<f64>,
    scores: DMatrix<f64>,
    lambdas: Vec<f64>,
    center: DVector<f64>,
    truncated: bool,
    gamma: DVector<f64>,
}

fn pls_pass(
    a: &DMatrix<f64>,
    basis: &BasisSystem,
    y: &DVector<f64>,
    r: &DVector<f64>,
    k: usize,
) -> Result<PlsPass> {
    let sw = r.sum();
    if !(sw > 0.0) {
        return Err(Error::DegenerateData("all case weights are zero".into()));
    }
    let center = (a.transpose() * r) / sw;
    let y_center = r.dot(y) / sw;
    let ac = centered(a, &center);
    let d = &ac * basis.gram_sqrt();
    let yc = y.add_scalar(-y_center);
    let fit = pls1(&d, &yc, r, k)?;
    let mut w = fit.w;
    let mut p = fit.p;
    let mut q = fit.q;

    let mut phi = basis.gram_inv_sqrt() * &w;
    let signs = fix_signs(&mut phi);
    for (h, s) in signs.iter().enumerate() {
        w.column_mut(h).scale_mut(*s);
        p.column_mut(h).scale_mut(*s);
        q[h] *= s;
    }
    let ptw = p.transpose() * &w;
    let inv = ptw
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("PᵀW is singular".into()))?;
    let rot = &w * inv;
    let components = &d * &rot;
    let gamma = weighted_least_squares(&components, &yc, Some(r))?;
    let coef_rotations = basis.gram_inv_sqrt() * &rot;
    let scores = &ac * basis.gram() * &phi;
    let truncated = fit.truncated;
    Ok(PlsPass {
        state: PlsState {
            directions: w,
            rotations: rot,
            loadings_p: p,
            loadings_q: q,
            components,
            case_weights: r.clone(),
            coef_rotations,
            y_center,
            iterations: 1,
            converged: true,
        },
        phi,
        scores,
        lambdas: fit.lambdas,
        center,
        truncated,
        gamma,
    })
}

fn into_decomposition(pass: PlsPass, method: DecompositionMethod) -> Decomposition {
    Decomposition {
        method,
        phi: pass.phi,
        lambdas: pass.lambdas,
        scores: pass.scores,
        center: pass.center,
        truncated: pass.truncated,
        pls: Some(pass.state),
    }
}

fn check_response(coeffs: &CoefficientMatrix, y: &DVector<f64>) -> Result<()> {
    if y.len() != coeffs.n() {
        return Err(Error::shape(format!("{} curves but {} responses", coeffs.n(), y.len())));
    }
    Ok(())
}

/// Classical functional PLS with `K` components.
pub fn fpls(coeffs: &CoefficientMatrix, basis: &BasisSystem, y: &DVector<f64>, k: usize) -> Result<Decomposition> {
    check_dims(coeffs, basis, k)?;
    check_response(coeffs, y)?;
    let r = DVector::from_element(coeffs.n(), 1.0);
    let pass = pls_pass(coeffs.coeffs(), basis, y, &r, k)?;
    Ok(into_decomposition(pass, DecompositionMethod::Fpls))
}

const RFPLS_MAX_ITER: usize = 50;
const RFPLS_TOL: f64 = 1e-6;

/// Robust functional PLS via iteratively reweighted PLS with Hampel
/// residual and leverage weights.
pub fn rfpls(
    coeffs: &CoefficientMatrix,
    basis: &BasisSystem,
    y: &DVector<f64>,
    k: usize,
    hampel: &HampelConfig,
) -> Result<Decomposition> {
    check_dims(coeffs, basis, k)?;
    check_response(coeffs, y)?;
    hampel.validate()?;
    let a = coeffs.coeffs();
    let n = a.nrows();

    // Starting weights from median-centred responses and median-centred
    // whitened coefficients.
    let ys = y.as_slice();
    let ymed = median(ys);
    let e0: Vec<f64> = ys.iter().map(|v| v - ymed).collect();
    let s0 = robust_spread(&e0);
    let raw = a * basis.gram_sqrt();
    let med = column_medians(&raw);
    let lev0 = leverage_ratios(&centered(&raw, &med));
    let mut r = DVector::from_fn(n, |i, _| hampel.weight(e0[i] / s0) * hampel.weight(lev0[i]));

    let mut prev: Option<DVector<f64>> = None;
    let mut last: Option<PlsPass> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=RFPLS_MAX_ITER {
        iterations = it;
        let pass = pls_pass(a, basis, y, &r, k)?;
        let coef = &pass.state.rotations * &pass.gamma;
        let done = prev.as_ref().is_some_and(|old| {
            let denom = old.amax().max(1e-300);
            (&coef - old).amax() / denom < RFPLS_TOL
        });

        let yc = y.add_scalar(-pass.state.y_center);
        let resid = &yc - &pass.state.components * &pass.gamma;
        let sigma = residual_scale(resid.as_slice())?;
        let lev = leverage_ratios(&centered(
            &pass.state.components,
            &column_medians(&pass.state.components),
        ));
        let next = DVector::from_fn(n, |i, _| {
            let wr = if sigma > 0.0 { hampel.weight(resid[i] / sigma) } else { 1.0 };
            wr * hampel.weight(lev[i])
        });

        prev = Some(coef);
        last = Some(pass);
        if done {
            converged = true;
            break;
        }
        r = next;
    }
    let mut pass = last.expect("at least one RFPLS iteration");
    pass.state.iterations = iterations;
    pass.state.converged = converged;
    Ok(into_decomposition(pass, DecompositionMethod::Rfpls))
}

fn robust_spread(x: &[f64]) -> f64 {
    let s = mad(x, median(x)) / MAD_NORMAL;
    if s > 0.0 {
        s
    } else {
        let n = x.len() as f64;
        (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt().max(f64::MIN_POSITIVE)
    }
}

fn residual_scale(e: &[f64]) -> Result<f64> {
    let ms = m_scale(e, &MScaleConfig::default())?;
    Ok(if ms.degenerate { robust_spread(e) } else { ms.scale })
}

/// `‖x_i‖ / med_j ‖x_j‖` for the rows of an already-centred matrix.
fn leverage_ratios(x: &DMatrix<f64>) -> Vec<f64> {
    let d: Vec<f64> = x.row_iter().map(|r| r.norm()).collect();
    let md = median(&d);
    if md > 0.0 {
        d.iter().map(|v| v / md).collect()
    } else {
        vec![0.0; d.len()]
    }
}

/// Regression of `Y` on the PLS components of a fitted decomposition.
///
/// Returns `(γ̂, β̂)` where `β̂ = Ψ^{-1/2} R γ̂` are the basis coefficients of
/// the regression function. Uses the decomposition's case weights.
pub fn pls_regression_coefficients(
    decomposition: &Decomposition,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let state = decomposition
        .pls
        .as_ref()
        .ok_or_else(|| Error::invalid("decomposition was not produced by a PLS method"))?;
    if y.len() != state.components.nrows() {
        return Err(Error::shape(format!(
            "{} components rows but {} responses",
            state.components.nrows(),
            y.len()
        )));
    }
    let r = &state.case_weights;
    let yc = y.add_scalar(-r.dot(y) / r.sum());
    let gamma = weighted_least_squares(&state.components, &yc, Some(r))?;
    let beta = &state.coef_rotations * &gamma;
    Ok((gamma, beta))
}
