//! Estimation of the finite-dimensional spatial autoregressive model
//! `Y = ρWY + Zθ + ε`, `ε ~ N(0, σ²I)`.
//!
//! [`ml_fit`] maximises the exact Gaussian likelihood by profiling θ and σ
//! out. [`m_fit`] solves the Huber-type estimating equations of
//! [`eta_robust`] by alternating a weighted least-squares step for θ, a
//! fixed-point step for σ and a one-dimensional search for ρ.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{golden_section, grid_then_golden, log_abs_det, mad, median, weighted_least_squares};
use crate::robust_scale::MAD_NORMAL;
use crate::spatial::SpatialWeights;

/// Response, design `Z = [1, A]` and spatial weights of one fit.
#[derive(Debug, Clone)]
pub struct SarDesign<'w> {
    y: DVector<f64>,
    z: DMatrix<f64>,
    weights: &'w SpatialWeights,
    wy: DVector<f64>,
}

impl<'w> SarDesign<'w> {
    pub fn new(y: DVector<f64>, z: DMatrix<f64>, weights: &'w SpatialWeights) -> Result<Self> {
        let n = y.len();
        if z.nrows() != n || weights.n() != n {
            return Err(Error::shape(format!(
                "response has {n} entries, design {} rows, weights {} units",
                z.nrows(),
                weights.n()
            )));
        }
        if z.ncols() == 0 || z.column(0).iter().any(|v| *v != 1.0) {
            return Err(Error::invalid("first design column must be all ones"));
        }
        if n <= z.ncols() + 1 {
            return Err(Error::invalid(format!("{n} observations cannot identify {} coefficients", z.ncols())));
        }
        if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("design contains non-finite values"));
        }
        // Full column rank.
        weighted_least_squares(&z, &y, None)
            .map_err(|_| Error::SingularMatrix("design matrix Z is not of full column rank".into()))?;
        let wy = weights.matrix() * &y;
        Ok(Self { y, z, weights, wy })
    }

    /// Design with an intercept column prepended to the score matrix.
    pub fn from_scores(y: DVector<f64>, scores: &DMatrix<f64>, weights: &'w SpatialWeights) -> Result<Self> {
        let n = scores.nrows();
        let mut z = DMatrix::from_element(n, scores.ncols() + 1, 1.0);
        z.columns_mut(1, scores.ncols()).copy_from(scores);
        Self::new(y, z, weights)
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn weights(&self) -> &SpatialWeights {
        self.weights
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Spatially filtered response `(I − ρW)Y`.
    pub fn filtered(&self, rho: f64) -> DVector<f64> {
        &self.y - self.wy.scale(rho)
    }

    /// Structural residual `(I − ρW)Y − Zθ`.
    pub fn residual(&self, params: &SarParams) -> DVector<f64> {
        self.filtered(params.rho) - &self.z * &params.theta
    }

    fn check(&self, params: &SarParams) -> Result<()> {
        if params.theta.len() != self.z.ncols() {
            return Err(Error::shape(format!(
                "θ has {} entries, design has {} columns",
                params.theta.len(),
                self.z.ncols()
            )));
        }
        if !(params.sigma > 0.0) {
            return Err(Error::invalid(format!("σ must be positive, got {}", params.sigma)));
        }
        self.weights.check_rho(params.rho)
    }
}

/// `Θ = (θ, σ, ρ)` with `θ = (β₀, β₁, …, β_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SarParams {
    pub theta: DVector<f64>,
    pub sigma: f64,
    pub rho: f64,
}

impl SarParams {
    /// `(θ, σ, ρ)` concatenated.
    pub fn as_vector(&self) -> DVector<f64> {
        let k = self.theta.len();
        DVector::from_fn(k + 2, |i, _| match i {
            _ if i < k => self.theta[i],
            _ if i == k => self.sigma,
            _ => self.rho,
        })
    }
}

/// Tuning of the M-estimator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MTuning {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub eps_conv: f64,
    pub max_iter: usize,
    /// Ridge added to `I − ρW` when it is numerically singular.
    pub ridge_eps: f64,
}

impl Default for MTuning {
    fn default() -> Self {
        Self { c1: 1.4, c2: 2.4, c3: 1.65, eps_conv: 1e-6, max_iter: 100, ridge_eps: 1e-8 }
    }
}

impl MTuning {
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("Huber cutoff {name} must be positive, got {c}")));
            }
        }
        if !(self.eps_conv > 0.0) || self.max_iter == 0 || !(self.ridge_eps >= 0.0) {
            return Err(Error::invalid("M-estimator needs eps_conv > 0, max_iter > 0, ridge_eps ≥ 0"));
        }
        Ok(())
    }
}

/// Exact Gaussian log-likelihood; the Jacobian term uses a dense LU.
pub fn log_likelihood(params: &SarParams, design: &SarDesign<'_>) -> Result<f64> {
    design.check(params)?;
    let n = design.n();
    let mut a = DMatrix::identity(n, n);
    a -= design.weights().matrix().scale(params.rho);
    let logdet = log_abs_det(&a)?;
    let e = design.residual(params);
    let nf = n as f64;
    Ok(-0.5 * nf * (2.0 * std::f64::consts::PI).ln() - nf * params.sigma.ln() + logdet
        - e.norm_squared() / (2.0 * params.sigma * params.sigma))
}

/// Score `∂ℓ/∂Θ`, ordered `(θ, σ, ρ)`.
pub fn eta_ml(params: &SarParams, design: &SarDesign<'_>) -> Result<DVector<f64>> {
    design.check(params)?;
    let n = design.n() as f64;
    let k = params.theta.len();
    let e = design.residual(params);
    let s2 = params.sigma * params.sigma;
    let mut out = DVector::zeros(k + 2);
    out.rows_mut(0, k).copy_from(&(design.z().tr_mul(&e) / s2));
    out[k] = e.norm_squared() / (s2 * params.sigma) - n / params.sigma;
    out[k + 1] = design.wy.dot(&e) / s2 - design.weights().trace_resolvent(params.rho, 0.0);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MlFit {
    pub params: SarParams,
    pub log_likelihood: f64,
    /// ρ̂ landed within 1e-6 of an end of the admissible interval.
    pub boundary: bool,
}

/// Interior search interval for ρ.
fn search_interval(weights: &SpatialWeights) -> (f64, f64) {
    let (lo, hi) = weights.rho_bounds();
    let pad = 1e-7 * (hi - lo);
    (lo + pad, hi - pad)
}

/// Maximum likelihood via the concentrated likelihood in ρ.
pub fn ml_fit(design: &SarDesign<'_>) -> Result<MlFit> {
    let n = design.n() as f64;
    let theta0 = weighted_least_squares(design.z(), design.y(), None)?;
    let theta1 = weighted_least_squares(design.z(), &design.wy, None)?;
    let e0 = design.y() - design.z() * &theta0;
    let e1 = &design.wy - design.z() * &theta1;
    let (a, b, c) = (e0.norm_squared(), e0.dot(&e1), e1.norm_squared());
    let weights = design.weights();
    let profile = |rho: f64| -> f64 {
        let rss = (a - 2.0 * rho * b + rho * rho * c).max(f64::MIN_POSITIVE);
        -0.5 * n * (rss / n).ln() + weights.log_abs_det_spectral(rho, 0.0)
    };
    let (lo, hi) = search_interval(weights);
    let (rho, _) = grid_then_golden(|r| -profile(r), lo, hi, 201, 1e-12);
    let theta = &theta0 - theta1.scale(rho);
    let rss = a - 2.0 * rho * b + rho * rho * c;
    if !(rss > 0.0) {
        return Err(Error::DegenerateData("model fits the data exactly; σ̂ = 0".into()));
    }
    let params = SarParams { theta, sigma: (rss / n).sqrt(), rho };
    let (blo, bhi) = weights.rho_bounds();
    let boundary = (rho - blo).abs() < 1e-6 || (bhi - rho).abs() < 1e-6;
    let ll = log_likelihood(&params, design)?;
    Ok(MlFit { params, log_likelihood: ll, boundary })
}

/// Huber ψ: identity on `[−c, c]`, clipped outside.
pub fn huber_psi(u: f64, c: f64) -> f64 {
    u.clamp(-c, c)
}

/// `E[ψ_c(U)²]` for `U ~ N(0, 1)`:
/// `2c²[1 − Φ(c)] − 2cφ(c) − 1 + 2Φ(c)`.
pub fn rho_tilde(c: f64) -> f64 {
    let normal = Normal::standard();
    let cdf = normal.cdf(c);
    let tail = normal.sf(c);
    2.0 * c * c * tail - 2.0 * c * normal.pdf(c) - 1.0 + 2.0 * cdf
}

/// `(I − ρW)` factorisation with the ridge safeguard: when the pivots
/// indicate near-singularity the ridge `ε` is added to the diagonal.
struct Resolvent<'a> {
    lu: crate::linalg::HessenbergLu<'a>,
    weights: &'a SpatialWeights,
    ridge: f64,
}

impl<'a> Resolvent<'a> {
    fn new(weights: &'a SpatialWeights, rho: f64, ridge_eps: f64) -> Self {
        let form = weights.hessenberg();
        let lu = form.factor(rho, 0.0);
        if lu.pivot_ratio() < 1e-12 {
            return Self { lu: form.factor(rho, ridge_eps), weights, ridge: ridge_eps };
        }
        Self { lu, weights, ridge: 0.0 }
    }

    /// `G(ρ)·b = W (I − ρW)⁻¹ b`.
    fn g_times(&self, b: &DVector<f64>) -> DVector<f64> {
        self.weights.matrix() * self.lu.solve(b)
    }

    fn trace_g(&self, rho: f64) -> f64 {
        self.weights.trace_resolvent(rho, self.ridge)
    }
}

fn eta_rho_block(
    design: &SarDesign<'_>,
    theta: &DVector<f64>,
    sigma: f64,
    rho: f64,
    tuning: &MTuning,
    ridge_used: &mut bool,
) -> f64 {
    let res = Resolvent::new(design.weights(), rho, tuning.ridge_eps);
    if res.ridge > 0.0 {
        *ridge_used = true;
    }
    let zt = design.z() * theta;
    let eps = (design.filtered(rho) - &zt) / sigma;
    let psi = eps.map(|u| huber_psi(u, tuning.c3));
    let gzt = res.g_times(&zt);
    let gpsi = res.g_times(&psi);
    gzt.dot(&psi) / sigma + psi.dot(&gpsi) - res.trace_g(rho) * rho_tilde(tuning.c3)
}

/// Robust estimating equations, ordered `(θ-block, σ-block, ρ-block)`.
pub fn eta_robust(params: &SarParams, design: &SarDesign<'_>, tuning: &MTuning) -> Result<DVector<f64>> {
    design.check(params)?;
    tuning.validate()?;
    let n = design.n() as f64;
    let k = params.theta.len();
    let eps = design.residual(params) / params.sigma;
    let psi1 = eps.map(|u| huber_psi(u, tuning.c1));
    let psi2 = eps.map(|u| huber_psi(u, tuning.c2));
    let mut out = DVector::zeros(k + 2);
    out.rows_mut(0, k).copy_from(&design.z().tr_mul(&psi1));
    out[k] = psi2.norm_squared() - n * rho_tilde(tuning.c2);
    let mut ridge = false;
    out[k + 1] = eta_rho_block(design, &params.theta, params.sigma, params.rho, tuning, &mut ridge);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub params: SarParams,
    /// `‖Θ^{[h+1]} − Θ^{[h]}‖₂`.
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct MFit {
    pub params: SarParams,
    pub converged: bool,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    /// The ridge safeguard was activated at least once.
    pub ridge_used: bool,
}

/// Starting values for [`m_fit`].
#[derive(Debug, Clone, Default)]
pub enum MInit {
    /// Maximum likelihood estimates.
    #[default]
    MaximumLikelihood,
    /// Least-absolute-deviation regression of `Y` on `Z` with `ρ = 0` and
    /// σ from the MAD of its residuals.
    Lad,
    Given(SarParams),
}

/// Least-absolute-deviation start: θ by IRLS on `Y ~ Z`, ρ = 0.
pub fn lad_init(design: &SarDesign<'_>) -> Result<SarParams> {
    let n = design.n();
    let mut theta = weighted_least_squares(design.z(), design.y(), None)?;
    for _ in 0..100 {
        let r = design.y() - design.z() * &theta;
        let scale = r.amax().max(1e-300);
        let w = r.map(|v| 1.0 / v.abs().max(1e-8 * scale));
        let next = weighted_least_squares(design.z(), design.y(), Some(&w))?;
        let done = (&next - &theta).amax() <= 1e-10 * theta.amax().max(1.0);
        theta = next;
        if done {
            break;
        }
    }
    let r: Vec<f64> = (design.y() - design.z() * &theta).iter().copied().collect();
    let mut sigma = mad(&r, median(&r)) / MAD_NORMAL;
    if !(sigma > 0.0) {
        sigma = (r.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(f64::MIN_POSITIVE);
    }
    let rho = if design.weights().contains_rho(0.0) { 0.0 } else { design.weights().rho_bounds().0 * 0.5 };
    Ok(SarParams { theta, sigma, rho })
}

const RHO_TOL: f64 = 1e-8;

/// Minimise `η_ρ(ρ)²` over the admissible interval, starting next to the
/// current ρ: expand a bracket until the estimating function changes sign
/// or its magnitude bottoms out, then refine by golden-section search.
fn update_rho<F: FnMut(f64) -> f64>(mut eta: F, current: f64, step_hint: f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let width = hi - lo;
    let x0 = current.clamp(lo, hi);
    let f0 = eta(x0);
    if f0 == 0.0 {
        return x0;
    }
    let mut step = step_hint.clamp(1e-7 * width, 0.01 * width);
    let (mut left, mut fl) = (x0, f0);
    let (mut right, mut fr) = (x0, f0);
    for _ in 0..60 {
        let nl = (left - step).max(lo);
        let nr = (right + step).min(hi);
        let gl = if nl < left { eta(nl) } else { fl };
        let gr = if nr > right { eta(nr) } else { fr };
        if gl.signum() != f0.signum() {
            return bisect(&mut eta, nl, left, gl, tol);
        }
        if gr.signum() != f0.signum() {
            return bisect(&mut eta, right, nr, fr, tol);
        }
        // |η| bottoming out without a sign change: minimum of η² bracketed.
        if gl.abs() > fl.abs() && gr.abs() > fr.abs() && left == x0 && right == x0 {
            return golden_section(|r| eta(r).powi(2), nl, nr, RHO_TOL).0;
        }
        let stuck = nl == left && nr == right;
        left = nl;
        fl = gl;
        right = nr;
        fr = gr;
        if stuck {
            break;
        }
        step *= 2.0;
    }
    grid_then_golden(|r| eta(r).powi(2), lo, hi, 101, RHO_TOL).0
}

/// Root of `f` on `[a, b]` given a sign change, `fa = f(a)`.
fn bisect<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Iterative robust M-estimation of `(θ, σ, ρ)`.
pub fn m_fit(design: &SarDesign<'_>, tuning: &MTuning, init: MInit) -> Result<MFit> {
    tuning.validate()?;
    let mut params = match init {
        MInit::MaximumLikelihood => ml_fit(design)?.params,
        MInit::Lad => lad_init(design)?,
        MInit::Given(p) => p,
    };
    design.check(&params)?;
    let n = design.n() as f64;
    let rt2 = rho_tilde(tuning.c2);
    let (lo, hi) = search_interval(design.weights());
    let mut log = Vec::new();
    let mut ridge_used = false;
    let mut converged = false;
    let mut iterations = 0;
    let mut rho_step = f64::INFINITY;
    for h in 1..=tuning.max_iter {
        iterations = h;
        let filtered = design.filtered(params.rho);
        let eps = (&filtered - design.z() * &params.theta) / params.sigma;

        // θ: weighted least squares with Huber weights ψ(ε*)/ε*.
        let w = eps.map(|u| if u == 0.0 { 1.0 } else { huber_psi(u, tuning.c1) / u });
        let theta = weighted_least_squares(design.z(), &filtered, Some(&w))?;

        // σ: fixed-point step of the scale equation.
        let s: f64 = eps.iter().map(|u| huber_psi(*u, tuning.c2).powi(2)).sum();
        let sigma = params.sigma * (s / (n * rt2)).sqrt();
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::DegenerateData("robust scale collapsed to zero".into()));
        }

        // ρ: one-dimensional root search of the ρ-block.
        let rho = update_rho(
            |r| eta_rho_block(design, &theta, sigma, r, tuning, &mut ridge_used),
            params.rho,
            2.0 * rho_step,
            lo,
            hi,
            (0.01 * tuning.eps_conv).min(RHO_TOL),
        );
        rho_step = (rho - params.rho).abs();

        let next = SarParams { theta, sigma, rho };
        let step = (next.as_vector() - params.as_vector()).norm();
        log.push(IterationRecord { iteration: h, params: next.clone(), step });
        params = next;
        if step < tuning.eps_conv {
            converged = true;
            break;
        }
    }
    Ok(MFit { params, converged, iterations, log, ridge_used })
}
