//! End-to-end fitting: basis expansion, decomposition, choice of `K`,
//! SAR estimation on the component scores, `β̂(t)` and prediction through the
//! reduced form `Ŷ = (I − ρ̂W)⁻¹(β̂₀1 + Aβ̂)`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::fit_metrics;
use crate::error::{Error, Result};
use crate::fpc::{fpc, rfpc, scores_for, Decomposition, DecompositionMethod};
use crate::fpls::{fpls, rfpls, HampelConfig};
use crate::functional::{build_basis, project_curves, BasisKind, BasisSystem, CoefficientMatrix, FunctionalDataset};
use crate::robust_scale::MScaleConfig;
use crate::sar::{m_fit, ml_fit, MInit, MTuning, SarDesign, SarParams};
use crate::spatial::SpatialWeights;

pub const MODEL_FORMAT: &str = "ssofr-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumBasis {
    Fixed(usize),
    /// `min(20, p/4)`, raised to the smallest size the basis allows.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub num_basis: NumBasis,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self { kind: BasisKind::default(), num_basis: NumBasis::Auto }
    }
}

impl BasisSpec {
    pub fn resolve(&self, p: usize) -> usize {
        match self.num_basis {
            NumBasis::Fixed(m) => m,
            NumBasis::Auto => {
                let floor = match self.kind {
                    BasisKind::Bspline { degree } => degree + 1,
                    BasisKind::Fourier => 1,
                };
                (p / 4).min(20).max(floor).min(p)
            }
        }
    }

    pub fn build(&self, grid: &[f64]) -> Result<BasisSystem> {
        build_basis(self.kind, self.resolve(grid.len()), grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    ExplainedVariance(f64),
    Bic,
    Cv(usize),
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::ExplainedVariance(t) if !(t > 0.0 && t < 1.0) => {
                Err(Error::invalid(format!("explained-variance threshold must lie in (0, 1), got {t}")))
            }
            SelectionRule::Cv(f) if f < 2 => Err(Error::invalid(format!("cross-validation needs ≥ 2 folds, got {f}"))),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for SelectionRule {
    type Err = Error;

    /// `ev:τ`, `bic` or `cv:k`.
    fn from_str(s: &str) -> Result<Self> {
        let rule = match s.split_once(':') {
            None if s.eq_ignore_ascii_case("bic") => SelectionRule::Bic,
            None if s.eq_ignore_ascii_case("ev") => SelectionRule::ExplainedVariance(0.95),
            Some(("ev", t)) => SelectionRule::ExplainedVariance(
                t.parse().map_err(|_| Error::invalid(format!("bad threshold in '{s}'")))?,
            ),
            Some(("cv", k)) => {
                SelectionRule::Cv(k.parse().map_err(|_| Error::invalid(format!("bad fold count in '{s}'")))?)
            }
            _ => return Err(Error::invalid(format!("unknown selection rule '{s}' (expected ev:τ, bic or cv:k)"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSpec {
    Fixed(usize),
    Select(SelectionRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ml,
    M,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Estimator::Ml),
            "m" => Ok(Estimator::M),
            other => Err(Error::invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    MaximumLikelihood,
    Lad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitTuning {
    pub mscale: MScaleConfig,
    pub hampel: HampelConfig,
    pub m: MTuning,
    pub init: InitStrategy,
    /// Seed of the cross-validation fold permutation.
    pub cv_seed: u64,
}

impl Default for FitTuning {
    fn default() -> Self {
        Self {
            mscale: MScaleConfig::default(),
            hampel: HampelConfig::default(),
            m: MTuning::default(),
            init: InitStrategy::MaximumLikelihood,
            cv_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub basis: BasisSpec,
    pub method: DecompositionMethod,
    pub k: KSpec,
    pub estimator: Estimator,
    pub tuning: FitTuning,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            basis: BasisSpec::default(),
            method: DecompositionMethod::Rfpls,
            k: KSpec::Select(SelectionRule::Bic),
            estimator: Estimator::M,
            tuning: FitTuning::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Iterations of the SAR estimator (0 for maximum likelihood).
    pub iterations: usize,
    pub converged: bool,
    pub ridge_used: bool,
    /// ML solution on the edge of the admissible ρ interval.
    pub boundary: bool,
    pub decomposition_iterations: usize,
    pub decomposition_converged: bool,
    pub fitted: Vec<f64>,
    pub mse: f64,
    pub r2: f64,
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub basis: BasisSystem,
    pub decomposition: Decomposition,
    pub params: SarParams,
    /// Basis coefficients of `β̂(t) = Σ β̂_k φ̂_k(t)`.
    pub beta_coeffs: DVector<f64>,
    /// `β̂(t)` on the grid.
    pub beta_curve: DVector<f64>,
    pub method: DecompositionMethod,
    pub estimator: Estimator,
    pub k: usize,
    pub tuning: FitTuning,
    pub diagnostics: FitDiagnostics,
}

impl FittedModel {
    pub fn grid(&self) -> &[f64] {
        self.basis.grid()
    }
}

/// Run a decomposition method with `k` components.
pub fn decompose(
    method: DecompositionMethod,
    coeffs: &CoefficientMatrix,
    basis: &BasisSystem,
    y: &DVector<f64>,
    k: usize,
    tuning: &FitTuning,
) -> Result<Decomposition> {
    match method {
        DecompositionMethod::Fpc => fpc(coeffs, basis, k),
        DecompositionMethod::Rfpc => rfpc(coeffs, basis, k, &tuning.mscale),
        DecompositionMethod::Fpls => fpls(coeffs, basis, y, k),
        DecompositionMethod::Rfpls => rfpls(coeffs, basis, y, k, &tuning.hampel),
    }
}

/// Fit on already projected coefficients with a fixed `K`.
pub fn fit_coefficients(
    coeffs: &CoefficientMatrix,
    basis: &BasisSystem,
    y: &DVector<f64>,
    weights: &SpatialWeights,
    method: DecompositionMethod,
    k: usize,
    estimator: Estimator,
    tuning: &FitTuning,
) -> Result<FittedModel> {
    if y.len() != coeffs.n() || weights.n() != coeffs.n() {
        return Err(Error::shape(format!(
            "{} curves, {} responses and {} spatial units",
            coeffs.n(),
            y.len(),
            weights.n()
        )));
    }
    let dec = decompose(method, coeffs, basis, y, k, tuning)?;
    let design = SarDesign::from_scores(y.clone(), &dec.scores, weights)?;
    let (params, iterations, converged, ridge_used, boundary) = match estimator {
        Estimator::Ml => {
            let f = ml_fit(&design)?;
            (f.params, 0, true, false, f.boundary)
        }
        Estimator::M => {
            let init = match tuning.init {
                InitStrategy::MaximumLikelihood => MInit::MaximumLikelihood,
                InitStrategy::Lad => MInit::Lad,
            };
            let f = m_fit(&design, &tuning.m, init)?;
            (f.params, f.iterations, f.converged, f.ridge_used, false)
        }
    };
    let kk = dec.num_components();
    let beta = params.theta.rows(1, kk).into_owned();
    let beta_coeffs = &dec.phi * &beta;
    let beta_curve = basis.eval() * &beta_coeffs;
    let scores = scores_for(&dec, coeffs, basis)?;
    let fitted = reduced_form(&params, &scores, weights)?;
    let m0 = fit_metrics(y, &fitted, 0.0)?;
    let (decomposition_iterations, decomposition_converged) =
        dec.pls.as_ref().map_or((0, true), |s| (s.iterations, s.converged));
    let diagnostics = FitDiagnostics {
        iterations,
        converged,
        ridge_used,
        boundary,
        decomposition_iterations,
        decomposition_converged,
        fitted: fitted.iter().copied().collect(),
        mse: m0.mse,
        r2: m0.r2,
    };
    Ok(FittedModel {
        basis: basis.clone(),
        decomposition: dec,
        params,
        beta_coeffs,
        beta_curve,
        method,
        estimator,
        k: kk,
        tuning: *tuning,
        diagnostics,
    })
}

/// `(I − ρW)⁻¹(β₀1 + Aβ)`.
pub fn reduced_form(params: &SarParams, scores: &DMatrix<f64>, weights: &SpatialWeights) -> Result<DVector<f64>> {
    let n = scores.nrows();
    let k = scores.ncols();
    if params.theta.len() != k + 1 {
        return Err(Error::ModelMismatch(format!("{} coefficients for {k} components", params.theta.len())));
    }
    if weights.n() != n {
        return Err(Error::shape(format!("{n} units but the weights have {}", weights.n())));
    }
    if !weights.contains_rho(params.rho) {
        let (lo, hi) = weights.rho_bounds();
        return Err(Error::RhoOutOfBounds { rho: params.rho, lower: lo, upper: hi });
    }
    let mean = (scores * params.theta.rows(1, k)).add_scalar(params.theta[0]);
    if params.rho == 0.0 {
        return Ok(mean);
    }
    let mut a = DMatrix::identity(n, n);
    a -= weights.matrix().scale(params.rho);
    a.lu().solve(&mean).ok_or_else(|| Error::SingularMatrix("I − ρ̂W is singular".into()))
}

/// Largest admissible number of components.
pub fn k_max(n: usize, num_basis: usize) -> usize {
    (n.saturating_sub(1)).min(num_basis).min(20)
}

/// Full fit from raw curves.
pub fn fit(dataset: &FunctionalDataset, weights: &SpatialWeights, config: &FitConfig) -> Result<FittedModel> {
    let y = dataset.require_response()?.clone();
    if weights.n() != dataset.n() {
        return Err(Error::shape(format!("{} curves but {} spatial units", dataset.n(), weights.n())));
    }
    let basis = config.basis.build(dataset.grid())?;
    let coeffs = project_curves(dataset, &basis)?;
    let k = match config.k {
        KSpec::Fixed(k) => k,
        KSpec::Select(rule) => select_k_coefficients(&coeffs, &basis, &y, weights, config, rule)?,
    };
    fit_coefficients(&coeffs, &basis, &y, weights, config.method, k, config.estimator, &config.tuning)
}

/// Choose `K` by the given rule (ties go to the smaller `K`).
pub fn select_k(
    dataset: &FunctionalDataset,
    weights: &SpatialWeights,
    config: &FitConfig,
    rule: SelectionRule,
) -> Result<usize> {
    let y = dataset.require_response()?.clone();
    let basis = config.basis.build(dataset.grid())?;
    let coeffs = project_curves(dataset, &basis)?;
    select_k_coefficients(&coeffs, &basis, &y, weights, config, rule)
}

fn argmin_first(values: &[(usize, f64)]) -> usize {
    let mut best = values[0];
    for &(k, v) in &values[1..] {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

fn select_k_coefficients(
    coeffs: &CoefficientMatrix,
    basis: &BasisSystem,
    y: &DVector<f64>,
    weights: &SpatialWeights,
    config: &FitConfig,
    rule: SelectionRule,
) -> Result<usize> {
    rule.validate()?;
    let n = coeffs.n();
    let kmax = k_max(n, basis.num_basis());
    if kmax == 0 {
        return Err(Error::invalid("too few observations to fit any component"));
    }
    match rule {
        SelectionRule::ExplainedVariance(tau) => {
            let dec = decompose(config.method, coeffs, basis, y, kmax, &config.tuning)?;
            let total: f64 = dec.lambdas.iter().sum();
            let mut acc = 0.0;
            for (i, l) in dec.lambdas.iter().enumerate() {
                acc += l;
                if acc >= tau * total {
                    return Ok(i + 1);
                }
            }
            Ok(dec.lambdas.len())
        }
        SelectionRule::Bic => {
            let nf = n as f64;
            let mut scores = Vec::new();
            for k in 1..=kmax {
                let model = match fit_coefficients(
                    coeffs,
                    basis,
                    y,
                    weights,
                    config.method,
                    k,
                    config.estimator,
                    &config.tuning,
                ) {
                    Ok(m) => m,
                    Err(e) if k > 1 && e.is_numerical() => break,
                    Err(e) => return Err(e),
                };
                if model.k < k {
                    break;
                }
                let design = SarDesign::from_scores(y.clone(), &model.decomposition.scores, weights)?;
                let rss = design.residual(&model.params).norm_squared();
                scores.push((k, nf * (rss / nf).ln() + (k as f64 + 2.0) * nf.ln()));
            }
            Ok(argmin_first(&scores))
        }
        SelectionRule::Cv(folds) => {
            if folds > n {
                return Err(Error::invalid(format!("{folds} folds for {n} observations")));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(config.tuning.cv_seed));
            let fold_of: Vec<usize> = {
                let mut f = vec![0; n];
                for (pos, &i) in perm.iter().enumerate() {
                    f[i] = pos % folds;
                }
                f
            };
            let train_kmax = k_max(n - n.div_ceil(folds), basis.num_basis());
            let mut scores = Vec::new();
            'k: for k in 1..=train_kmax.max(1) {
                let mut total = 0.0;
                for fold in 0..folds {
                    let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
                    let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
                    let w_train = weights.restrict(&train)?;
                    let c_train = coeffs.select_rows(&train);
                    let y_train = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
                    let model = match fit_coefficients(
                        &c_train,
                        basis,
                        &y_train,
                        &w_train,
                        config.method,
                        k,
                        config.estimator,
                        &config.tuning,
                    ) {
                        Ok(m) => m,
                        Err(e) if k > 1 && e.is_numerical() => break 'k,
                        Err(e) => return Err(e),
                    };
                    let s = scores_for(&model.decomposition, coeffs, basis)?;
                    let yhat = reduced_form(&model.params, &s, weights)?;
                    total += test.iter().map(|&i| (y[i] - yhat[i]).powi(2)).sum::<f64>();
                }
                scores.push((k, total / n as f64));
            }
            Ok(argmin_first(&scores))
        }
    }
}

/// Fitted or predicted responses for `dataset`'s curves on `weights`.
pub fn predict(model: &FittedModel, dataset: &FunctionalDataset, weights: &SpatialWeights) -> Result<DVector<f64>> {
    if dataset.grid() != model.grid() {
        return Err(Error::ModelMismatch("curves are not on the model's grid".into()));
    }
    if weights.n() != dataset.n() {
        return Err(Error::shape(format!("{} curves but {} spatial units", dataset.n(), weights.n())));
    }
    let coeffs = project_curves(dataset, &model.basis)?;
    let scores = scores_for(&model.decomposition, &coeffs, &model.basis)?;
    reduced_form(&model.params, &scores, weights).map_err(|e| match e {
        Error::RhoOutOfBounds { rho, lower, upper } => Error::ModelMismatch(format!(
            "fitted ρ̂ = {rho} lies outside ({lower}, {upper}), the admissible interval of the supplied weights"
        )),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixDoc {
    fn from(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.transpose().as_slice().to_vec() }
    }
}

impl MatrixDoc {
    fn into_matrix(self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::invalid("matrix entry count does not match its shape"));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamsDoc {
    theta: Vec<f64>,
    sigma: f64,
    rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DecompositionDoc {
    phi: MatrixDoc,
    center: Vec<f64>,
    lambdas: Vec<f64>,
    scores: MatrixDoc,
    truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    basis: BasisKind,
    num_basis: usize,
    grid: Vec<f64>,
    method: DecompositionMethod,
    estimator: Estimator,
    k: usize,
    decomposition: DecompositionDoc,
    params: ParamsDoc,
    beta_coeffs: Vec<f64>,
    beta_curve: Vec<f64>,
    tuning: FitTuning,
    diagnostics: FitDiagnostics,
}

impl FittedModel {
    /// Versioned JSON document; floats round-trip exactly.
    pub fn to_json(&self) -> Result<String> {
        let d = &self.decomposition;
        let doc = ModelDoc {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            basis: self.basis.kind(),
            num_basis: self.basis.num_basis(),
            grid: self.basis.grid().to_vec(),
            method: self.method,
            estimator: self.estimator,
            k: self.k,
            decomposition: DecompositionDoc {
                phi: (&d.phi).into(),
                center: d.center.iter().copied().collect(),
                lambdas: d.lambdas.clone(),
                scores: (&d.scores).into(),
                truncated: d.truncated,
            },
            params: ParamsDoc {
                theta: self.params.theta.iter().copied().collect(),
                sigma: self.params.sigma,
                rho: self.params.rho,
            },
            beta_coeffs: self.beta_coeffs.iter().copied().collect(),
            beta_curve: self.beta_curve.iter().copied().collect(),
            tuning: self.tuning,
            diagnostics: self.diagnostics.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed model document: {e}")))?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model document {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                doc.format, doc.version
            )));
        }
        let basis = build_basis(doc.basis, doc.num_basis, &doc.grid)?;
        let phi = doc.decomposition.phi.into_matrix()?;
        let scores = doc.decomposition.scores.into_matrix()?;
        if phi.nrows() != doc.num_basis || phi.ncols() != doc.k || doc.params.theta.len() != doc.k + 1 {
            return Err(Error::invalid("model document dimensions are inconsistent"));
        }
        let decomposition = Decomposition {
            method: doc.method,
            phi,
            lambdas: doc.decomposition.lambdas,
            scores,
            center: DVector::from_vec(doc.decomposition.center),
            truncated: doc.decomposition.truncated,
            pls: None,
        };
        Ok(Self {
            basis,
            decomposition,
            params: SarParams {
                theta: DVector::from_vec(doc.params.theta),
                sigma: doc.params.sigma,
                rho: doc.params.rho,
            },
            beta_coeffs: DVector::from_vec(doc.beta_coeffs),
            beta_curve: DVector::from_vec(doc.beta_curve),
            method: doc.method,
            estimator: doc.estimator,
            k: doc.k,
            tuning: doc.tuning,
            diagnostics: doc.diagnostics,
        })
    }
}
