//! Robust spatial autoregressive scalar-on-function regression.
//!
//! A scalar response observed at spatial units is regressed on a functional
//! predictor plus its own spatial lag,
//! `Y = ρWY + β₀ + ∫𝒳(t)β(t)dt + ε`.
//! Curves are expanded in a basis ([`functional`]), reduced to `K` component
//! scores by (robust) FPC or FPLS ([`fpc`], [`fpls`]) and the resulting
//! finite-dimensional SAR model is fitted by maximum likelihood or by the
//! Huber-type M-estimator ([`sar`]). [`pipeline`] ties the steps together.

pub mod diagnostics;
pub mod error;
pub mod fpc;
pub mod fpls;
pub mod functional;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod robust_scale;
pub mod sar;
pub mod simulation;
pub mod spatial;

pub use diagnostics::{fit_metrics, global_moran, local_morans_i, MetricsReport, MoranReport, Quadrant};
pub use error::{Error, Result};
pub use fpc::{fpc, rfpc, scores_for, Decomposition, DecompositionMethod};
pub use fpls::{fpls, pls_regression_coefficients, rfpls, HampelConfig, PlsState};
pub use functional::{
    build_basis, inner_product, project_curves, trapezoid_weights, BasisKind, BasisSystem, CoefficientMatrix,
    FunctionalDataset,
};
pub use pipeline::{
    fit, fit_coefficients, predict, select_k, BasisSpec, Estimator, FitConfig, FitDiagnostics, FitTuning,
    FittedModel, InitStrategy, KSpec, NumBasis, SelectionRule,
};
pub use robust_scale::{m_scale, tukey_loss, tukey_loss_norm, LocationEstimator, MScale, MScaleConfig};
pub use sar::{
    eta_ml, eta_robust, huber_psi, log_likelihood, m_fit, ml_fit, rho_tilde, MFit, MInit, MTuning, MlFit,
    SarDesign, SarParams,
};
pub use simulation::{simulate, simulate_with_weights, Contamination, ContaminationKind, SimOutput, SimSpec, SimWeights, Truth};
pub use spatial::{
    grid_contiguity, haversine_distance, inverse_distance_weights, rho_bounds, Contiguity, SpatialWeights,
    WeightScheme,
};

pub use nalgebra::{DMatrix, DVector};
