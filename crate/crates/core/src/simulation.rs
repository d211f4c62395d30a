//! Synthetic data from the reduced form
//! `Y = (I − ρW)⁻¹(β₀1 + ∫𝒳β + ε)` with optional contamination.
//!
//! Randomness comes from ChaCha8 seeded by `seed`, with one stream per
//! component (curves, noise, contamination, coordinates), so switching
//! contamination on does not change the clean draw.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{build_basis, trapezoid_weights, BasisKind, FunctionalDataset};
use crate::spatial::{grid_contiguity, inverse_distance_weights, Contiguity, SpatialWeights};

const STREAM_CURVES: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_CONTAMINATION: u64 = 3;
const STREAM_COORDS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContaminationKind {
    /// Add `magnitude·σ` to the selected responses after generation.
    Vertical { magnitude: f64 },
    /// Multiply the selected curves by `amplitude` before generation.
    Leverage { amplitude: f64 },
    Both { magnitude: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub fraction: f64,
    pub kind: ContaminationKind,
}

impl Contamination {
    pub fn vertical(fraction: f64) -> Self {
        Self { fraction, kind: ContaminationKind::Vertical { magnitude: 20.0 } }
    }

    pub fn leverage(fraction: f64) -> Self {
        Self { fraction, kind: ContaminationKind::Leverage { amplitude: 10.0 } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimWeights {
    /// Uniform random locations in a latitude/longitude box, inverse
    /// great-circle-distance weights.
    RandomCoordinates { lat: (f64, f64), lon: (f64, f64) },
    Lattice { rows: usize, cols: usize, contiguity: Contiguity },
}

impl Default for SimWeights {
    fn default() -> Self {
        SimWeights::RandomCoordinates { lat: (30.0, 45.0), lon: (-110.0, -80.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub interval: (f64, f64),
    pub beta0: f64,
    pub sigma: f64,
    pub rho: f64,
    /// Basis of the true β(t) and of the curve generator.
    pub basis: BasisKind,
    pub num_basis: usize,
    /// Coefficients of β(t) in `basis`.
    pub beta_coeffs: Vec<f64>,
    pub weights: SimWeights,
    pub contamination: Option<Contamination>,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n: 200,
            p: 101,
            interval: (0.0, 1.0),
            beta0: 1.0,
            sigma: 1.0,
            rho: 0.5,
            basis: BasisKind::Fourier,
            num_basis: 5,
            beta_coeffs: vec![0.5, 2.0, -1.5, 1.0, 0.5],
            weights: SimWeights::default(),
            contamination: None,
            seed: 1,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::invalid("simulation needs at least 3 units"));
        }
        if self.p < 2 || !(self.interval.0 < self.interval.1) {
            return Err(Error::invalid("simulation grid needs p ≥ 2 points on a non-empty interval"));
        }
        if !(self.sigma >= 0.0) || !self.beta0.is_finite() || !self.rho.is_finite() {
            return Err(Error::invalid("σ must be nonnegative and β₀, ρ finite"));
        }
        if self.beta_coeffs.len() != self.num_basis {
            return Err(Error::invalid(format!(
                "β(t) has {} coefficients for a basis of {}",
                self.beta_coeffs.len(),
                self.num_basis
            )));
        }
        if let Some(c) = &self.contamination {
            if !(0.0..=0.45).contains(&c.fraction) {
                return Err(Error::invalid(format!("contamination fraction must lie in [0, 0.45], got {}", c.fraction)));
            }
        }
        if let SimWeights::Lattice { rows, cols, .. } = self.weights {
            if rows * cols != self.n {
                return Err(Error::invalid(format!("{rows}×{cols} lattice does not have {} cells", self.n)));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let (a, b) = self.interval;
        let step = (b - a) / (self.p - 1) as f64;
        (0..self.p).map(|j| if j + 1 == self.p { b } else { a + step * j as f64 }).collect()
    }
}

/// Ground truth of one simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta0: f64,
    pub sigma: f64,
    pub rho: f64,
    pub beta_coeffs: Vec<f64>,
    /// β(t) on the grid.
    pub beta_curve: Vec<f64>,
    /// `∫𝒳_i β` per unit (after leverage contamination).
    pub functional_term: Vec<f64>,
    pub noise: Vec<f64>,
    /// Responses before vertical contamination.
    pub clean_response: Vec<f64>,
    /// Contaminated unit indices, ascending.
    pub contaminated: Vec<usize>,
    pub contamination: Option<Contamination>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: FunctionalDataset,
    pub weights: SpatialWeights,
    /// Latitude/longitude of each unit when random coordinates were drawn.
    pub coords: Option<Vec<(f64, f64)>>,
    pub truth: Truth,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Draw a sample, its weight matrix and its ground truth.
pub fn simulate(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let (weights, coords) = match spec.weights {
        SimWeights::RandomCoordinates { lat, lon } => {
            let mut r = rng(spec.seed, STREAM_COORDS);
            let pts: Vec<(f64, f64)> = (0..spec.n)
                .map(|_| (r.random_range(lat.0..lat.1), r.random_range(lon.0..lon.1)))
                .collect();
            (inverse_distance_weights(&pts)?, Some(pts))
        }
        SimWeights::Lattice { rows, cols, contiguity } => (grid_contiguity(rows, cols, contiguity)?, None),
    };
    let (dataset, truth) = simulate_with_weights(spec, &weights)?;
    Ok(SimOutput { dataset, weights, coords, truth })
}

/// Draw a sample on a given weight matrix, e.g. a new period for the same
/// units.
pub fn simulate_with_weights(spec: &SimSpec, weights: &SpatialWeights) -> Result<(FunctionalDataset, Truth)> {
    spec.validate()?;
    let n = spec.n;
    if weights.n() != n {
        return Err(Error::shape(format!("spec has {n} units but the weights have {}", weights.n())));
    }
    weights.check_rho(spec.rho)?;
    let grid = spec.grid();
    let basis = build_basis(spec.basis, spec.num_basis, &grid)?;
    let m = spec.num_basis;

    let mut r = rng(spec.seed, STREAM_CURVES);
    let coefs = DMatrix::from_fn(n, m, |_, _| 0.0);
    let mut coefs = coefs;
    for i in 0..n {
        for k in 0..m {
            let z: f64 = r.sample(StandardNormal);
            coefs[(i, k)] = z / (k + 1) as f64;
        }
    }
    let mut curves = &coefs * basis.eval().transpose();

    let mut contaminated = Vec::new();
    let (mut magnitude, mut amplitude) = (None, None);
    if let Some(c) = &spec.contamination {
        let count = (c.fraction * n as f64).round() as usize;
        let mut r = rng(spec.seed, STREAM_CONTAMINATION);
        contaminated = sample(&mut r, n, count).into_vec();
        contaminated.sort_unstable();
        match c.kind {
            ContaminationKind::Vertical { magnitude: v } => magnitude = Some(v),
            ContaminationKind::Leverage { amplitude: a } => amplitude = Some(a),
            ContaminationKind::Both { magnitude: v, amplitude: a } => {
                magnitude = Some(v);
                amplitude = Some(a);
            }
        }
    }
    if let Some(a) = amplitude {
        for &i in &contaminated {
            curves.row_mut(i).scale_mut(a);
        }
    }

    let beta = DVector::from_column_slice(&spec.beta_coeffs);
    let beta_curve = basis.eval() * &beta;
    let q = trapezoid_weights(&grid);
    let qb = DVector::from_fn(grid.len(), |j, _| q[j] * beta_curve[j]);
    let functional_term = &curves * qb;

    let mut r = rng(spec.seed, STREAM_NOISE);
    let noise = DVector::from_fn(n, |_, _| {
        let z: f64 = r.sample(StandardNormal);
        spec.sigma * z
    });

    let rhs = functional_term.add_scalar(spec.beta0) + &noise;
    let mut a = DMatrix::identity(n, n);
    a -= weights.matrix().scale(spec.rho);
    let clean = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularMatrix("I − ρW is singular".into()))?;
    let mut y = clean.clone();
    if let Some(v) = magnitude {
        for &i in &contaminated {
            y[i] += v * spec.sigma;
        }
    }

    let dataset = FunctionalDataset::new(grid, curves, y)?;
    let truth = Truth {
        beta0: spec.beta0,
        sigma: spec.sigma,
        rho: spec.rho,
        beta_coeffs: spec.beta_coeffs.clone(),
        beta_curve: beta_curve.iter().copied().collect(),
        functional_term: functional_term.iter().copied().collect(),
        noise: noise.iter().copied().collect(),
        clean_response: clean.iter().copied().collect(),
        contaminated,
        contamination: spec.contamination,
        seed: spec.seed,
    };
    Ok((dataset, truth))
}
