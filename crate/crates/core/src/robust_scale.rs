//! M-estimation of scale with the Beaton–Tukey (bisquare) loss.
//!
//! The loss is used in its normalised form (supremum one) so that the
//! estimating equation `mean ρ((x − μ)/σ) = δ` has a solution for
//! `δ = 0.5`, giving the usual 50% breakdown point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mad, median};

/// `Φ⁻¹(3/4)`, the MAD consistency factor at the normal.
pub(crate) const MAD_NORMAL: f64 = 0.674_489_750_196_081_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocationEstimator {
    #[default]
    Median,
    /// Huber M-estimate of location (k = 1.345) with MAD scale.
    MLocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MScaleConfig {
    pub c: f64,
    pub delta: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub location: LocationEstimator,
}

impl Default for MScaleConfig {
    fn default() -> Self {
        Self { c: 1.56, delta: 0.5, max_iter: 200, tol: 1e-10, location: LocationEstimator::Median }
    }
}

impl MScaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!("M-scale constant c must be positive, got {}", self.c)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("M-scale delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::invalid("M-scale needs max_iter > 0 and tol > 0"));
        }
        Ok(())
    }
}

/// Beaton–Tukey loss: `u²/2 (1 − u²/c² + u⁴/(3c⁴))` inside `[−c, c]`,
/// `c²/6` outside.
pub fn tukey_loss(u: f64, c: f64) -> f64 {
    if u.abs() <= c {
        let r = (u / c) * (u / c);
        0.5 * u * u * (1.0 - r + r * r / 3.0)
    } else {
        c * c / 6.0
    }
}

/// [`tukey_loss`] rescaled to have supremum one.
pub fn tukey_loss_norm(u: f64, c: f64) -> f64 {
    if u.abs() >= c {
        return 1.0;
    }
    let v = 1.0 - (u / c) * (u / c);
    1.0 - v * v * v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MScale {
    pub scale: f64,
    pub location: f64,
    /// Set when more than `(1 − δ)n` observations coincide with the
    /// location, in which case `scale` is zero.
    pub degenerate: bool,
    pub iterations: usize,
}

pub fn m_scale(x: &[f64], config: &MScaleConfig) -> Result<MScale> {
    m_scale_impl(x, config, None)
}

/// Like [`m_scale`] but also returns every iterate `σ_k` of the fixed-point
/// sequence, starting with the normalised-MAD initial value.
pub fn m_scale_trace(x: &[f64], config: &MScaleConfig) -> Result<(MScale, Vec<f64>)> {
    let mut trace = Vec::new();
    let res = m_scale_impl(x, config, Some(&mut trace))?;
    Ok((res, trace))
}

fn m_scale_impl(x: &[f64], config: &MScaleConfig, mut trace: Option<&mut Vec<f64>>) -> Result<MScale> {
    config.validate()?;
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("M-scale needs at least two observations"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("M-scale input contains non-finite values"));
    }
    let mu = location(x, config.location);
    let ties = x.iter().filter(|&&v| v == mu).count();
    if ties as f64 > (1.0 - config.delta) * n as f64 {
        return Ok(MScale { scale: 0.0, location: mu, degenerate: true, iterations: 0 });
    }

    let mut sigma = mad(x, mu) / MAD_NORMAL;
    if sigma <= 0.0 {
        sigma = x.iter().map(|v| (v - mu).abs()).sum::<f64>() / n as f64;
    }
    if let Some(t) = trace.as_deref_mut() {
        t.push(sigma);
    }
    let target = config.delta * n as f64;
    for it in 1..=config.max_iter {
        let s: f64 = x.iter().map(|v| tukey_loss_norm((v - mu) / sigma, config.c)).sum();
        let next = sigma * (s / target).sqrt();
        if let Some(t) = trace.as_deref_mut() {
            t.push(next);
        }
        let rel = (next / sigma - 1.0).abs();
        sigma = next;
        if rel < config.tol {
            return Ok(MScale { scale: sigma, location: mu, degenerate: false, iterations: it });
        }
    }
    Err(Error::NonConvergence { what: "M-scale fixed-point iteration", iterations: config.max_iter })
}

fn location(x: &[f64], kind: LocationEstimator) -> f64 {
    let med = median(x);
    match kind {
        LocationEstimator::Median => med,
        LocationEstimator::MLocation => huber_location(x, med),
    }
}

fn huber_location(x: &[f64], start: f64) -> f64 {
    const K: f64 = 1.345;
    let s = mad(x, start) / MAD_NORMAL;
    if s <= 0.0 {
        return start;
    }
    let mut mu = start;
    for _ in 0..100 {
        let (mut num, mut den) = (0.0, 0.0);
        for &v in x {
            let u = (v - mu) / s;
            let w = if u.abs() <= K { 1.0 } else { K / u.abs() };
            num += w * v;
            den += w;
        }
        let next = num / den;
        if (next - mu).abs() <= 1e-12 * s {
            return next;
        }
        mu = next;
    }
    mu
}
