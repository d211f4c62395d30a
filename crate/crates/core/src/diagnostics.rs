//! Local Moran's I with cluster quadrants, and (trimmed) fit metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::SpatialWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    #[serde(rename = "High-High")]
    HighHigh,
    #[serde(rename = "Low-Low")]
    LowLow,
    #[serde(rename = "High-Low")]
    HighLow,
    #[serde(rename = "Low-High")]
    LowHigh,
}

impl Quadrant {
    /// Zero deviations count as High.
    pub fn classify(deviation: f64, lag: f64) -> Self {
        match (deviation >= 0.0, lag >= 0.0) {
            (true, true) => Quadrant::HighHigh,
            (false, false) => Quadrant::LowLow,
            (true, false) => Quadrant::HighLow,
            (false, true) => Quadrant::LowHigh,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::HighHigh => "High-High",
            Quadrant::LowLow => "Low-Low",
            Quadrant::HighLow => "High-Low",
            Quadrant::LowHigh => "Low-High",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranReport {
    pub local_i: Vec<f64>,
    /// `(Y_i − Ȳ) / sd(Y)` with the population standard deviation.
    pub standardized: Vec<f64>,
    /// Spatial lag of the standardized deviations, `Σ_j w_ij z_j`.
    pub spatial_lag: Vec<f64>,
    pub quadrants: Vec<Quadrant>,
    /// `Σ I_i / n`.
    pub global: f64,
}

impl MoranReport {
    pub fn count(&self, q: Quadrant) -> usize {
        self.quadrants.iter().filter(|x| **x == q).count()
    }

    /// Plot-ready CSV: `id,deviation,spatial_lag,local_i,quadrant`.
    pub fn to_csv(&self, ids: &[String]) -> Result<String> {
        if ids.len() != self.local_i.len() {
            return Err(Error::shape(format!("{} ids for {} units", ids.len(), self.local_i.len())));
        }
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        wtr.write_record(["id", "deviation", "spatial_lag", "local_i", "quadrant"]).map_err(io)?;
        for i in 0..ids.len() {
            wtr.write_record([
                ids[i].clone(),
                self.standardized[i].to_string(),
                self.spatial_lag[i].to_string(),
                self.local_i[i].to_string(),
                self.quadrants[i].as_str().to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// `I_i = n (Y_i − Ȳ) / Σ_j (Y_j − Ȳ)² · Σ_j w_ij (Y_j − Ȳ)`.
pub fn local_morans_i(y: &DVector<f64>, weights: &SpatialWeights) -> Result<MoranReport> {
    let n = y.len();
    if weights.n() != n {
        return Err(Error::shape(format!("{n} responses but {} spatial units", weights.n())));
    }
    let mean = y.mean();
    let dev = y.add_scalar(-mean);
    let ss = dev.norm_squared();
    if !(ss > 0.0) || ss <= 1e-24 * y.norm_squared() {
        return Err(Error::DegenerateData("response is constant; Moran's I is undefined".into()));
    }
    let lag = weights.matrix() * &dev;
    let nf = n as f64;
    let local_i: Vec<f64> = (0..n).map(|i| nf * dev[i] * lag[i] / ss).collect();
    let sd = (ss / nf).sqrt();
    let standardized: Vec<f64> = dev.iter().map(|d| d / sd).collect();
    let spatial_lag: Vec<f64> = lag.iter().map(|l| l / sd).collect();
    let quadrants = (0..n).map(|i| Quadrant::classify(dev[i], lag[i])).collect();
    let global = local_i.iter().sum::<f64>() / nf;
    Ok(MoranReport { local_i, standardized, spatial_lag, quadrants, global })
}

/// Global Moran statistic `(n / S₀) · zᵀWz / zᵀz`, `S₀ = Σ_ij w_ij`.
pub fn global_moran(y: &DVector<f64>, weights: &SpatialWeights) -> Result<f64> {
    if weights.n() != y.len() {
        return Err(Error::shape(format!("{} responses but {} spatial units", y.len(), weights.n())));
    }
    let z = y.add_scalar(-y.mean());
    let ss = z.norm_squared();
    if !(ss > 0.0) {
        return Err(Error::DegenerateData("response is constant; Moran's I is undefined".into()));
    }
    let w = weights.matrix();
    let s0: f64 = w.iter().sum();
    let mut num = 0.0;
    for j in 0..w.ncols() {
        for i in 0..w.nrows() {
            num += w[(i, j)] * z[i] * z[j];
        }
    }
    Ok(y.len() as f64 / s0 * num / ss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trim_fraction: f64,
    /// Number of pairs kept, `n* = n − floor(ιn)`.
    pub n_kept: usize,
    /// Indices removed by trimming, ascending.
    pub trimmed: Vec<usize>,
    pub mse: f64,
    pub r2: f64,
}

/// MSE and R² after dropping the `floor(ιn)` largest squared residuals
/// (ties broken towards the lower index being dropped first).
///
/// Applied to held-out pairs the same numbers are MSPE and R²_p.
pub fn fit_metrics(y: &DVector<f64>, y_hat: &DVector<f64>, trim: f64) -> Result<MetricsReport> {
    let n = y.len();
    if y_hat.len() != n {
        return Err(Error::shape(format!("{n} responses but {} predictions", y_hat.len())));
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::invalid(format!("trim fraction must lie in [0, 0.5), got {trim}")));
    }
    if n == 0 {
        return Err(Error::invalid("no observations"));
    }
    let sq: Vec<f64> = (0..n).map(|i| (y[i] - y_hat[i]).powi(2)).collect();
    let drop = (trim * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
    let mut trimmed: Vec<usize> = order[..drop].to_vec();
    trimmed.sort_unstable();
    let mut keep = vec![true; n];
    for &i in &trimmed {
        keep[i] = false;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    let ns = kept.len() as f64;
    let sse: f64 = kept.iter().map(|&i| sq[i]).sum();
    let ybar = kept.iter().map(|&i| y[i]).sum::<f64>() / ns;
    let sst: f64 = kept.iter().map(|&i| (y[i] - ybar).powi(2)).sum();
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(MetricsReport { trim_fraction: trim, n_kept: kept.len(), trimmed, mse: sse / ns, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{grid_contiguity, Contiguity};

    #[test]
    fn trimmed_arithmetic() {
        let y = DVector::from_element(10, 0.0);
        let mut yh = DVector::from_element(10, 1.0);
        yh[3] = 10.0;
        let m0 = fit_metrics(&y, &yh, 0.0).unwrap();
        assert!((m0.mse - 109.0 / 10.0).abs() < 1e-12);
        let m = fit_metrics(&y, &yh, 0.1).unwrap();
        assert_eq!(m.trimmed, vec![3]);
        assert_eq!(m.mse, 1.0);
    }

    #[test]
    fn perfect_and_mean_fits() {
        let y = DVector::from_vec(vec![1.0, 3.0, 2.0, 7.0]);
        let m = fit_metrics(&y, &y, 0.25).unwrap();
        assert_eq!((m.mse, m.r2), (0.0, 1.0));
        let mean = DVector::from_element(4, y.mean());
        assert!(fit_metrics(&y, &mean, 0.0).unwrap().r2.abs() < 1e-15);
        assert!(fit_metrics(&y, &mean, 0.5).is_err());
    }

    #[test]
    fn checkerboard() {
        let w = grid_contiguity(2, 2, Contiguity::Rook).unwrap();
        let y = DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0]);
        let r = local_morans_i(&y, &w).unwrap();
        for v in &r.local_i {
            assert!((v + 1.0).abs() < 1e-15);
        }
        assert!(r.quadrants.iter().all(|q| matches!(q, Quadrant::HighLow | Quadrant::LowHigh)));
        assert!((r.global - global_moran(&y, &w).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn hot_spot_and_constant() {
        let w = grid_contiguity(3, 3, Contiguity::Queen).unwrap();
        let mut y = DVector::from_element(9, 1.0);
        assert!(local_morans_i(&y, &w).is_err());
        y[4] = 10.0;
        let r = local_morans_i(&y, &w).unwrap();
        assert_eq!(r.quadrants[4], Quadrant::HighLow);
    }
}
