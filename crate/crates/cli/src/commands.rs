use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use ssofr_core::io::{self, CurveTable};
use ssofr_core::{
    fit_metrics, local_morans_i, BasisKind, BasisSpec, Contamination, ContaminationKind, Contiguity,
    DecompositionMethod, DVector, Estimator, FitConfig, FitTuning, FittedModel, FunctionalDataset, InitStrategy,
    KSpec, NumBasis, SelectionRule, SimSpec, SimWeights, SpatialWeights, WeightScheme,
};

use crate::{
    BasisArg, ContaminationArg, ContiguityArg, CurveInput, DiagnoseArgs, EstimatorArg, FitArgs, InitArg, MethodArg,
    PredictArgs, SimulateArgs, Spatial, WeightsArgs,
};

const REPORT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(ssofr_core::Error),
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Output { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl From<ssofr_core::Error> for CliError {
    fn from(e: ssofr_core::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Write through a temporary file in the same directory, then rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let out = |source| CliError::Output { path: path.clone(), source };
    fs::write(&tmp, contents).map_err(out)?;
    fs::rename(&tmp, &path).map_err(out)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.to_path_buf(), source })
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialise");
    s.push('\n');
    s
}

fn read_curves(input: &CurveInput) -> Result<CurveTable> {
    Ok(if input.wide { io::read_curves_wide(&input.curves)? } else { io::read_curves_long(&input.curves)? })
}

fn load_weights(spatial: &Spatial, ids: &[String], normalize: bool) -> Result<SpatialWeights> {
    match (&spatial.coords, &spatial.weights_matrix) {
        (Some(path), _) => {
            let coords = io::read_coords(path)?;
            let aligned = io::align(path, ids, &coords.iter().map(|(id, a, b)| (id.clone(), (*a, *b))).collect::<Vec<_>>())?;
            if coords.len() != ids.len() {
                return Err(usage(format!(
                    "{}: {} coordinates for {} units",
                    path.display(),
                    coords.len(),
                    ids.len()
                )));
            }
            Ok(ssofr_core::inverse_distance_weights(&aligned)?)
        }
        (None, Some(path)) => Ok(io::read_weights(path, ids, normalize)?),
        (None, None) => Err(usage("one of --coords or --weights-matrix is required")),
    }
}

fn read_aligned_response(path: &Path, ids: &[String]) -> Result<DVector<f64>> {
    let resp = io::read_response(path)?;
    if resp.len() != ids.len() {
        return Err(usage(format!("{}: {} responses for {} curves", path.display(), resp.len(), ids.len())));
    }
    Ok(DVector::from_vec(io::align(path, ids, &resp)?))
}

fn check_trim(trim: &[f64]) -> Result<()> {
    for t in trim {
        if !(0.0..0.5).contains(t) {
            return Err(usage(format!("trim fraction {t} outside [0, 0.5)")));
        }
    }
    Ok(())
}

fn metrics_json(y: &DVector<f64>, yhat: &DVector<f64>, trim: &[f64], err: &str, r2: &str) -> Result<Value> {
    let mut out = Vec::new();
    for &t in trim {
        let m = fit_metrics(y, yhat, t)?;
        let mut row = serde_json::Map::new();
        row.insert("trim".into(), json!(t));
        row.insert("n_kept".into(), json!(m.n_kept));
        row.insert(err.into(), json!(m.mse));
        row.insert(r2.into(), json!(m.r2));
        out.push(Value::Object(row));
    }
    Ok(Value::Array(out))
}

fn parse_lattice(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("lattice '{s}' is not of the form ROWSxCOLS")))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| usage(format!("lattice '{s}' is not of the form ROWSxCOLS")));
    Ok((parse(r)?, parse(c)?))
}

fn contiguity(c: ContiguityArg) -> Contiguity {
    match c {
        ContiguityArg::Rook => Contiguity::Rook,
        ContiguityArg::Queen => Contiguity::Queen,
    }
}

pub fn fit(a: FitArgs) -> Result<()> {
    check_trim(&a.trim)?;
    let table = read_curves(&a.input)?;
    let y = read_aligned_response(&a.response, &table.ids)?;
    let weights = load_weights(&a.spatial, &table.ids, !a.no_normalize)?;
    let dataset = FunctionalDataset::new(table.grid.clone(), table.curves.clone(), y.clone())?;

    let kind = match a.basis {
        BasisArg::Bspline => BasisKind::Bspline { degree: a.degree },
        BasisArg::Fourier => BasisKind::Fourier,
    };
    let num_basis = if a.num_basis.eq_ignore_ascii_case("auto") {
        NumBasis::Auto
    } else {
        NumBasis::Fixed(
            a.num_basis.parse().map_err(|_| usage(format!("--num-basis must be a count or 'auto', got '{}'", a.num_basis)))?,
        )
    };
    let k = match (a.num_components, &a.select) {
        (Some(k), _) => KSpec::Fixed(k),
        (None, Some(rule)) => KSpec::Select(rule.parse::<SelectionRule>()?),
        (None, None) => KSpec::Select(SelectionRule::Bic),
    };
    let mut tuning = FitTuning { cv_seed: a.seed, ..Default::default() };
    if let Some(v) = a.c {
        tuning.mscale.c = v;
    }
    if let Some(v) = a.delta {
        tuning.mscale.delta = v;
    }
    tuning.mscale.validate()?;
    if let Some(v) = a.c1 {
        tuning.m.c1 = v;
    }
    if let Some(v) = a.c2 {
        tuning.m.c2 = v;
    }
    if let Some(v) = a.c3 {
        tuning.m.c3 = v;
    }
    if let Some(v) = a.eps_conv {
        tuning.m.eps_conv = v;
    }
    if let Some(v) = a.max_iter {
        tuning.m.max_iter = v;
    }
    tuning.m.validate()?;
    tuning.init = match a.init {
        InitArg::Ml => InitStrategy::MaximumLikelihood,
        InitArg::Lad => InitStrategy::Lad,
    };
    let config = FitConfig {
        basis: BasisSpec { kind, num_basis },
        method: match a.method {
            MethodArg::Fpc => DecompositionMethod::Fpc,
            MethodArg::Fpls => DecompositionMethod::Fpls,
            MethodArg::Rfpc => DecompositionMethod::Rfpc,
            MethodArg::Rfpls => DecompositionMethod::Rfpls,
        },
        k,
        estimator: match a.estimator {
            EstimatorArg::Ml => Estimator::Ml,
            EstimatorArg::M => Estimator::M,
        },
        tuning,
    };
    let model = ssofr_core::fit(&dataset, &weights, &config)?;
    let fitted = DVector::from_column_slice(&model.diagnostics.fitted);

    prepare_out(&a.out)?;
    write_atomic(&a.out, "model.json", &model.to_json()?)?;
    write_atomic(&a.out, "beta_curve.csv", &io::curve_csv(model.grid(), &model.beta_curve, "beta"))?;
    let (lo, hi) = weights.rho_bounds();
    let d = &model.diagnostics;
    let report = json!({
        "format": "ssofr-fit-report",
        "version": REPORT_VERSION,
        "method": model.method,
        "estimator": model.estimator,
        "k": model.k,
        "num_basis": model.basis.num_basis(),
        "rho": model.params.rho,
        "sigma": model.params.sigma,
        "theta": model.params.theta.as_slice(),
        "rho_bounds": [lo, hi],
        "iterations": d.iterations,
        "converged": d.converged,
        "ridge_used": d.ridge_used,
        "boundary": d.boundary,
        "decomposition_iterations": d.decomposition_iterations,
        "decomposition_converged": d.decomposition_converged,
        "metrics": metrics_json(&y, &fitted, &a.trim, "mse", "r2")?,
        "fitted": table.ids.iter().enumerate().map(|(i, id)| json!({"id": id, "y": y[i], "y_hat": fitted[i]})).collect::<Vec<_>>(),
    });
    write_atomic(&a.out, "fit_report.json", &json_text(&report))
}

pub fn predict(a: PredictArgs) -> Result<()> {
    check_trim(&a.trim)?;
    let text = fs::read_to_string(&a.model)
        .map_err(|source| ssofr_core::Error::Io { path: a.model.display().to_string(), source })?;
    let model = FittedModel::from_json(&text)?;
    let table = read_curves(&a.input)?;
    let weights = load_weights(&a.spatial, &table.ids, !a.no_normalize)?;
    let dataset = FunctionalDataset::curves_only(table.grid.clone(), table.curves.clone())?;
    let yhat = ssofr_core::predict(&model, &dataset, &weights)?;

    prepare_out(&a.out)?;
    write_atomic(&a.out, "predictions.csv", &io::keyed_csv(&table.ids, "y_hat", &yhat))?;
    if let Some(path) = &a.response {
        let y = read_aligned_response(path, &table.ids)?;
        let report = json!({
            "format": "ssofr-predict-report",
            "version": REPORT_VERSION,
            "metrics": metrics_json(&y, &yhat, &a.trim, "mspe", "r2_p")?,
        });
        write_atomic(&a.out, "predict_report.json", &json_text(&report))?;
    }
    Ok(())
}

/// Largest divisor of `n` not above `√n`, as the column count.
fn near_square(n: usize) -> (usize, usize) {
    let mut c = (n as f64).sqrt().floor() as usize;
    while c > 1 && !n.is_multiple_of(c) {
        c -= 1;
    }
    (n / c.max(1), c.max(1))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let weights = if a.random_coords {
        SimWeights::default()
    } else {
        let (rows, cols) = match &a.lattice {
            Some(s) => parse_lattice(s)?,
            None => near_square(a.n),
        };
        SimWeights::Lattice { rows, cols, contiguity: contiguity(a.contiguity) }
    };
    let contamination = (a.contamination > 0.0).then_some(Contamination {
        fraction: a.contamination,
        kind: match a.kind {
            ContaminationArg::Vertical => ContaminationKind::Vertical { magnitude: a.magnitude },
            ContaminationArg::Leverage => ContaminationKind::Leverage { amplitude: a.amplitude },
            ContaminationArg::Both => ContaminationKind::Both { magnitude: a.magnitude, amplitude: a.amplitude },
        },
    });
    let spec = SimSpec {
        n: a.n,
        p: a.p,
        beta0: a.beta0,
        sigma: a.sigma,
        rho: a.rho,
        num_basis: a.beta.len(),
        beta_coeffs: a.beta.clone(),
        weights,
        contamination,
        seed: a.seed,
        ..Default::default()
    };
    let out = ssofr_core::simulate(&spec)?;
    let width = a.n.to_string().len();
    let ids: Vec<String> = (0..a.n).map(|i| format!("u{:0width$}", i + 1)).collect();

    let curves_csv = |d: &FunctionalDataset| {
        if a.wide {
            io::curves_wide_csv(&ids, d.grid(), d.curves())
        } else {
            io::curves_long_csv(&ids, d.grid(), d.curves())
        }
    };
    prepare_out(&a.out)?;
    write_atomic(&a.out, "curves.csv", &curves_csv(&out.dataset))?;
    write_atomic(&a.out, "response.csv", &io::keyed_csv(&ids, "y", out.dataset.require_response()?))?;
    write_atomic(&a.out, "weights.csv", &io::weights_dense_csv(&ids, out.weights.matrix()))?;
    if let Some(coords) = &out.coords {
        write_atomic(&a.out, "coords.csv", &io::coords_csv(&ids, coords))?;
    }
    let mut truth = serde_json::to_value(&out.truth).expect("truth serialises");
    truth["format"] = json!("ssofr-truth");
    truth["version"] = json!(REPORT_VERSION);
    truth["spec"] = serde_json::to_value(&spec).expect("spec serialises");
    write_atomic(&a.out, "truth.json", &json_text(&truth))?;

    if a.holdout {
        let test_spec = SimSpec { contamination: None, seed: a.seed.wrapping_add(1_000_003), ..spec };
        let (test, _) = ssofr_core::simulate_with_weights(&test_spec, &out.weights)?;
        write_atomic(&a.out, "test_curves.csv", &curves_csv(&test))?;
        write_atomic(&a.out, "test_response.csv", &io::keyed_csv(&ids, "y", test.require_response()?))?;
    }
    Ok(())
}

pub fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let resp = io::read_response(&a.response)?;
    let ids: Vec<String> = resp.iter().map(|r| r.0.clone()).collect();
    let y = DVector::from_iterator(ids.len(), resp.iter().map(|r| r.1));
    let weights = load_weights(&a.spatial, &ids, !a.no_normalize)?;
    let report = local_morans_i(&y, &weights)?;

    prepare_out(&a.out)?;
    write_atomic(&a.out, "moran.csv", &report.to_csv(&ids)?)?;
    let summary = json!({
        "format": "ssofr-moran-report",
        "version": REPORT_VERSION,
        "n": ids.len(),
        "global_moran": report.global,
        "counts": {
            "High-High": report.count(ssofr_core::Quadrant::HighHigh),
            "Low-Low": report.count(ssofr_core::Quadrant::LowLow),
            "High-Low": report.count(ssofr_core::Quadrant::HighLow),
            "Low-High": report.count(ssofr_core::Quadrant::LowHigh),
        },
        "units": ids.iter().enumerate().map(|(i, id)| json!({
            "id": id,
            "local_i": report.local_i[i],
            "deviation": report.standardized[i],
            "spatial_lag": report.spatial_lag[i],
            "quadrant": report.quadrants[i],
        })).collect::<Vec<_>>(),
    });
    write_atomic(&a.out, "moran_report.json", &json_text(&summary))
}

pub fn weights(a: WeightsArgs) -> Result<()> {
    let (ids, w) = match (&a.coords, &a.lattice) {
        (Some(path), _) => {
            let coords = io::read_coords(path)?;
            let ids: Vec<String> = coords.iter().map(|c| c.0.clone()).collect();
            let pts: Vec<(f64, f64)> = coords.iter().map(|c| (c.1, c.2)).collect();
            (ids, ssofr_core::inverse_distance_weights(&pts)?)
        }
        (None, Some(s)) => {
            let (rows, cols) = parse_lattice(s)?;
            let w = ssofr_core::grid_contiguity(rows, cols, contiguity(a.contiguity))?;
            let width = (rows * cols).to_string().len();
            ((0..rows * cols).map(|i| format!("u{:0width$}", i + 1)).collect(), w)
        }
        (None, None) => return Err(usage("one of --coords or --lattice is required")),
    };
    prepare_out(&a.out)?;
    write_atomic(&a.out, "weights.csv", &io::weights_dense_csv(&ids, w.matrix()))?;
    let (lo, hi) = w.rho_bounds();
    let scheme = match w.scheme() {
        WeightScheme::InverseDistance => "inverse_distance",
        WeightScheme::Rook => "rook",
        WeightScheme::Queen => "queen",
        WeightScheme::Custom => "custom",
    };
    let report = json!({
        "format": "ssofr-weights-report",
        "version": REPORT_VERSION,
        "n": ids.len(),
        "scheme": scheme,
        "lambda_min": w.lambda_min(),
        "rho_bounds": [lo, hi],
        "isolated": w.isolated().iter().map(|&i| ids[i].clone()).collect::<Vec<_>>(),
    });
    write_atomic(&a.out, "weights_report.json", &json_text(&report))
}
