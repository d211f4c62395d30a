use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "ssofr", version, about = "Robust spatial scalar-on-function regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model and write model.json, beta_curve.csv and fit_report.json.
    Fit(FitArgs),
    /// Predict responses from a saved model; writes predictions.csv.
    Predict(PredictArgs),
    /// Generate a synthetic data set in the CSV formats read by `fit`.
    Simulate(SimulateArgs),
    /// Local Moran's I; writes moran.csv and moran_report.json.
    Diagnose(DiagnoseArgs),
    /// Build a spatial weight matrix; writes weights.csv and weights_report.json.
    Weights(WeightsArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
struct Spatial {
    /// `id,lat,lon` table; inverse great-circle-distance weights.
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Dense (`id,<ids…>`) or triplet (`i,j,w`) weight matrix.
    #[arg(long = "weights-matrix")]
    weights_matrix: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct CurveInput {
    /// Curves, long format `id,t,value` (or wide with --wide).
    #[arg(long)]
    curves: PathBuf,
    /// Curves file is wide: `id,<t1>,<t2>,…`.
    #[arg(long)]
    wide: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum BasisArg {
    Bspline,
    Fourier,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Fpc,
    Fpls,
    Rfpc,
    Rfpls,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum EstimatorArg {
    Ml,
    M,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum InitArg {
    Ml,
    Lad,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: CurveInput,
    /// `id,y` table.
    #[arg(long)]
    response: PathBuf,
    #[command(flatten)]
    spatial: Spatial,
    /// Keep the weight matrix as given instead of row-normalising it.
    #[arg(long = "no-normalize")]
    no_normalize: bool,
    #[arg(long, value_enum, default_value = "bspline")]
    basis: BasisArg,
    /// B-spline degree.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Number of basis functions, or `auto`.
    #[arg(long = "num-basis", default_value = "auto")]
    num_basis: String,
    #[arg(long, value_enum, default_value = "rfpls")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "m")]
    estimator: EstimatorArg,
    #[arg(long = "num-components", conflicts_with = "select")]
    num_components: Option<usize>,
    /// Component selection rule: `ev:τ`, `bic` or `cv:k` (default bic).
    #[arg(long)]
    select: Option<String>,
    /// Trimming fractions of the reported metrics.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1")]
    trim: Vec<f64>,
    /// Seed of the cross-validation folds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Tukey constant of the M-scale.
    #[arg(long)]
    c: Option<f64>,
    /// Target of the M-scale equation.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long = "eps-conv")]
    eps_conv: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Starting values of the M-estimator.
    #[arg(long, value_enum, default_value = "ml")]
    init: InitArg,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// model.json written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: CurveInput,
    #[command(flatten)]
    spatial: Spatial,
    #[arg(long = "no-normalize")]
    no_normalize: bool,
    /// Observed responses; adds MSPE and R²_p to the report.
    #[arg(long)]
    response: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1")]
    trim: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ContaminationArg {
    Vertical,
    Leverage,
    Both,
}

#[derive(Copy, Clone, Debug, ValueEnum, PartialEq, Eq)]
enum ContiguityArg {
    Rook,
    Queen,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Grid points per curve.
    #[arg(long, default_value_t = 101)]
    p: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    beta0: f64,
    /// Coefficients of β(t) in the 5-function Fourier basis.
    #[arg(long, value_delimiter = ',', default_value = "0.5,2,-1.5,1,0.5")]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fraction of contaminated units.
    #[arg(long, default_value_t = 0.0)]
    contamination: f64,
    #[arg(long, value_enum, default_value = "vertical")]
    kind: ContaminationArg,
    /// Vertical outlier shift in units of σ.
    #[arg(long, default_value_t = 20.0)]
    magnitude: f64,
    /// Leverage curve multiplier.
    #[arg(long, default_value_t = 10.0)]
    amplitude: f64,
    /// `ROWSxCOLS` lattice with contiguity weights (default: near-square
    /// lattice of n cells).
    #[arg(long, conflicts_with = "random_coords")]
    lattice: Option<String>,
    #[arg(long, value_enum, default_value = "rook")]
    contiguity: ContiguityArg,
    /// Random coordinates with inverse-distance weights instead of a lattice.
    #[arg(long = "random-coords")]
    random_coords: bool,
    /// Also draw a clean second sample on the same units (test_*.csv).
    #[arg(long)]
    holdout: bool,
    /// Write curves in wide format.
    #[arg(long)]
    wide: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long)]
    response: PathBuf,
    #[command(flatten)]
    spatial: Spatial,
    #[arg(long = "no-normalize")]
    no_normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct WeightsArgs {
    #[arg(long, conflicts_with = "lattice", required_unless_present = "lattice")]
    coords: Option<PathBuf>,
    /// `ROWSxCOLS` contiguity lattice.
    #[arg(long)]
    lattice: Option<String>,
    #[arg(long, value_enum, default_value = "rook")]
    contiguity: ContiguityArg,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Weights(a) => commands::weights(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
