//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ssofr_core::pipeline::reduced_form;
use ssofr_core::{
    build_basis, eta_ml, fit, fit_metrics, fpc, fpls, global_moran, grid_contiguity, huber_psi, local_morans_i,
    log_likelihood, m_fit, m_scale, ml_fit, pls_regression_coefficients, predict, rfpls, rho_tilde, simulate,
    simulate_with_weights, tukey_loss_norm, BasisKind, BasisSpec, BasisSystem, CoefficientMatrix, Contamination,
    Contiguity, DecompositionMethod, Estimator, FitConfig, FitTuning, HampelConfig, KSpec, MInit, MScaleConfig,
    MTuning, NumBasis, SarDesign, SarParams, SimSpec, SimWeights, SpatialWeights, WeightScheme,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

fn grid(p: usize) -> Vec<f64> {
    (0..p).map(|i| i as f64 / (p - 1) as f64).collect()
}

fn centered(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = a.row_mean();
    let mut c = a.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c
}

fn sign_fix(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        let i = col.iamax();
        if col[i] < 0.0 {
            col.neg_mut();
        }
    }
    m
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

fn coeffs(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, j| normal(&mut r) * 3.0 / (j + 1) as f64 + 0.5)
}

fn sar_data(w: &SpatialWeights, theta: &[f64], rho: f64, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
    let n = w.n();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, theta.len(), |_, j| if j == 0 { 1.0 } else { normal(&mut r) });
    let rhs = &z * DVector::from_column_slice(theta) + DVector::from_fn(n, |_, _| normal(&mut r));
    ((DMatrix::identity(n, n) - w.matrix() * rho).lu().solve(&rhs).unwrap(), z)
}

fn lattice(rows: usize, cols: usize, rho: f64, seed: u64) -> SimSpec {
    SimSpec {
        n: rows * cols,
        rho,
        weights: SimWeights::Lattice { rows, cols, contiguity: Contiguity::Rook },
        seed,
        ..Default::default()
    }
}

fn fpc_oracle(a: &DMatrix<f64>, basis: &BasisSystem, k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let ac = centered(a);
    let c = ac.transpose() * &ac / (n - 1) as f64;
    let l = basis.gram().clone().cholesky().unwrap().l();
    let eig = SymmetricEigen::new(l.transpose() * c * &l);
    let mut order: Vec<usize> = (0..a.ncols()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let u = DMatrix::from_fn(a.ncols(), k, |r, cc| eig.eigenvectors[(r, order[cc])]);
    sign_fix(l.transpose().try_inverse().unwrap() * u)
}

fn nipals_oracle(a: &DMatrix<f64>, y: &DVector<f64>, basis: &BasisSystem, k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let l = basis.gram().clone().cholesky().unwrap().l();
    let mut x = centered(a) * &l;
    let mut yy = y.add_scalar(-y.mean());
    let m = a.ncols();
    let (mut w, mut p, mut q) = (DMatrix::zeros(m, k), DMatrix::zeros(m, k), DVector::zeros(k));
    for h in 0..k {
        let c = x.transpose() * &yy;
        let wh = &c / c.norm();
        let t = &x * &wh;
        let tt = t.dot(&t);
        let ph = x.transpose() * &t / tt;
        let qh = yy.dot(&t) / tt;
        x -= &t * ph.transpose();
        yy -= &t * qh;
        w.set_column(h, &wh);
        p.set_column(h, &ph);
        q[h] = qh;
    }
    let lt_inv = l.transpose().try_inverse().unwrap();
    let r = &w * (p.transpose() * &w).try_inverse().unwrap();
    (sign_fix(&lt_inv * &w), &lt_inv * (r * q))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 4];

    for (n, m, seed) in [(100, 12, 1), (400, 20, 2)] {
        let basis = build_basis(BasisKind::Bspline { degree: 3 }, m, &grid(200)).unwrap();
        let a = coeffs(n, m, seed);
        let dec = fpc(&CoefficientMatrix::from_matrix(a.clone()), &basis, 5).unwrap();
        worst[0] = worst[0].max(rel(&dec.phi, &fpc_oracle(&a, &basis, 5)));

        let mut r = ChaCha8Rng::seed_from_u64(seed + 10);
        let y = DVector::from_fn(n, |i, _| a[(i, 0)] - 0.7 * a[(i, 2)] + 0.2 * normal(&mut r));
        let dec = fpls(&CoefficientMatrix::from_matrix(a.clone()), &basis, &y, 4).unwrap();
        let (phi, beta) = nipals_oracle(&a, &y, &basis, 4);
        let (_, b) = pls_regression_coefficients(&dec, &y).unwrap();
        worst[1] = worst[1].max(rel(&dec.phi, &phi)).max((&b - &beta).amax() / beta.amax());
    }

    for seed in 0..3 {
        let w = grid_contiguity(7, 7, Contiguity::Rook).unwrap();
        let (y, z) = sar_data(&w, &[2.0, 1.0, -0.5], 0.5, 20 + seed);
        let d = SarDesign::new(y.clone(), z.clone(), &w).unwrap();
        let rho_hat = ml_fit(&d).unwrap().params.rho;
        let wy = w.matrix() * &y;
        let svd = z.clone().svd(true, true);
        let (lo, hi) = w.rho_bounds();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for s in 1..((hi - lo) / 1e-4) as usize {
            let rho = lo + s as f64 * 1e-4;
            let yt = &y - &wy * rho;
            let theta = svd.solve(&yt, 1e-12).unwrap();
            let sigma = ((&yt - &z * &theta).norm_squared() / 49.0).sqrt();
            let ll = log_likelihood(&SarParams { theta, sigma, rho }, &d).unwrap();
            if ll > best.0 {
                best = (ll, rho);
            }
        }
        worst[2] = worst[2].max((rho_hat - best.1).abs());
    }

    let w = grid_contiguity(6, 6, Contiguity::Queen).unwrap();
    let (y, z) = sar_data(&w, &[1.0, 0.5, -1.0, 0.2], 0.3, 7);
    let d = SarDesign::new(y, z, &w).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let p = SarParams {
            theta: DVector::from_fn(4, |_, _| normal(&mut r)),
            sigma: 0.5 + r.random::<f64>(),
            rho: r.random_range(-0.8..0.8),
        };
        let g = eta_ml(&p, &d).unwrap();
        let x0 = p.as_vector();
        for i in 0..x0.len() {
            let h = 1e-5 * x0[i].abs().max(1.0);
            let at = |delta: f64| {
                let mut x = x0.clone();
                x[i] += delta;
                log_likelihood(&SarParams { theta: x.rows(0, 4).into_owned(), sigma: x[4], rho: x[5] }, &d).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            worst[3] = worst[3].max((fd - g[i]).abs() / g[i].abs().max(1.0));
        }
    }

    // Full default pipeline at the largest admissible size.
    let sim = simulate(&SimSpec { p: 200, ..lattice(20, 20, 0.5, 3) }).unwrap();
    let cfg = FitConfig {
        basis: BasisSpec { kind: BasisKind::Bspline { degree: 3 }, num_basis: NumBasis::Fixed(20) },
        ..Default::default()
    };
    let full_fit = fit(&sim.dataset, &sim.weights, &cfg).is_ok();
    let secs = start.elapsed().as_secs_f64();

    let pass = worst[0] < 1e-8 && worst[1] < 1e-8 && worst[2] <= 1e-4 && worst[3] < 1e-5 && full_fit && secs < 60.0;
    outcome(
        pass,
        format!(
            "FPC vs eigen oracle {:.1e}, FPLS vs NIPALS {:.1e}, ML ρ̂ vs grid {:.1e}, η_ML vs FD {:.1e}, \
             n=400/p=200/M=20 fit ok={full_fit}, {secs:.1}s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn criterion_2() -> Outcome {
    // W = 0: the spatial model is the ordinary regression.
    let n = 60;
    let zero = SpatialWeights::from_matrix(DMatrix::zeros(n, n), WeightScheme::Custom, false).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let z = DMatrix::from_fn(n, 4, |_, j| if j == 0 { 1.0 } else { normal(&mut r) });
    let y = &z * DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]) + DVector::from_fn(n, |_, _| normal(&mut r));
    let ml = ml_fit(&SarDesign::new(y.clone(), z.clone(), &zero).unwrap()).unwrap().params;
    let ols = z.clone().svd(true, true).solve(&y, 1e-14).unwrap();
    let sigma_ols = ((&y - &z * &ols).norm_squared() / n as f64).sqrt();
    let scores = z.columns(1, 3).into_owned();
    let yhat = reduced_form(&SarParams { rho: 0.0, ..ml.clone() }, &scores, &zero).unwrap();
    let d_rho0 = (&ml.theta - &ols).amax().max((ml.sigma - sigma_ols).abs()).max((&yhat - &z * &ols).amax());

    let basis = build_basis(BasisKind::Bspline { degree: 3 }, 10, &grid(101)).unwrap();
    let a = CoefficientMatrix::from_matrix(coeffs(70, 10, 21));
    let yy = DVector::from_fn(70, |i, _| a.coeffs()[(i, 0)] - 0.5 * a.coeffs()[(i, 3)]);
    let huge = HampelConfig { a: 1e8, b: 2e8, q: 3e8 };
    let rob = rfpls(&a, &basis, &yy, 4, &huge).unwrap();
    let cls = fpls(&a, &basis, &yy, 4).unwrap();
    let d_pls = rel(&rob.phi, &cls.phi).max(rel(&rob.scores, &cls.scores));

    let w = grid_contiguity(8, 8, Contiguity::Queen).unwrap();
    let (y, z) = sar_data(&w, &[1.0, 1.0, -1.0], 0.4, 13);
    let d = SarDesign::new(y, z, &w).unwrap();
    let ml = ml_fit(&d).unwrap().params;
    let t = MTuning { c1: 1e6, c2: 1e6, c3: 1e6, eps_conv: 1e-10, max_iter: 2000, ..Default::default() };
    let m = m_fit(&d, &t, MInit::Lad).unwrap();
    let d_m = (m.params.as_vector() - ml.as_vector()).amax();

    let c = 1.4;
    let closed = huber_psi(0.0, c) == 0.0
        && huber_psi(c, c) == c
        && huber_psi(-c, c) == -c
        && huber_psi(1e9, c) == c
        && huber_psi(-1e9, c) == -c
        && tukey_loss_norm(0.0, 1.56) == 0.0
        && tukey_loss_norm(1.56, 1.56) == 1.0
        && tukey_loss_norm(-1.56, 1.56) == 1.0
        && tukey_loss_norm(1e9, 1.56) == 1.0;

    let pass = d_rho0 < 1e-8 && d_pls < 1e-8 && d_m < 1e-4 && m.converged && closed;
    outcome(
        pass,
        format!(
            "ρ=0 vs OLS {d_rho0:.1e}, RFPLS(unit w) vs FPLS {d_pls:.1e}, M(c→∞) vs ML {d_m:.1e}, \
             Huber/Tukey closed forms exact={closed}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let cs = [1.4, 1.65, 2.4];
    let draws = 10_000_000usize;
    let mut sums = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    for _ in 0..draws {
        let u = normal(&mut r);
        for (j, &c) in cs.iter().enumerate() {
            let v = huber_psi(u, c).powi(2);
            sums[j] += v;
            sq[j] += v * v;
        }
    }
    let mut worst_z = 0.0f64;
    for j in 0..3 {
        let mean = sums[j] / draws as f64;
        let var = (sq[j] / draws as f64 - mean * mean) * draws as f64 / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        worst_z = worst_z.max((mean - rho_tilde(cs[j])).abs() / se);
    }
    let x: Vec<f64> = (0..100_000).map(|_| normal(&mut r)).collect();
    let s = m_scale(&x, &MScaleConfig::default()).unwrap().scale;
    let pass = worst_z < 3.0 && (s - 1.0).abs() <= 0.02;
    outcome(pass, format!("max |closed − MC| = {worst_z:.2} SE over c ∈ {{1.4, 1.65, 2.4}}, m_scale(N(0,1)) = {s:.4}"))
}

fn ab_config(method: DecompositionMethod, estimator: Estimator) -> FitConfig {
    FitConfig {
        basis: BasisSpec { kind: BasisKind::Fourier, num_basis: NumBasis::Fixed(5) },
        method,
        k: KSpec::Fixed(4),
        estimator,
        tuning: FitTuning::default(),
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let reps = 100;
    let rho_true = 0.5;
    let pairs = [
        (DecompositionMethod::Fpc, DecompositionMethod::Rfpc),
        (DecompositionMethod::Fpls, DecompositionMethod::Rfpls),
    ];
    let mut sigma_ok = [0usize; 2];
    let mut rho_ok = [0usize; 2];
    let mut mspe_ok = [0usize; 2];
    let mut ratio_max = 0.0f64;
    let mut sigma_sum = [[0.0f64; 2]; 2];
    for rep in 0..reps {
        let spec = SimSpec { contamination: Some(Contamination::vertical(0.1)), ..lattice(20, 10, rho_true, 5000 + rep) };
        let sim = simulate(&spec).unwrap();
        let test_spec = SimSpec { contamination: None, seed: spec.seed + 1_000_003, ..spec.clone() };
        let (test, _) = simulate_with_weights(&test_spec, &sim.weights).unwrap();
        let yt = test.response().unwrap();
        for (j, &(classic, robust)) in pairs.iter().enumerate() {
            let a = fit(&sim.dataset, &sim.weights, &ab_config(classic, Estimator::Ml)).unwrap();
            let b = fit(&sim.dataset, &sim.weights, &ab_config(robust, Estimator::M)).unwrap();
            ratio_max = ratio_max.max(b.params.sigma / a.params.sigma);
            sigma_sum[j][0] += a.params.sigma;
            sigma_sum[j][1] += b.params.sigma;
            sigma_ok[j] += usize::from(b.params.sigma <= a.params.sigma / 3.0);
            rho_ok[j] += usize::from((b.params.rho - rho_true).abs() < (a.params.rho - rho_true).abs());
            let pa = predict(&a, &test, &sim.weights).unwrap();
            let pb = predict(&b, &test, &sim.weights).unwrap();
            let wins = [0.05, 0.10]
                .iter()
                .all(|&t| fit_metrics(yt, &pb, t).unwrap().mse < fit_metrics(yt, &pa, t).unwrap().mse);
            mspe_ok[j] += usize::from(wins);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let need = reps as usize * 4 / 5;
    let mean_ratio = [sigma_sum[0][1] / sigma_sum[0][0], sigma_sum[1][1] / sigma_sum[1][0]];
    let pass = mean_ratio.iter().all(|&r| r <= 1.0 / 3.0)
        && rho_ok.iter().all(|&c| c >= need)
        && mspe_ok.iter().all(|&c| c >= need)
        && secs < 600.0;
    outcome(
        pass,
        format!(
            "{reps} reps, n=200, 10% vertical at 20σ (RFPC/RFPLS vs FPC/FPLS): mean σ̂_M/mean σ̂_ML = {:.3}/{:.3} \
             (per replicate ≤ 1/3 in {}/{}, max {ratio_max:.3}); ρ̂_M closer in {}/{}; trimmed MSPE better in {}/{}; {secs:.0}s",
            mean_ratio[0], mean_ratio[1], sigma_ok[0], sigma_ok[1], rho_ok[0], rho_ok[1], mspe_ok[0], mspe_ok[1]
        ),
    )
}

fn criterion_5() -> Outcome {
    let reps = 100;
    let mut se_ml = 0.0;
    let mut se_m = 0.0;
    let mut unconverged = 0;
    for rep in 0..reps {
        let sim = simulate(&lattice(20, 20, 0.5, 7000 + rep)).unwrap();
        let t = &sim.truth;
        let truth: Vec<f64> =
            [vec![t.beta0], t.beta_coeffs.clone(), vec![t.sigma, t.rho]].concat();
        for est in [Estimator::Ml, Estimator::M] {
            let cfg = FitConfig { k: KSpec::Fixed(5), ..ab_config(DecompositionMethod::Fpc, est) };
            let m = fit(&sim.dataset, &sim.weights, &cfg).unwrap();
            if !m.diagnostics.converged {
                unconverged += 1;
            }
            let shift = m.decomposition.center.dot(&(m.basis.gram() * &m.beta_coeffs));
            let est_vec: Vec<f64> =
                [vec![m.params.theta[0] - shift], m.beta_coeffs.iter().copied().collect(), vec![m.params.sigma, m.params.rho]]
                    .concat();
            let se: f64 = est_vec.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum();
            match est {
                Estimator::Ml => se_ml += se,
                Estimator::M => se_m += se,
            }
        }
    }
    let rmse_ml = (se_ml / reps as f64).sqrt();
    let rmse_m = (se_m / reps as f64).sqrt();
    let ratio = rmse_m / rmse_ml;
    outcome(
        ratio <= 1.15 && unconverged == 0,
        format!("n=400 clean, {reps} reps: RMSE(Θ̂_M) = {rmse_m:.4}, RMSE(Θ̂_ML) = {rmse_ml:.4}, ratio {ratio:.3}, unconverged {unconverged}"),
    )
}

fn criterion_6() -> Outcome {
    let sim = simulate(&lattice(15, 15, 0.5, 31)).unwrap();
    let basis = build_basis(BasisKind::Fourier, 5, sim.dataset.grid()).unwrap();
    let c = ssofr_core::project_curves(&sim.dataset, &basis).unwrap();
    let scores = fpc(&c, &basis, 4).unwrap().scores;
    let y0 = sim.dataset.response().unwrap().clone();
    let mut m_path = Vec::new();
    let mut ml_path = Vec::new();
    for delta in [1e2, 1e4, 1e6] {
        let mut y = y0.clone();
        y[100] += delta;
        let d = SarDesign::from_scores(y, &scores, &sim.weights).unwrap();
        m_path.push(m_fit(&d, &MTuning::default(), MInit::default()).unwrap().params.as_vector());
        ml_path.push(ml_fit(&d).unwrap().params.as_vector());
    }
    let dm = [(&m_path[1] - &m_path[0]).norm(), (&m_path[2] - &m_path[1]).norm()];
    let dml = [(&ml_path[1] - &ml_path[0]).norm(), (&ml_path[2] - &ml_path[1]).norm()];
    let pass = dm.iter().all(|d| *d < 1e-3) && dml[1] > dml[0] && dml[1] > 1e3;
    outcome(
        pass,
        format!(
            "Δ = 1e2→1e4→1e6: ‖ΔΘ̂_M‖ = {:.1e}, {:.1e}; ‖ΔΘ̂_ML‖ = {:.1e}, {:.1e}",
            dm[0], dm[1], dml[0], dml[1]
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 5 + (seed as usize % 40);
        let mut raw = DMatrix::from_fn(n, n, |i, j| if i == j || r.random::<f64>() < 0.6 { 0.0 } else { r.random::<f64>() });
        for i in 0..n {
            raw[(i, (i + 1) % n)] += 0.2;
        }
        let w = SpatialWeights::from_matrix(raw, WeightScheme::Custom, true).unwrap();
        let y = DVector::from_fn(n, |_, _| normal(&mut r));
        let local: f64 = local_morans_i(&y, &w).unwrap().local_i.iter().sum();
        let g = n as f64 * global_moran(&y, &w).unwrap();
        worst = worst.max((local - g).abs() / g.abs().max(1.0));
    }
    let w = grid_contiguity(2, 2, Contiguity::Rook).unwrap();
    let rep = local_morans_i(&DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0]), &w).unwrap();
    let board = rep.local_i.iter().all(|v| (v + 1.0).abs() < 1e-12)
        && rep.standardized.iter().zip([1.0, -1.0, -1.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12)
        && rep.spatial_lag.iter().zip([-1.0, 1.0, 1.0, -1.0]).all(|(a, b)| (a - b).abs() < 1e-12);
    outcome(
        worst < 1e-10 && board,
        format!("ΣI_i vs n·I on 50 random fixtures {worst:.1e}; 2×2 checkerboard I_i = −1, z = ±1, lag = ∓1: {board}"),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_ssofr")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut snaps = Vec::new();
    let mut all_ok = true;
    for run in 0..2 {
        let root = tmp.path().join(format!("run{run}"));
        let s = |name: &str| root.join(name).display().to_string();
        let steps: Vec<Vec<String>> = vec![
            vec!["simulate", "--n", "120", "--seed", "11", "--contamination", "0.1", "--random-coords", "--holdout", "--out", &s("data")]
                .into_iter().map(String::from).collect(),
            vec!["weights", "--coords", &s("data/coords.csv"), "--out", &s("weights")].into_iter().map(String::from).collect(),
            vec![
                "fit", "--curves", &s("data/curves.csv"), "--response", &s("data/response.csv"),
                "--coords", &s("data/coords.csv"), "--select", "cv:4", "--seed", "5", "--out", &s("fit"),
            ]
            .into_iter().map(String::from).collect(),
            vec![
                "predict", "--model", &s("fit/model.json"), "--curves", &s("data/test_curves.csv"),
                "--coords", &s("data/coords.csv"), "--response", &s("data/test_response.csv"), "--out", &s("pred"),
            ]
            .into_iter().map(String::from).collect(),
            vec!["diagnose", "--response", &s("data/response.csv"), "--coords", &s("data/coords.csv"), "--out", &s("diag")]
                .into_iter().map(String::from).collect(),
        ];
        for step in &steps {
            let args: Vec<&str> = step.iter().map(String::as_str).collect();
            all_ok &= run_cli(&args);
        }
        snaps.push(snapshot(&root));
    }
    let same = snaps[0] == snaps[1];
    outcome(
        all_ok && same && !snaps[0].is_empty(),
        format!("simulate/weights/fit/predict/diagnose twice: {} files, all succeeded={all_ok}, byte-identical={same}", snaps[0].len()),
    )
}

fn main() {
    // Plain `cargo test` passes harness flags; only honour a name filter.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "oracle equivalences", criterion_1),
        (2, "degenerate reductions", criterion_2),
        (3, "calibration", criterion_3),
        (4, "robustness A/B", criterion_4),
        (5, "clean-data efficiency", criterion_5),
        (6, "bounded influence", criterion_6),
        (7, "spatial diagnostics", criterion_7),
        (8, "determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, name, run) in criteria {
        if let Some(f) = &filter {
            if !i.to_string().eq(f) && !name.contains(f.as_str()) {
                continue;
            }
        }
        let o = run();
        println!("{} criterion {i} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
