use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ssofr_core::{
    eta_ml, eta_robust, grid_contiguity, huber_psi, log_likelihood, m_fit, ml_fit, rho_tilde, Contiguity, MInit,
    MTuning, SarDesign, SarParams, SpatialWeights,
};

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// `Y = (I − ρW)⁻¹(Zθ + σε)` with `Z = [1, N(0,1) columns]`.
fn sar_data(w: &SpatialWeights, k: usize, theta: &[f64], sigma: f64, rho: f64, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
    let n = w.n();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, k + 1, |_, j| if j == 0 { 1.0 } else { normal(&mut r) });
    let eps = DVector::from_fn(n, |_, _| normal(&mut r));
    let rhs = &z * DVector::from_column_slice(theta) + eps * sigma;
    let a = DMatrix::identity(n, n) - w.matrix() * rho;
    (a.lu().solve(&rhs).unwrap(), z)
}

#[test]
fn log_likelihood_trivial_values() {
    let w = grid_contiguity(4, 5, Contiguity::Rook).unwrap();
    let n = 20;
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let z = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { normal(&mut r) });
    let y0 = DVector::zeros(n);
    let d = SarDesign::new(y0, z.clone(), &w).unwrap();
    let p = SarParams { theta: DVector::zeros(3), sigma: 1.0, rho: 0.0 };
    let expect = -(n as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln();
    assert!((log_likelihood(&p, &d).unwrap() - expect).abs() < 1e-12);

    // ρ = 0: ordinary Gaussian regression likelihood.
    let y = DVector::from_fn(n, |_, _| normal(&mut r));
    let d = SarDesign::new(y.clone(), z.clone(), &w).unwrap();
    let theta = DVector::from_vec(vec![0.3, -0.2, 0.1]);
    let p = SarParams { theta: theta.clone(), sigma: 1.7, rho: 0.0 };
    let e = &y - &z * &theta;
    let ols = e.iter().map(|v| -0.5 * (2.0 * std::f64::consts::PI).ln() - 1.7f64.ln() - v * v / (2.0 * 1.7 * 1.7)).sum::<f64>();
    assert!((log_likelihood(&p, &d).unwrap() - ols).abs() < 1e-10);
}

#[test]
fn log_likelihood_matches_dense_mvn_density() {
    for seed in 0..5 {
        let w = grid_contiguity(5, 6, Contiguity::Queen).unwrap();
        let n = 30;
        let (y, z) = sar_data(&w, 2, &[1.0, 0.5, -1.0], 0.8, 0.4, seed);
        let d = SarDesign::new(y.clone(), z.clone(), &w).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let p = SarParams {
            theta: DVector::from_fn(3, |_, _| normal(&mut r)),
            sigma: 0.5 + r.random::<f64>(),
            rho: r.random_range(-0.9..0.9),
        };
        let a = DMatrix::identity(n, n) - w.matrix() * p.rho;
        let a_inv = a.clone().try_inverse().unwrap();
        let mu = &a_inv * (&z * &p.theta);
        let cov = (&a_inv * a_inv.transpose()) * (p.sigma * p.sigma);
        let chol = cov.cholesky().unwrap();
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let dev = &y - mu;
        let quad = dev.dot(&chol.solve(&dev));
        let oracle = -0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * quad;
        let got = log_likelihood(&p, &d).unwrap();
        assert!((got - oracle).abs() < 1e-8 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }
}

#[test]
fn eta_ml_matches_finite_differences() {
    let w = grid_contiguity(6, 6, Contiguity::Rook).unwrap();
    let (y, z) = sar_data(&w, 3, &[1.0, 0.5, -1.0, 0.2], 1.0, 0.3, 7);
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
                let q = SarParams { theta: x.rows(0, 4).into_owned(), sigma: x[4], rho: x[5] };
                log_likelihood(&q, &d).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "component {i}: fd {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn ml_fit_matches_grid_search_and_zeroes_score() {
    for seed in 0..3 {
        let w = grid_contiguity(7, 7, Contiguity::Rook).unwrap();
        let (y, z) = sar_data(&w, 2, &[2.0, 1.0, -0.5], 1.0, 0.5, 20 + seed);
        let d = SarDesign::new(y.clone(), z.clone(), &w).unwrap();
        let fit = ml_fit(&d).unwrap();
        let score = eta_ml(&fit.params, &d).unwrap();
        assert!(score.norm() < 1e-5 * 49.0, "score {}", score.norm());

        // Brute force over ρ with θ, σ profiled by ordinary least squares.
        let wy = w.matrix() * &y;
        let svd = z.clone().svd(true, true);
        let (lo, hi) = w.rho_bounds();
        let mut best = (f64::NEG_INFINITY, 0.0);
        let steps = ((hi - lo) / 1e-4) as usize;
        for s in 1..steps {
            let rho = lo + s as f64 * 1e-4;
            let yt = &y - &wy * rho;
            let theta = svd.solve(&yt, 1e-12).unwrap();
            let sigma = ((&yt - &z * &theta).norm_squared() / 49.0).sqrt();
            let ll = log_likelihood(&SarParams { theta, sigma, rho }, &d).unwrap();
            if ll > best.0 {
                best = (ll, rho);
            }
        }
        assert!((fit.params.rho - best.1).abs() <= 1e-4, "{} vs grid {}", fit.params.rho, best.1);
        assert!(fit.log_likelihood >= best.0 - 1e-9);
    }
}

#[test]
fn ml_fit_noiseless_zero_rho_is_ols() {
    let w = grid_contiguity(6, 5, Contiguity::Queen).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let z = DMatrix::from_fn(30, 3, |_, j| if j == 0 { 1.0 } else { normal(&mut r) });
    let theta = DVector::from_vec(vec![1.0, 2.0, -3.0]);
    // Tiny noise keeps σ̂ > 0.
    let y = &z * &theta + DVector::from_fn(30, |_, _| 1e-9 * normal(&mut r));
    let fit = ml_fit(&SarDesign::new(y.clone(), z.clone(), &w).unwrap()).unwrap();
    assert!(fit.params.rho.abs() < 1e-4, "ρ̂ = {}", fit.params.rho);
    let ols = z.clone().svd(true, true).solve(&(&y - w.matrix() * &y * fit.params.rho), 1e-14).unwrap();
    assert!((&fit.params.theta - ols).amax() < 1e-8);
    assert!((&fit.params.theta - theta).amax() < 1e-6);
}

#[test]
fn ml_fit_is_consistent_at_n400() {
    let w = grid_contiguity(20, 20, Contiguity::Rook).unwrap();
    let est: Vec<f64> = (0..100)
        .map(|seed| {
            let (y, z) = sar_data(&w, 2, &[1.0, 1.0, -1.0], 1.0, 0.3, 1000 + seed);
            ml_fit(&SarDesign::new(y, z, &w).unwrap()).unwrap().params.rho
        })
        .collect();
    let bias = est.iter().map(|r| r - 0.3).sum::<f64>() / 100.0;
    let rmse = (est.iter().map(|r| (r - 0.3).powi(2)).sum::<f64>() / 100.0).sqrt();
    assert!(bias.abs() < 0.015 && rmse < 0.06, "bias {bias}, rmse {rmse}");
}

#[test]
fn huber_and_rho_tilde() {
    assert_eq!(huber_psi(0.5, 1.4), 0.5);
    assert_eq!(huber_psi(3.0, 1.4), 1.4);
    assert_eq!(huber_psi(-3.0, 1.4), -1.4);
    assert_eq!(huber_psi(1.4, 1.4), 1.4);
    assert_eq!(huber_psi(0.0, 1.4), 0.0);
    assert!((rho_tilde(50.0) - 1.0).abs() < 1e-15);
    assert!(rho_tilde(1.4) < rho_tilde(1.65) && rho_tilde(1.65) < rho_tilde(2.4) && rho_tilde(2.4) < 1.0);

    // Monte Carlo: 10⁶ draws, 3 standard errors.
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let draws: Vec<f64> = (0..1_000_000).map(|_| normal(&mut r)).collect();
    for c in [1.4, 1.65, 2.4] {
        let v: Vec<f64> = draws.iter().map(|u| huber_psi(*u, c).powi(2)).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        let se = sd / (v.len() as f64).sqrt();
        assert!((mean - rho_tilde(c)).abs() < 3.0 * se, "c = {c}: MC {mean} vs {}", rho_tilde(c));
    }
}

#[test]
fn eta_robust_at_zero_residual() {
    let w = grid_contiguity(5, 5, Contiguity::Rook).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let z = DMatrix::from_fn(25, 2, |_, j| if j == 0 { 1.0 } else { normal(&mut r) });
    let theta = DVector::from_vec(vec![1.0, 2.0]);
    let rho = 0.4;
    let a = DMatrix::identity(25, 25) - w.matrix() * rho;
    let y = a.clone().lu().solve(&(&z * &theta)).unwrap();
    let d = SarDesign::new(y, z, &w).unwrap();
    let t = MTuning::default();
    let eta = eta_robust(&SarParams { theta, sigma: 1.0, rho }, &d, &t).unwrap();
    assert!(eta.rows(0, 2).amax() < 1e-10);
    assert!((eta[2] + 25.0 * rho_tilde(t.c2)).abs() < 1e-10);
    let g = w.matrix() * a.try_inverse().unwrap();
    assert!((eta[3] + g.trace() * rho_tilde(t.c3)).abs() < 1e-9, "{} vs {}", eta[3], -g.trace() * rho_tilde(t.c3));
}

#[test]
fn eta_robust_reduces_to_score_without_clipping() {
    let w = grid_contiguity(6, 6, Contiguity::Queen).unwrap();
    let (y, z) = sar_data(&w, 2, &[1.0, 0.5, -0.5], 1.3, 0.3, 10);
    let d = SarDesign::new(y, z, &w).unwrap();
    let p = SarParams { theta: DVector::from_vec(vec![0.9, 0.6, -0.4]), sigma: 1.2, rho: 0.25 };
    let huge = MTuning { c1: 1e9, c2: 1e9, c3: 1e9, ..Default::default() };
    let er = eta_robust(&p, &d, &huge).unwrap();
    let em = eta_ml(&p, &d).unwrap();
    let s = p.sigma;
    for i in 0..3 {
        assert!((er[i] - s * em[i]).abs() < 1e-9 * em[i].abs().max(1.0));
    }
    assert!((er[3] - s * em[3]).abs() < 1e-9 * er[3].abs().max(1.0));
    assert!((er[4] - em[4]).abs() < 1e-8 * em[4].abs().max(1.0));
}

#[test]
fn eta_robust_is_bounded_in_one_response() {
    let w = grid_contiguity(6, 6, Contiguity::Rook).unwrap();
    let (y, z) = sar_data(&w, 1, &[1.0, 1.0], 1.0, 0.3, 11);
    let p = SarParams { theta: DVector::from_vec(vec![1.0, 1.0]), sigma: 1.0, rho: 0.3 };
    let t = MTuning::default();
    let base = eta_robust(&p, &SarDesign::new(y.clone(), z.clone(), &w).unwrap(), &t).unwrap();
    let mut big = y.clone();
    big[7] = 1e6;
    let e = eta_robust(&p, &SarDesign::new(big, z.clone(), &w).unwrap(), &t).unwrap();
    let mut bigger = y;
    bigger[7] = 1e12;
    let e2 = eta_robust(&p, &SarDesign::new(bigger, z, &w).unwrap(), &t).unwrap();
    // Every block saturates: moving from 10⁶ to 10¹² changes nothing.
    assert!((&e - &e2).amax() < 1e-9);
    let n_neighbors = 5.0;
    assert!((e[0] - base[0]).abs() <= 2.0 * t.c1 * n_neighbors);
}

#[test]
fn m_fit_agrees_with_ml_on_clean_data() {
    let w = grid_contiguity(20, 20, Contiguity::Rook).unwrap();
    let (y, z) = sar_data(&w, 3, &[1.0, 1.0, -1.0, 0.5], 1.0, 0.4, 12);
    let d = SarDesign::new(y, z, &w).unwrap();
    let ml = ml_fit(&d).unwrap().params;
    let m = m_fit(&d, &MTuning::default(), MInit::MaximumLikelihood).unwrap();
    assert!(m.converged);
    assert!((m.params.rho - ml.rho).abs() < 0.02, "{} vs {}", m.params.rho, ml.rho);
    assert!((&m.params.theta - &ml.theta).norm() / ml.theta.norm() < 0.05);
}

#[test]
fn m_fit_with_huge_cutoffs_is_ml() {
    let w = grid_contiguity(8, 8, Contiguity::Queen).unwrap();
    let (y, z) = sar_data(&w, 2, &[1.0, 1.0, -1.0], 1.0, 0.4, 13);
    let d = SarDesign::new(y, z, &w).unwrap();
    let ml = ml_fit(&d).unwrap().params;
    let t = MTuning { c1: 1e6, c2: 1e6, c3: 1e6, eps_conv: 1e-10, max_iter: 2000, ..Default::default() };
    let m = m_fit(&d, &t, MInit::Lad).unwrap();
    assert!(m.converged, "{} iterations", m.iterations);
    assert!((m.params.as_vector() - ml.as_vector()).amax() < 1e-4);
}

#[test]
fn m_fit_vertical_outliers_shrink_sigma() {
    let w = grid_contiguity(15, 15, Contiguity::Rook).unwrap();
    let (mut y, z) = sar_data(&w, 2, &[1.0, 1.0, -1.0], 1.0, 0.4, 14);
    for i in (0..225).step_by(10) {
        y[i] += 20.0;
    }
    let d = SarDesign::new(y, z, &w).unwrap();
    let ml = ml_fit(&d).unwrap().params;
    let m = m_fit(&d, &MTuning::default(), MInit::MaximumLikelihood).unwrap();
    assert!(m.params.sigma <= ml.sigma / 3.0, "{} vs {}", m.params.sigma, ml.sigma);
    assert!((m.params.rho - 0.4).abs() < (ml.rho - 0.4).abs());
}

#[test]
fn m_fit_fixed_point_is_stable() {
    let w = grid_contiguity(10, 10, Contiguity::Rook).unwrap();
    let (y, z) = sar_data(&w, 2, &[1.0, 1.0, -1.0], 1.0, 0.3, 15);
    let d = SarDesign::new(y, z, &w).unwrap();
    let t = MTuning::default();
    let m = m_fit(&d, &t, MInit::MaximumLikelihood).unwrap();
    assert!(m.converged);
    assert_eq!(m.log.len(), m.iterations);
    let again = m_fit(&d, &MTuning { max_iter: 1, ..t }, MInit::Given(m.params.clone())).unwrap();
    assert!((again.params.as_vector() - m.params.as_vector()).norm() < 10.0 * t.eps_conv);
    let (lo, hi) = w.rho_bounds();
    assert!(m.params.rho > lo && m.params.rho < hi);
}

#[test]
fn m_fit_has_bounded_influence() {
    let w = grid_contiguity(10, 10, Contiguity::Rook).unwrap();
    let (y, z) = sar_data(&w, 2, &[1.0, 1.0, -1.0], 1.0, 0.3, 16);
    let fit_at = |delta: f64| {
        let mut yy = y.clone();
        yy[44] += delta;
        let d = SarDesign::new(yy, z.clone(), &w).unwrap();
        let m = m_fit(&d, &MTuning::default(), MInit::Lad).unwrap();
        (m.params.as_vector(), ml_fit(&d).unwrap().params.as_vector())
    };
    let (m4, ml4) = fit_at(1e4);
    let (m6, ml6) = fit_at(1e6);
    assert!((&m6 - &m4).amax() < 1e-3, "M moved {}", (&m6 - &m4).amax());
    assert!((&ml6 - &ml4).amax() > 10.0);
}

#[test]
fn design_validation() {
    let w = grid_contiguity(3, 3, Contiguity::Rook).unwrap();
    let y = DVector::from_element(9, 1.0);
    let mut z = DMatrix::from_element(9, 2, 1.0);
    assert!(SarDesign::new(y.clone(), z.clone(), &w).is_err());
    for i in 0..9 {
        z[(i, 1)] = i as f64;
    }
    let d = SarDesign::new(y.clone(), z.clone(), &w).unwrap();
    z[(0, 0)] = 2.0;
    assert!(SarDesign::new(y, z, &w).is_err());
    let p = SarParams { theta: DVector::zeros(2), sigma: 1.0, rho: 1.0 };
    assert!(log_likelihood(&p, &d).is_err());
}
