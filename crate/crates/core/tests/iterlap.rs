//! Iterated-Laplace construction against closed-form and grid oracles.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqlap::gaussmix::{GaussianComponent, GaussianMixture};
use seqlap::iterlap::{
    build, fit_weights, laplace_component, nnls, residual_mode, FnTarget, IterLapConfig,
    ResidualOutcome, StopReason, TargetDensity, WeightMethod,
};

fn gaussian_target(mean: DVector<f64>, prec: DMatrix<f64>) -> impl TargetDensity {
    let comp = GaussianComponent::new(mean, prec, 0.0).unwrap();
    let d = comp.dim();
    FnTarget::new(d, move |x: &DVector<f64>| comp.log_density_at(x))
}

#[test]
fn laplace_is_exact_for_gaussian_targets() {
    let prec = dmatrix![2.0, 0.5; 0.5, 1.0];
    let target = gaussian_target(dvector![1.0, -2.0], prec.clone());
    let cfg = IterLapConfig::original();
    let (comp, _) = laplace_component(&target, &dvector![4.0, 4.0], &cfg).unwrap();
    assert!((comp.mean() - dvector![1.0, -2.0]).amax() < 1e-6);
    let got = comp.precision();
    for i in 0..2 {
        for j in 0..2 {
            assert!(
                (got[(i, j)] - prec[(i, j)]).abs() < 1e-5 * prec.amax(),
                "precision entry ({i},{j})"
            );
        }
    }
}

#[test]
fn laplace_on_log_gamma_has_closed_form_mode_and_curvature() {
    // log q(x) = -e^x + 3x: mode at ln 3, second derivative -e^{ln 3} = -3.
    let target = FnTarget::new(1, |x: &DVector<f64>| -x[0].exp() + 3.0 * x[0]);
    let cfg = IterLapConfig::original();
    let (comp, _) = laplace_component(&target, &dvector![0.0], &cfg).unwrap();
    assert!((comp.mean()[0] - 3.0_f64.ln()).abs() < 1e-5);
    assert!((comp.precision()[(0, 0)] - 3.0).abs() < 1e-3);
}

#[test]
fn laplace_mode_matches_grid_argmax_on_banana_target() {
    // Banana-shaped ridge: x1 ~ N(0,1), x2 | x1 ~ N(x1^2, 0.5^2).
    let target = FnTarget::new(2, |x: &DVector<f64>| {
        -0.5 * x[0] * x[0] - 0.5 * (x[1] - x[0] * x[0]).powi(2) / 0.25
    });
    let cfg = IterLapConfig::original();
    let (comp, _) = laplace_component(&target, &dvector![0.8, 0.2], &cfg).unwrap();

    // Grid-search oracle over [-2, 2]^2.
    let steps = 200;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=steps {
        for j in 0..=steps {
            let x = -2.0 + 4.0 * i as f64 / steps as f64;
            let y = -2.0 + 4.0 * j as f64 / steps as f64;
            let v = target.log_density(&dvector![x, y]);
            if v > best.0 {
                best = (v, x, y);
            }
        }
    }
    let res = 4.0 / steps as f64;
    assert!((comp.mean()[0] - best.1).abs() <= res);
    assert!((comp.mean()[1] - best.2).abs() <= res);
}

#[test]
fn laplace_component_is_affine_equivariant() {
    // For q(x) = g(Ax + b): mode maps by A^{-1}(mode_g - b), precision by
    // A^T Q_g A.
    let a = dmatrix![1.2, 0.4; -0.3, 0.9];
    let b = dvector![0.5, -1.0];
    let q_g = dmatrix![1.5, 0.2; 0.2, 0.8];
    let mu_g = dvector![0.7, 0.1];
    let g = GaussianComponent::new(mu_g.clone(), q_g.clone(), 0.0).unwrap();
    let a_cl = a.clone();
    let b_cl = b.clone();
    let target = FnTarget::new(2, move |x: &DVector<f64>| {
        g.log_density_at(&(&a_cl * x + &b_cl))
    });
    let cfg = IterLapConfig::original();
    let (comp, _) = laplace_component(&target, &dvector![0.0, 0.0], &cfg).unwrap();

    let expect_mean = a.clone().try_inverse().unwrap() * (&mu_g - &b);
    let expect_prec = a.transpose() * &q_g * &a;
    assert!((comp.mean() - expect_mean).amax() < 1e-5);
    for i in 0..2 {
        for j in 0..2 {
            assert!(
                (comp.precision()[(i, j)] - expect_prec[(i, j)]).abs()
                    < 1e-5 * expect_prec.amax().max(1.0)
            );
        }
    }
}

fn grid_points_1d(lo: f64, hi: f64, n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| dvector![lo + (hi - lo) * i as f64 / (n - 1) as f64])
        .collect()
}

#[test]
fn fit_weights_recovers_a_single_exact_component() {
    let comp = GaussianComponent::new(dvector![0.5], dmatrix![2.0], 0.0).unwrap();
    let pts = grid_points_1d(-4.0, 5.0, 100);
    let target: Vec<f64> = pts.iter().map(|p| comp.log_density_at(p)).collect();
    let fit = fit_weights(
        &[comp],
        &pts,
        &target,
        WeightMethod::NonnegLeastSquares,
        1e-3,
    )
    .unwrap();
    assert!((fit.weights[0] - 1.0).abs() < 1e-12);
    assert!(fit.log_scale.abs() < 1e-8);
}

#[test]
fn fit_weights_recovers_exact_mixture_weights() {
    let c1 = GaussianComponent::new(dvector![-2.0], dmatrix![1.0], 0.0).unwrap();
    let c2 = GaussianComponent::new(dvector![2.0], dmatrix![1.0], 0.0).unwrap();
    let pts = grid_points_1d(-8.0, 8.0, 200);
    let target: Vec<f64> = pts
        .iter()
        .map(|p| {
            let v = 0.3 * c1.log_density_at(p).exp() + 0.7 * c2.log_density_at(p).exp();
            v.ln()
        })
        .collect();
    for method in [
        WeightMethod::NonnegLeastSquares,
        WeightMethod::ClippedLeastSquares,
    ] {
        let fit = fit_weights(&[c1.clone(), c2.clone()], &pts, &target, method, 1e-3).unwrap();
        assert!((fit.weights[0] - 0.3).abs() < 1e-6, "{method:?}");
        assert!((fit.weights[1] - 0.7).abs() < 1e-6, "{method:?}");
    }
}

#[test]
fn overcomplete_basis_fits_no_worse_on_held_out_grid() {
    let c1 = GaussianComponent::new(dvector![-2.0], dmatrix![1.0], 0.0).unwrap();
    let c2 = GaussianComponent::new(dvector![2.0], dmatrix![1.0], 0.0).unwrap();
    let target_at = |p: &DVector<f64>| -> f64 {
        (0.3 * c1.log_density_at(p).exp() + 0.7 * c2.log_density_at(p).exp()).ln()
    };
    let fit_pts = grid_points_1d(-8.0, 8.0, 160);
    let targets: Vec<f64> = fit_pts.iter().map(target_at).collect();

    let narrow: Vec<GaussianComponent> = [-2.0, 0.0, 2.0]
        .iter()
        .map(|&m| GaussianComponent::new(dvector![m], dmatrix![1.0], 0.0).unwrap())
        .collect();
    let five = vec![
        c1.clone(),
        c2.clone(),
        narrow[0].clone(),
        narrow[1].clone(),
        narrow[2].clone(),
    ];
    let two = vec![c1.clone(), c2.clone()];

    let max_err = |comps: &[GaussianComponent]| -> f64 {
        let fit = fit_weights(comps, &fit_pts, &targets, WeightMethod::NonnegLeastSquares, 0.0)
            .unwrap();
        let held = grid_points_1d(-7.9, 7.9, 97);
        let mut worst = 0.0_f64;
        for p in &held {
            let truth = target_at(p).exp();
            let approx: f64 = comps
                .iter()
                .zip(fit.weights.iter())
                .map(|(c, &w)| w * fit.log_scale.exp() * c.log_density_at(p).exp())
                .sum();
            worst = worst.max((truth - approx).abs() / truth.max(1e-300));
        }
        worst
    };
    assert!(max_err(&five) <= max_err(&two) + 1e-9);
}

#[test]
fn nnls_kkt_holds_for_weight_fit_systems() {
    // Same system shape fit_weights solves: component densities on a grid
    // against a mixture target.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let comps: Vec<GaussianComponent> = [(-3.0, 1.0), (-1.0, 2.0), (0.5, 0.7), (2.5, 1.4)]
        .iter()
        .map(|&(m, q)| GaussianComponent::new(dvector![m], dmatrix![q], 0.0).unwrap())
        .collect();
    let pts = grid_points_1d(-7.0, 7.0, 120);
    use rand::Rng;
    let a = DMatrix::from_fn(pts.len(), comps.len(), |i, j| {
        comps[j].log_density_at(&pts[i]).exp()
    });
    for _ in 0..10 {
        let b = DVector::from_fn(pts.len(), |i, _| {
            let t = 0.6 * comps[0].log_density_at(&pts[i]).exp()
                + 0.4 * comps[3].log_density_at(&pts[i]).exp();
            t * (1.0 + 0.01 * (rng.gen::<f64>() - 0.5))
        });
        let w = nnls(&a, &b).unwrap();
        let g = a.transpose() * (&a * &w - &b);
        let scale = (a.transpose() * &b).amax().max(1.0);
        for (wi, gi) in w.iter().zip(g.iter()) {
            if *wi > 0.0 {
                assert!(gi.abs() <= 1e-8 * scale);
            } else {
                assert!(*gi >= -1e-8 * scale);
            }
        }
    }
}

#[test]
fn residual_mode_signals_convergence_on_exact_fit() {
    let comp = GaussianComponent::new(dvector![0.0], dmatrix![1.0], 0.0).unwrap();
    let mix = GaussianMixture::single(comp.clone());
    let target = FnTarget::new(1, move |x: &DVector<f64>| comp.log_density_at(x));
    let cfg = IterLapConfig::original();
    let candidates = grid_points_1d(-3.0, 3.0, 20);
    // log_scale = 0: c * p~ = q exactly, so the residual is never positive.
    match residual_mode(&target, &mix, 0.0, &candidates, &cfg).unwrap() {
        ResidualOutcome::Converged => {}
        ResidualOutcome::Mode { .. } => panic!("expected convergence signal"),
    }
}

fn bimodal_target() -> impl TargetDensity {
    // Equal modes at -3 and +3, std 0.5.
    FnTarget::new(1, |x: &DVector<f64>| {
        let a = -0.5 * (x[0] + 3.0).powi(2) / 0.25;
        let b = -0.5 * (x[0] - 3.0).powi(2) / 0.25;
        seqlap::linalg::logsumexp(&[a, b])
    })
}

#[test]
fn residual_mode_finds_the_uncovered_mode() {
    let target = bimodal_target();
    // Mixture covering only the left mode, scaled to match it there.
    let left = GaussianComponent::new(dvector![-3.0], dmatrix![4.0], 0.0).unwrap();
    let mix = GaussianMixture::single(left.clone());
    let log_scale = target.log_density(&dvector![-3.0]) - left.log_density_at(&dvector![-3.0]);
    let cfg = IterLapConfig::original();

    let candidates = grid_points_1d(-5.0, 5.0, 41);
    let point = match residual_mode(&target, &mix, log_scale, &candidates, &cfg).unwrap() {
        ResidualOutcome::Mode { point, .. } => point,
        ResidualOutcome::Converged => panic!("residual should be positive on the right"),
    };
    // Grid argmax oracle for the clamped residual.
    let mut best = (f64::NEG_INFINITY, 0.0);
    for p in grid_points_1d(-6.0, 6.0, 2401) {
        let r = target.log_density(&p).exp()
            - (log_scale + mix.log_density(&p).unwrap()).exp();
        if r > best.0 {
            best = (r, p[0]);
        }
    }
    assert!((best.1 - 3.0).abs() < 0.1, "oracle mode should sit near +3");
    assert!((point[0] - 3.0).abs() < 0.1);
}

#[test]
fn residual_ascent_escapes_a_covered_region() {
    let target = bimodal_target();
    let left = GaussianComponent::new(dvector![-3.0], dmatrix![4.0], 0.0).unwrap();
    let mix = GaussianMixture::single(left.clone());
    let log_scale = target.log_density(&dvector![-3.0]) - left.log_density_at(&dvector![-3.0]);
    let cfg = IterLapConfig::original();
    // All candidates in the covered region except one foothold in the tail.
    let mut candidates = grid_points_1d(-4.0, -2.0, 10);
    candidates.push(dvector![1.4]);
    let point = match residual_mode(&target, &mix, log_scale, &candidates, &cfg).unwrap() {
        ResidualOutcome::Mode { point, .. } => point,
        ResidualOutcome::Converged => panic!("positive residual exists"),
    };
    assert!((point[0] - 3.0).abs() < 0.1);
}

#[test]
fn build_stops_after_one_component_for_gaussian_targets() {
    let target = gaussian_target(dvector![0.4, -0.2], dmatrix![1.5, 0.3; 0.3, 0.9]);
    let cfg = IterLapConfig::original();
    let starts = vec![dvector![2.0, 2.0], dvector![-1.0, 0.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let res = build(&target, &cfg, &starts, &mut rng).unwrap();
    assert_eq!(res.mixture.len(), 1);
    assert_eq!(res.stop_reason, StopReason::RelResidual);
    assert!((res.mixture.components()[0].mean() - dvector![0.4, -0.2]).amax() < 1e-5);
}

fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    // n even panels.
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn build_approximates_a_skewed_target_in_total_variation() {
    // Gamma(3, 1) pushed to the log scale; mass normalized by quadrature.
    let target = FnTarget::new(1, |x: &DVector<f64>| -x[0].exp() + 3.0 * x[0]);
    let cfg = IterLapConfig::modified().with_m_max(10);
    let starts = vec![dvector![0.0], dvector![1.5], dvector![-1.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let res = build(&target, &cfg, &starts, &mut rng).unwrap();

    let mass = simpson(|x| (-x.exp() + 3.0 * x).exp(), -9.0, 4.0, 4000);
    let tv = 0.5
        * simpson(
            |x| {
                let truth = (-x.exp() + 3.0 * x).exp() / mass;
                let approx = res.mixture.log_density(&dvector![x]).unwrap().exp();
                (truth - approx).abs()
            },
            -9.0,
            4.0,
            4000,
        );
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn build_diagnostics_are_monotone_and_mixture_is_normalized() {
    let target = bimodal_target();
    let cfg = IterLapConfig::modified().with_m_max(8);
    let starts = vec![dvector![-3.2], dvector![0.5], dvector![2.8]];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let res = build(&target, &cfg, &starts, &mut rng).unwrap();
    assert!(res.mixture.len() >= 2, "both modes need components");
    assert!(res.mixture.is_normalized());
    for pair in res.diagnostics.windows(2) {
        assert!(pair[1].max_rel_residual <= pair[0].max_rel_residual + 1e-12);
    }
    let total: f64 = res
        .mixture
        .components()
        .iter()
        .map(|c| c.log_weight().exp())
        .sum();
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn build_is_deterministic_for_a_fixed_seed() {
    let target = bimodal_target();
    let cfg = IterLapConfig::modified().with_m_max(6);
    let starts = vec![dvector![-3.0], dvector![3.0]];
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        build(&target, &cfg, &starts, &mut rng).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.mixture.len(), b.mixture.len());
    for (ca, cb) in a.mixture.components().iter().zip(b.mixture.components()) {
        assert_eq!(ca.mean(), cb.mean());
        assert_eq!(ca.precision(), cb.precision());
        assert_eq!(ca.log_weight(), cb.log_weight());
    }
    assert_eq!(a.log_scale, b.log_scale);
}
