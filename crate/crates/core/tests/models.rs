//! Joint-density and non-identifiability checks against exact oracles.

use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use seqlap::linalg::{logsumexp, LN_2PI};
use seqlap::models::{
    apply_nid, dlm_loglik, joint_log_density, simulate, ExampleModel, ExampleSpec,
    LinearGaussianSsm, NaturalParams, NidTransform, ObsKind, Param, StateSpaceModel,
};

fn example_model() -> ExampleModel {
    let spec = ExampleSpec::new(
        ObsKind::Square,
        vec![Param::A, Param::C1, Param::C2],
        NaturalParams::reference(),
    );
    ExampleModel::new(spec, &[0.0, 0.5, 1.0, -3.0], &[4.0, 0.81, 1.0, 1.0]).unwrap()
}

#[test]
fn joint_log_density_base_case_is_prior_plus_first_obs() {
    let model = example_model();
    let x = DMatrix::from_element(1, 1, 0.4);
    let phi = dvector![0.7, 1.2, -0.6];
    let y = [20.0];
    let z = [0.1];
    let got = joint_log_density(&model, &y, &z, &x, &phi).unwrap();
    let joint_point = dvector![0.4, 0.7, 1.2, -0.6];
    let expect = model.prior().log_density_at(&joint_point)
        + model.obs_loglik(&y, &[0.4], phi.as_slice(), z[0]);
    assert!((got - expect).abs() < 1e-12);
}

#[test]
fn joint_log_density_telescopes() {
    let model = example_model();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let t = 6;
        let y: Vec<f64> = (0..t).map(|_| rng.gen::<f64>() * 40.0).collect();
        let z: Vec<f64> = (0..t).map(|_| rng.gen::<f64>() - 0.5).collect();
        let x = DMatrix::from_fn(1, t, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let phi = dvector![
            rng.gen::<f64>(),
            rng.gen::<f64>() * 2.0,
            rng.gen::<f64>() - 1.0
        ];
        let full = joint_log_density(&model, &y, &z, &x, &phi).unwrap();
        let head = joint_log_density(
            &model,
            &y[..t - 1],
            &z[..t - 1],
            &x.columns(0, t - 1).into_owned(),
            &phi,
        )
        .unwrap();
        let last_x = x.column(t - 1).clone_owned();
        let prev_x = x.column(t - 2).clone_owned();
        let step = model.transition_loglik(last_x.as_slice(), prev_x.as_slice(), phi.as_slice())
            + model.obs_loglik(&y[t - 1..], last_x.as_slice(), phi.as_slice(), z[t - 1]);
        assert!((full - (head + step)).abs() < 1e-10);
    }
}

/// Dense Gaussian posterior of the state path of the linear model,
/// `log p(x_path | y)`, built from banded prior precision plus the
/// observation precision. Used in the marginal-likelihood identity below.
fn dense_path_posterior_logpdf(
    model_a: f64,
    sigma_u2: f64,
    sigma_v2: f64,
    x1_mean: f64,
    x1_var: f64,
    y: &[f64],
    x_star: &DVector<f64>,
) -> f64 {
    let n = y.len();
    // z = B x - b with B unit "differencing" rows; prior precision B^T D B.
    let mut b_mat = DMatrix::<f64>::zeros(n, n);
    b_mat[(0, 0)] = 1.0;
    for t in 1..n {
        b_mat[(t, t)] = 1.0;
        b_mat[(t, t - 1)] = -model_a;
    }
    let mut d = DMatrix::<f64>::zeros(n, n);
    d[(0, 0)] = 1.0 / x1_var;
    for t in 1..n {
        d[(t, t)] = 1.0 / sigma_u2;
    }
    let prior_prec = b_mat.transpose() * &d * &b_mat;
    let mut prior_mean = DVector::zeros(n);
    prior_mean[0] = x1_mean;
    for t in 1..n {
        prior_mean[t] = model_a * prior_mean[t - 1];
    }
    let post_prec = &prior_prec + DMatrix::<f64>::identity(n, n) / sigma_v2;
    let yv = DVector::from_row_slice(y);
    let rhs = &prior_prec * &prior_mean + &yv / sigma_v2;
    let chol = nalgebra::Cholesky::new(post_prec.clone()).unwrap();
    let post_mean = chol.solve(&rhs);
    let log_det = 2.0 * (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
    let diff = x_star - &post_mean;
    0.5 * log_det - 0.5 * n as f64 * LN_2PI - 0.5 * (&post_prec * &diff).dot(&diff)
}

#[test]
fn joint_density_minus_path_posterior_gives_kalman_marginal_likelihood() {
    // log p(y) = log p(y, x*, phi*) - log p(x*, phi* | y) for any (x*, phi*);
    // the right side combines joint_log_density with a dense posterior and
    // the left side is the Kalman prediction-error decomposition.
    let (a, su, sv, x1m, x1v) = (0.85, 0.7, 1.2, 0.4, 2.5);
    let model = LinearGaussianSsm::new(a, su, sv, x1m, x1v).unwrap();
    let n = 25;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
    let z = vec![0.0; n];
    let kalman_ll = model.kalman().filter(&y).unwrap().loglik;

    for _ in 0..5 {
        let x_star = DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let phi_star = dvector![rng.gen::<f64>() - 0.5];
        let x_mat = DMatrix::from_fn(1, n, |_, t| x_star[t]);
        let joint = joint_log_density(&model, &y, &z, &x_mat, &phi_star).unwrap();
        let phi_logpdf = -0.5 * LN_2PI - 0.5 * phi_star[0] * phi_star[0];
        let path_post =
            dense_path_posterior_logpdf(a, su * su, sv * sv, x1m, x1v, &y, &x_star);
        let marginal = joint - (path_post + phi_logpdf);
        assert!(
            (marginal - kalman_ll).abs() < 1e-8,
            "candidate formula: {marginal} vs kalman {kalman_ll}"
        );
    }
}

#[test]
fn dlm_loglik_single_observation_closed_form() {
    let (x1m, x1v, su2, sv2) = (0.7, 3.0, 0.5, 2.0);
    let ll = dlm_loglik(&[1.9], su2, sv2, x1m, x1v);
    let s = x1v + sv2;
    let expect = -0.5 * (LN_2PI + s.ln() + (1.9 - x1m) * (1.9 - x1m) / s);
    assert!((ll - expect).abs() < 1e-12);
}

/// Monte-Carlo estimate of `log p(y_{1:n} | x_1, phi)` for the square-kind
/// example model over shared standard-normal innovations, so transformed and
/// untransformed parameter sets see the same noise paths.
fn mc_x_marginal_loglik(
    params: &NaturalParams,
    x1: f64,
    y: &[f64],
    z: &[f64],
    eps: &[Vec<f64>],
) -> f64 {
    let n = y.len();
    let sv2 = params.sigma_v * params.sigma_v;
    let mut path_logliks = Vec::with_capacity(eps.len());
    for path in eps {
        let mut x = x1;
        let mut ll = 0.0;
        for t in 0..n {
            if t > 0 {
                x = params.a * x + params.sigma_u * path[t];
            }
            let alpha = ExampleModel::alpha(params.c1, params.c2, x, z[t]);
            let resid = y[t] - alpha * alpha;
            ll += -0.5 * (LN_2PI + sv2.ln()) - resid * resid / (2.0 * sv2);
        }
        path_logliks.push(ll);
    }
    logsumexp(&path_logliks) - (eps.len() as f64).ln()
}

#[test]
fn nid_transforms_leave_the_likelihood_invariant_pathwise() {
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let base = NaturalParams::reference();
    let spec = ExampleSpec::new(ObsKind::Square, vec![], base);
    for trial in 0..20 {
        let params = NaturalParams {
            a: 0.5 + 0.4 * rng.gen::<f64>(),
            c1: 0.5 + 2.0 * rng.gen::<f64>(),
            c2: -1.5 + rng.gen::<f64>(),
            sigma_u: 0.1 + 0.5 * rng.gen::<f64>(),
            sigma_v: 5.0 + 10.0 * rng.gen::<f64>(),
        };
        let sim = simulate(&spec, n, &params, 1000 + trial);
        let x1 = sim.x[0];
        let eps: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let base_ll = mc_x_marginal_loglik(&params, x1, &sim.y, &sim.z, &eps);

        let beta = 0.25 + 3.0 * rng.gen::<f64>();
        let (p_scaled, x_scaled) =
            apply_nid(&NidTransform::C1SigmaU { beta }, &params, &sim.x).unwrap();
        let scaled_ll = mc_x_marginal_loglik(&p_scaled, x_scaled[0], &sim.y, &sim.z, &eps);
        assert!(
            (base_ll - scaled_ll).abs() < 1e-8,
            "scale transform changed the likelihood: {base_ll} vs {scaled_ll}"
        );

        let (p_flip, x_flip) = apply_nid(&NidTransform::C1Sign, &params, &sim.x).unwrap();
        // Sign flip also flips the innovations' effect: u' = -u, same law.
        let eps_neg: Vec<Vec<f64>> = eps
            .iter()
            .map(|p| p.iter().map(|v| -v).collect())
            .collect();
        let flip_ll = mc_x_marginal_loglik(&p_flip, x_flip[0], &sim.y, &sim.z, &eps_neg);
        assert!(
            (base_ll - flip_ll).abs() < 1e-8,
            "sign transform changed the likelihood: {base_ll} vs {flip_ll}"
        );
    }
}
