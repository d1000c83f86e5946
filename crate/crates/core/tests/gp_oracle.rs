mod common;

use approx::assert_relative_eq;
use bayesdose_core::gp::{
    fit, marginal_log_likelihood, mll_gradient, Covariates, DoseCombination, FitConfig, GpModel, Hyperparameters,
    Observation,
};
use bayesdose_core::sobol::sobol_points;
use common::{conditioned_problem, random_point, se_kernel, Oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / b.abs().max(scale)
}

#[test]
fn posterior_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.gen_range(2..=20);
        let prob = conditioned_problem(&mut rng, n, 1e5);
        let model = GpModel::condition(prob.data.clone(), prob.hyper.clone()).unwrap();
        let oracle = Oracle::new(&prob.data, &prob.hyper, model.jitter());
        worst.0 = worst.0.max(rel(model.beta0(), oracle.beta0, 1e-300));
        for _ in 0..10 {
            let (d, z) = random_point(&mut rng, prob.covariates);
            let p = model.predict(&d, &z).unwrap();
            let (m, v) = oracle.predict(&d, &z);
            worst.1 = worst.1.max(rel(p.mean, m, 1e-300));
            // on the prior-variance scale
            worst.2 = worst.2.max(rel(p.variance, v, prob.hyper.nu));
        }
    }
    assert!(worst.0 < 1e-10, "beta0 relative error {:e}", worst.0);
    assert!(worst.1 < 1e-8, "mean relative error {:e}", worst.1);
    assert!(worst.2 < 1e-8, "variance relative error {:e}", worst.2);
}

#[test]
fn log_likelihood_matches_dense_solve() {
    let data: Vec<Observation> = [
        ([0.0, 0.0], 1.0),
        ([0.5, 0.25], -0.4),
        ([1.0, 0.5], 0.3),
        ([0.25, 1.0], 2.1),
        ([0.75, 0.75], -1.2),
    ]
    .iter()
    .map(|(d, y)| Observation::new(DoseCombination(d.to_vec()), Covariates::none(), *y).unwrap())
    .collect();
    let h = Hyperparameters::new(1.7, 0.05, vec![0.4, 0.8], vec![]);
    let model = GpModel::condition(data.clone(), h.clone()).unwrap();
    let oracle = Oracle::new(&data, &h, model.jitter());
    assert_relative_eq!(
        marginal_log_likelihood(&data, &h).unwrap(),
        oracle.log_likelihood(),
        max_relative = 1e-10
    );
}

#[test]
fn kernel_oracle_agrees_on_covariate_distance() {
    let h = Hyperparameters::new(1.0, 0.0, vec![0.5, 0.5], vec![2.0]);
    let a = (DoseCombination(vec![0.25, 0.5]), Covariates(vec![0]));
    let b = (DoseCombination(vec![0.75, 0.0]), Covariates(vec![1]));
    let k = bayesdose_core::gp::kernel((&a.0, &a.1), (&b.0, &b.1), &h).unwrap();
    assert_relative_eq!(k, se_kernel(&[0.5, 1.0, 0.0], &[1.5, 0.0, 0.5]), max_relative = 1e-15);
}

fn log_params(h: &Hyperparameters) -> Vec<f64> {
    let mut v = vec![h.nu.ln(), h.tau2.ln()];
    v.extend(h.dose_lengthscales.iter().map(|l| l.ln()));
    v.extend(h.covariate_lengthscales.iter().map(|l| l.ln()));
    v
}

fn from_log(v: &[f64], dose_dims: usize) -> Hyperparameters {
    Hyperparameters::new(
        v[0].exp(),
        v[1].exp(),
        v[2..2 + dose_dims].iter().map(|x| x.exp()).collect(),
        v[2 + dose_dims..].iter().map(|x| x.exp()).collect(),
    )
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..20 {
        let n = rng.gen_range(5..=20);
        let prob = conditioned_problem(&mut rng, n, 1e5);
        let (_, grad) = mll_gradient(&prob.data, &prob.hyper).unwrap();
        let x = log_params(&prob.hyper);
        let step = 1e-5;
        let fd: Vec<f64> = (0..x.len())
            .map(|i| {
                let mut up = x.clone();
                let mut down = x.clone();
                up[i] += step;
                down[i] -= step;
                let f = |v: &[f64]| marginal_log_likelihood(&prob.data, &from_log(v, 2)).unwrap();
                (f(&up) - f(&down)) / (2.0 * step)
            })
            .collect();
        let err: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(
            err / norm < 1e-5,
            "case {case}: relative gradient error {:e}",
            err / norm
        );
    }
}

#[test]
fn fit_reaches_likelihood_of_generating_parameters() {
    let points = sobol_points(2, 40).unwrap();
    let truth = Hyperparameters::new(2.0, 0.05, vec![0.3, 0.6], vec![]);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = points.len();
        let k = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            let a = [points[i][0] / 0.3, points[i][1] / 0.6];
            let b = [points[j][0] / 0.3, points[j][1] / 0.6];
            truth.nu * (se_kernel(&a, &b) + if i == j { truth.tau2 } else { 0.0 })
        });
        let l = k.cholesky().unwrap().l();
        let z = nalgebra::DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y = l * z;
        let data: Vec<Observation> = points
            .iter()
            .zip(y.iter())
            .map(|(p, &y)| Observation::new(DoseCombination(p.clone()), Covariates::none(), 1.0 + y).unwrap())
            .collect();
        let at_truth = marginal_log_likelihood(&data, &truth).unwrap();
        let fitted = fit(&data, &FitConfig::default(), &mut rng).unwrap();
        assert!(
            fitted.model.log_likelihood() >= at_truth - 1e-9,
            "seed {seed}: fitted {} < truth {at_truth}",
            fitted.model.log_likelihood()
        );
        for (s, f) in fitted
            .report
            .start_log_likelihoods
            .iter()
            .zip(&fitted.report.final_log_likelihoods)
        {
            if let (Some(s), Some(f)) = (s, f) {
                assert!(f >= s);
            }
        }
    }
}
