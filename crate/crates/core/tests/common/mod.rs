//! Dense-inverse reference implementation of the GP posterior, independent of
//! the crate's Cholesky code, plus random problem generators.
#![allow(dead_code)]

use bayesdose_core::gp::{Covariates, DoseCombination, Hyperparameters, Observation};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub struct Problem {
    pub data: Vec<Observation>,
    pub hyper: Hyperparameters,
    pub covariates: usize,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

pub fn random_point<R: Rng>(rng: &mut R, p: usize) -> (DoseCombination, Covariates) {
    let d = DoseCombination(vec![rng.gen::<f64>(), rng.gen::<f64>()]);
    let z = Covariates((0..p).map(|_| rng.gen_range(0..=1u8)).collect());
    (d, z)
}

/// `n` points in two dose dimensions and up to two covariates with
/// hyperparameters drawn log-uniformly from the given ranges.
pub fn random_problem<R: Rng>(rng: &mut R, n: usize, tau2: (f64, f64), lengthscale: (f64, f64)) -> Problem {
    let p = rng.gen_range(0..=2);
    let data = (0..n)
        .map(|_| {
            let (d, z) = random_point(rng, p);
            Observation::new(d, z, rng.gen_range(-3.0..3.0)).unwrap()
        })
        .collect();
    let hyper = Hyperparameters::new(
        log_uniform(rng, 0.1, 10.0),
        log_uniform(rng, tau2.0, tau2.1),
        (0..2).map(|_| log_uniform(rng, lengthscale.0, lengthscale.1)).collect(),
        (0..p).map(|_| log_uniform(rng, lengthscale.0, lengthscale.1)).collect(),
    );
    Problem {
        data,
        hyper,
        covariates: p,
    }
}

/// 2-norm condition number of `K = kernel + tau2 I`.
pub fn condition_number(data: &[Observation], h: &Hyperparameters) -> f64 {
    let x: Vec<Vec<f64>> = data.iter().map(|o| inputs(&o.dose, &o.covariates, h)).collect();
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| se_kernel(&x[i], &x[j]) + if i == j { h.tau2 } else { 0.0 });
    let sv = k.singular_values();
    sv.max() / sv.min()
}

/// Like [`random_problem`] over the full fitting bounds, redrawn until the
/// covariance has condition number at most `max_condition`. Two correct f64
/// algorithms can only be expected to agree to about `condition * eps`.
pub fn conditioned_problem<R: Rng>(rng: &mut R, n: usize, max_condition: f64) -> Problem {
    loop {
        let prob = random_problem(rng, n, (1e-8, 10.0), (0.01, 10.0));
        if condition_number(&prob.data, &prob.hyper) <= max_condition {
            return prob;
        }
    }
}

fn inputs(d: &DoseCombination, z: &Covariates, h: &Hyperparameters) -> Vec<f64> {
    let mut v: Vec<f64> = d.0.iter().zip(&h.dose_lengthscales).map(|(x, l)| x / l).collect();
    v.extend(
        z.0.iter()
            .zip(&h.covariate_lengthscales)
            .map(|(&x, l)| f64::from(x) / l),
    );
    v
}

pub fn se_kernel(a: &[f64], b: &[f64]) -> f64 {
    (-0.5 * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
}

pub struct Oracle {
    x: Vec<Vec<f64>>,
    kinv: DMatrix<f64>,
    y: DVector<f64>,
    pub beta0: f64,
    one_kinv_one: f64,
    nu: f64,
    hyper: Hyperparameters,
    logdet: f64,
}

impl Oracle {
    /// `extra` is added to the diagonal on top of `tau2` (the model's jitter).
    pub fn new(data: &[Observation], h: &Hyperparameters, extra: f64) -> Oracle {
        let n = data.len();
        let x: Vec<Vec<f64>> = data.iter().map(|o| inputs(&o.dose, &o.covariates, h)).collect();
        let k = DMatrix::from_fn(n, n, |i, j| {
            se_kernel(&x[i], &x[j]) + if i == j { h.tau2 + extra } else { 0.0 }
        });
        let logdet = k.clone().lu().determinant().ln();
        let kinv = k.try_inverse().expect("invertible covariance");
        let y = DVector::from_iterator(n, data.iter().map(|o| o.response));
        let one = DVector::from_element(n, 1.0);
        let one_kinv_one = (one.transpose() * &kinv * &one)[0];
        let beta0 = (one.transpose() * &kinv * &y)[0] / one_kinv_one;
        Oracle {
            x,
            kinv,
            y,
            beta0,
            one_kinv_one,
            nu: h.nu,
            hyper: h.clone(),
            logdet,
        }
    }

    pub fn predict(&self, d: &DoseCombination, z: &Covariates) -> (f64, f64) {
        let q = inputs(d, z, &self.hyper);
        let n = self.x.len();
        let k = DVector::from_iterator(n, self.x.iter().map(|x| se_kernel(x, &q)));
        let resid = &self.y - DVector::from_element(n, self.beta0);
        let kinv_k = &self.kinv * &k;
        let mean = self.beta0 + kinv_k.dot(&resid);
        let gls = 1.0 - kinv_k.sum();
        let var = self.nu * (1.0 - k.dot(&kinv_k) + gls * gls / self.one_kinv_one);
        (mean, var)
    }

    /// Gaussian log-density of `y` under `N(beta0 1, nu K)` at the GLS `beta0`.
    pub fn log_likelihood(&self) -> f64 {
        let n = self.x.len() as f64;
        let r = &self.y - DVector::from_element(self.x.len(), self.beta0);
        let quad = (r.transpose() * &self.kinv * &r)[0];
        -0.5 * (quad / self.nu + self.logdet + n * self.nu.ln() + n * (2.0 * std::f64::consts::PI).ln())
    }
}
