use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::types::{Covariates, DoseCombination, Hyperparameters, Observation};
use crate::error::GpError;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Diagonal jitter ladder for Cholesky factorization of the kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
    pub factor: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-8,
            max: 1e-4,
            factor: 10.0,
        }
    }
}

impl JitterPolicy {
    /// Same ladder starting `steps` rungs higher; used for retrying a failed fit.
    pub fn escalated(&self, steps: i32) -> Self {
        Self {
            initial: (self.initial * self.factor.powi(steps)).min(self.max),
            ..*self
        }
    }
}

/// Squared-exponential kernel over doses and binary covariates.
pub fn kernel<T: Scalar>(
    a: (&DoseCombination<T>, &Covariates),
    b: (&DoseCombination<T>, &Covariates),
    h: &Hyperparameters<T>,
) -> Result<T, GpError> {
    h.check_point(a.0, a.1)?;
    h.check_point(b.0, b.1)?;
    Ok(scaled_kernel(&h.scale_point(a.0, a.1), &h.scale_point(b.0, b.1)))
}

#[inline]
pub(crate) fn scaled_kernel<T: Scalar>(a: &[T], b: &[T]) -> T {
    let d2 = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    (-d2 / T::lit(2.0)).exp()
}

/// Kernel matrix of the observed inputs with the nugget on the diagonal.
pub fn build_covariance<T: Scalar>(data: &[Observation<T>], h: &Hyperparameters<T>) -> Result<Matrix<T>, GpError> {
    if data.is_empty() {
        return Err(GpError::InsufficientData { needed: 1, have: 0 });
    }
    let scaled = scale_inputs(data, h)?;
    let mut k = kernel_matrix(&scaled);
    k.add_diagonal(h.tau2);
    Ok(k)
}

fn scale_inputs<T: Scalar>(data: &[Observation<T>], h: &Hyperparameters<T>) -> Result<Vec<Vec<T>>, GpError> {
    h.validate()?;
    data.iter()
        .map(|o| {
            h.check_point(&o.dose, &o.covariates)?;
            Ok(h.scale_point(&o.dose, &o.covariates))
        })
        .collect()
}

fn kernel_matrix<T: Scalar>(scaled: &[Vec<T>]) -> Matrix<T> {
    let n = scaled.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k.set(i, i, T::one());
        for j in 0..i {
            let v = scaled_kernel(&scaled[i], &scaled[j]);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

fn factor_with_jitter<T: Scalar>(mut k: Matrix<T>, policy: &JitterPolicy) -> Result<(Cholesky<T>, T), GpError> {
    let n = k.rows();
    let mut jitter = policy.initial;
    let mut applied = 0.0;
    loop {
        k.add_diagonal(T::lit(jitter - applied));
        applied = jitter;
        match Cholesky::factor(&k) {
            Ok(c) => return Ok((c, T::lit(jitter))),
            Err(e) if jitter >= policy.max => {
                return Err(GpError::NotPositiveDefinite {
                    pivot: e.pivot,
                    n,
                    jitter,
                })
            }
            Err(_) => jitter = (jitter * policy.factor).min(policy.max),
        }
    }
}

/// Factorized system shared by likelihood, gradient and posterior routines.
struct System<T> {
    scaled: Vec<Vec<T>>,
    kern: Matrix<T>,
    chol: Cholesky<T>,
    jitter: T,
    beta0: T,
    /// `K⁻¹ (y - beta0 1)`
    alpha: Vec<T>,
    kinv_one: Vec<T>,
    one_kinv_one: T,
    /// `(y - beta0 1)ᵀ K⁻¹ (y - beta0 1)`
    quad: T,
}

impl<T: Scalar> System<T> {
    fn build(data: &[Observation<T>], h: &Hyperparameters<T>, policy: &JitterPolicy) -> Result<Self, GpError> {
        if data.is_empty() {
            return Err(GpError::InsufficientData { needed: 1, have: 0 });
        }
        let scaled = scale_inputs(data, h)?;
        let kern = kernel_matrix(&scaled);
        let mut k = kern.clone();
        k.add_diagonal(h.tau2);
        let (chol, jitter) = factor_with_jitter(k, policy)?;
        let n = data.len();
        let y: Vec<T> = data.iter().map(|o| o.response).collect();
        let kinv_one = chol.solve(&vec![T::one(); n]);
        let one_kinv_one: T = kinv_one.iter().copied().sum();
        let beta0 = dot(&kinv_one, &y) / one_kinv_one;
        let resid: Vec<T> = y.iter().map(|&v| v - beta0).collect();
        let alpha = chol.solve(&resid);
        let quad = dot(&resid, &alpha);
        Ok(Self {
            scaled,
            kern,
            chol,
            jitter,
            beta0,
            alpha,
            kinv_one,
            one_kinv_one,
            quad,
        })
    }

    fn n(&self) -> usize {
        self.scaled.len()
    }

    fn mll(&self, nu: T) -> T {
        let n = T::from_usize(self.n()).unwrap();
        let two_pi = T::lit(std::f64::consts::TAU);
        -(n * (two_pi * nu).ln() + self.chol.log_det() + self.quad / nu) / T::lit(2.0)
    }

    /// Gradient of the log-likelihood at fixed `nu` with respect to
    /// `[ln nu, ln tau2, ln l_1, ..]`.
    fn gradient(&self, h: &Hyperparameters<T>) -> Vec<T> {
        let n = self.n();
        let nu = h.nu;
        let half = T::lit(0.5);
        let kinv = self.chol.inverse();
        let dims = h.dose_dims() + h.covariate_dims();
        let mut grad = vec![T::zero(); 2 + dims];
        grad[0] = -T::from_usize(n).unwrap() * half + self.quad / (T::lit(2.0) * nu);

        let alpha_sq: T = dot(&self.alpha, &self.alpha);
        let trace: T = (0..n).map(|i| kinv.get(i, i)).sum();
        grad[1] = half * h.tau2 * (alpha_sq / nu - trace);

        // dK_ab/d ln l_j = K_ab (x_aj - x_bj)^2 / l_j^2; symmetric with zero diagonal.
        for a in 0..n {
            for b in 0..a {
                let w = (self.alpha[a] * self.alpha[b] / nu - kinv.get(a, b)) * self.kern.get(a, b);
                let (xa, xb) = (&self.scaled[a], &self.scaled[b]);
                for j in 0..dims {
                    let d = xa[j] - xb[j];
                    grad[2 + j] = grad[2 + j] + w * d * d;
                }
            }
        }
        grad
    }
}

/// Gaussian log-likelihood `log N(y; beta0 1, nu K)` with the constant mean
/// profiled out by its GLS estimate.
pub fn marginal_log_likelihood<T: Scalar>(data: &[Observation<T>], h: &Hyperparameters<T>) -> Result<T, GpError> {
    marginal_log_likelihood_with(data, h, &JitterPolicy::default())
}

pub fn marginal_log_likelihood_with<T: Scalar>(
    data: &[Observation<T>],
    h: &Hyperparameters<T>,
    policy: &JitterPolicy,
) -> Result<T, GpError> {
    Ok(System::build(data, h, policy)?.mll(h.nu))
}

/// Log-likelihood and its analytic gradient with respect to the logarithms of
/// `[nu, tau2, dose lengthscales.., covariate lengthscales..]`.
pub fn mll_gradient<T: Scalar>(data: &[Observation<T>], h: &Hyperparameters<T>) -> Result<(T, Vec<T>), GpError> {
    let sys = System::build(data, h, &JitterPolicy::default())?;
    Ok((sys.mll(h.nu), sys.gradient(h)))
}

/// Likelihood with `nu` concentrated out (`nu = quad / n`, clamped to
/// `nu_bounds`), its gradient in the remaining log-parameters
/// `[ln tau2, ln l..]`, and the `nu` used.
pub(crate) fn profiled_objective<T: Scalar>(
    data: &[Observation<T>],
    h: &mut Hyperparameters<T>,
    nu_bounds: (f64, f64),
    policy: &JitterPolicy,
) -> Result<(T, Vec<T>), GpError> {
    let sys = System::build(data, h, policy)?;
    let nu_hat = sys.quad / T::from_usize(sys.n()).unwrap();
    h.nu = nu_hat.max(T::lit(nu_bounds.0)).min(T::lit(nu_bounds.1));
    h.beta0 = sys.beta0;
    let mut g = sys.gradient(h);
    g.remove(0);
    Ok((sys.mll(h.nu), g))
}

/// Pointwise posterior of the latent objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T = f64> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> Prediction<T> {
    pub fn sd(&self) -> T {
        self.variance.sqrt()
    }
}

/// Joint posterior over a finite set of query points.
#[derive(Debug, Clone)]
pub struct JointPosterior<T = f64> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
}

/// A GP conditioned on data at fixed hyperparameters. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel<T = f64> {
    data: Vec<Observation<T>>,
    hyper: Hyperparameters<T>,
    scaled: Vec<Vec<T>>,
    chol: Cholesky<T>,
    jitter: T,
    alpha: Vec<T>,
    kinv_one: Vec<T>,
    one_kinv_one: T,
    mll: T,
}

impl<T: Scalar> GpModel<T> {
    pub fn condition(data: Vec<Observation<T>>, hyper: Hyperparameters<T>) -> Result<Self, GpError> {
        Self::condition_with(data, hyper, &JitterPolicy::default())
    }

    pub fn condition_with(
        data: Vec<Observation<T>>,
        mut hyper: Hyperparameters<T>,
        policy: &JitterPolicy,
    ) -> Result<Self, GpError> {
        let sys = System::build(&data, &hyper, policy)?;
        hyper.beta0 = sys.beta0;
        let mll = sys.mll(hyper.nu);
        Ok(Self {
            data,
            hyper,
            scaled: sys.scaled,
            chol: sys.chol,
            jitter: sys.jitter,
            alpha: sys.alpha,
            kinv_one: sys.kinv_one,
            one_kinv_one: sys.one_kinv_one,
            mll,
        })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters<T> {
        &self.hyper
    }

    pub fn data(&self) -> &[Observation<T>] {
        &self.data
    }

    /// Diagonal jitter that was added on top of the nugget.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn beta0(&self) -> T {
        self.hyper.beta0
    }

    pub fn log_likelihood(&self) -> T {
        self.mll
    }

    pub fn dose_dims(&self) -> usize {
        self.hyper.dose_dims()
    }

    pub fn covariate_dims(&self) -> usize {
        self.hyper.covariate_dims()
    }

    fn cross_kernel(&self, q: &[T]) -> Vec<T> {
        self.scaled.iter().map(|x| scaled_kernel(x, q)).collect()
    }

    pub fn predict(&self, dose: &DoseCombination<T>, z: &Covariates) -> Result<Prediction<T>, GpError> {
        self.hyper.check_point(dose, z)?;
        Ok(self.predict_scaled(&self.hyper.scale_point(dose, z)))
    }

    fn predict_scaled(&self, q: &[T]) -> Prediction<T> {
        let k = self.cross_kernel(q);
        let mean = self.hyper.beta0 + dot(&k, &self.alpha);
        let v = self.chol.solve_lower(&k);
        let gls = T::one() - dot(&k, &self.kinv_one);
        let var = self.hyper.nu * (T::one() - dot(&v, &v) + gls * gls / self.one_kinv_one);
        Prediction {
            mean,
            variance: var.max(T::zero()),
        }
    }

    /// Predictions at many points; avoids re-validating dimensions per point.
    pub fn predict_many(&self, points: &[(DoseCombination<T>, Covariates)]) -> Result<Vec<Prediction<T>>, GpError> {
        points.iter().map(|(d, z)| self.predict(d, z)).collect()
    }

    pub fn joint(&self, points: &[(DoseCombination<T>, Covariates)]) -> Result<JointPosterior<T>, GpError> {
        let scaled: Vec<Vec<T>> = points
            .iter()
            .map(|(d, z)| {
                self.hyper.check_point(d, z)?;
                Ok(self.hyper.scale_point(d, z))
            })
            .collect::<Result<_, GpError>>()?;
        let m = scaled.len();
        let ks: Vec<Vec<T>> = scaled.iter().map(|q| self.cross_kernel(q)).collect();
        let vs: Vec<Vec<T>> = ks.iter().map(|k| self.chol.solve_lower(k)).collect();
        let gls: Vec<T> = ks.iter().map(|k| T::one() - dot(k, &self.kinv_one)).collect();
        let mean = ks.iter().map(|k| self.hyper.beta0 + dot(k, &self.alpha)).collect();
        let mut cov = Matrix::zeros(m, m);
        for a in 0..m {
            for b in 0..=a {
                let prior = if a == b {
                    T::one()
                } else {
                    scaled_kernel(&scaled[a], &scaled[b])
                };
                let mut c = self.hyper.nu * (prior - dot(&vs[a], &vs[b]) + gls[a] * gls[b] / self.one_kinv_one);
                if a == b {
                    c = c.max(T::zero());
                }
                cov.set(a, b, c);
                cov.set(b, a, c);
            }
        }
        Ok(JointPosterior { mean, covariance: cov })
    }

    /// `draws` joint posterior samples of the latent function at `points`;
    /// each inner vector has one value per point.
    pub fn sample_joint<R: Rng + ?Sized>(
        &self,
        points: &[(DoseCombination<T>, Covariates)],
        draws: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<T>>, GpError> {
        if points.is_empty() {
            return Err(GpError::InvalidArgument("no query points".into()));
        }
        let post = self.joint(points)?;
        let factor = psd_factor(&post.covariance)?;
        let m = points.len();
        let mut z = vec![T::zero(); m];
        Ok((0..draws)
            .map(|_| {
                for v in z.iter_mut() {
                    *v = T::lit(rng.sample::<f64, _>(StandardNormal));
                }
                (0..m)
                    .map(|i| post.mean[i] + dot(&factor.row(i)[..=i], &z[..=i]))
                    .collect()
            })
            .collect())
    }
}

/// Lower factor of a symmetric positive semidefinite matrix. Pivots that are
/// negligible relative to the largest diagonal entry are treated as exact
/// zeros (rank deficiency); clearly negative pivots are an error.
pub(crate) fn psd_factor<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>, GpError> {
    let n = a.rows();
    let scale = (0..n).map(|i| a.get(i, i)).fold(T::zero(), T::max);
    let tol = scale * T::lit(1e-10).max(T::epsilon() * T::lit(64.0));
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = a.get(j, j) - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if d < -tol.max(scale * T::lit(1e-6)) || !d.is_finite() {
            return Err(GpError::NotPositiveDefinite {
                pivot: j,
                n,
                jitter: 0.0,
            });
        }
        if d <= tol {
            continue;
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in (j + 1)..n {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            l.set(i, j, (a.get(i, j) - s) / djj);
        }
    }
    Ok(l)
}
