//! Box-constrained limited-memory BFGS for small smooth problems.
//!
//! Active bounds are handled by freezing coordinates whose gradient points out
//! of the box and projecting trial steps back onto it. Every accepted step
//! satisfies an Armijo decrease, so the returned value is never worse than the
//! value at the (projected) starting point.

use std::collections::VecDeque;

use crate::linalg::dot;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop when an accepted step improves the objective by less than this.
    pub f_tol: f64,
    /// Stop when the projected gradient's largest component is below this.
    pub g_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            f_tol: 1e-8,
            g_tol: 1e-9,
            memory: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

fn project<T: Scalar>(x: &mut [T], lower: &[T], upper: &[T]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.max(lo).min(hi);
    }
}

/// Minimizes `f` over the box `[lower, upper]`. `f` returns the value and
/// gradient, or `None` where it cannot be evaluated. Returns `None` only when
/// the starting point itself cannot be evaluated.
pub fn minimize<T: Scalar, F>(mut f: F, x0: &[T], lower: &[T], upper: &[T], opts: &LbfgsOptions) -> Option<Minimum<T>>
where
    F: FnMut(&[T]) -> Option<(T, Vec<T>)>,
{
    let dim = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x).filter(|(v, _)| v.is_finite())?;
    let mut memory: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(opts.memory);
    let f_tol = T::lit(opts.f_tol).max(T::epsilon() * T::lit(16.0) * fx.abs());
    let c1 = T::lit(1e-4);

    for iter in 0..opts.max_iters {
        let free: Vec<bool> = (0..dim)
            .map(|i| !((x[i] <= lower[i] && g[i] > T::zero()) || (x[i] >= upper[i] && g[i] < T::zero())))
            .collect();
        let pg: Vec<T> = (0..dim).map(|i| if free[i] { g[i] } else { T::zero() }).collect();
        let pg_norm = pg.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if pg_norm <= T::lit(opts.g_tol) {
            return Some(Minimum {
                x,
                value: fx,
                iterations: iter,
                converged: true,
            });
        }

        let mut dir = two_loop(&pg, &memory);
        for i in 0..dim {
            if !free[i] {
                dir[i] = T::zero();
            }
        }
        if !(dot(&dir, &pg) < T::zero()) {
            memory.clear();
            dir = pg.iter().map(|v| -*v).collect();
        }

        let mut step = if memory.is_empty() {
            T::one().min(T::one() / pg_norm)
        } else {
            T::one()
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<T> = x.iter().zip(&dir).map(|(&xi, &di)| xi + step * di).collect();
            project(&mut trial, lower, upper);
            let delta: Vec<T> = trial.iter().zip(&x).map(|(a, b)| *a - *b).collect();
            let decrease = dot(&g, &delta);
            if decrease >= T::zero() {
                step = step / T::lit(2.0);
                continue;
            }
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + c1 * decrease {
                    accepted = Some((trial, ft, gt, delta));
                    break;
                }
            }
            step = step / T::lit(2.0);
        }

        let Some((xn, fxn, gn, s)) = accepted else {
            if memory.is_empty() {
                return Some(Minimum {
                    x,
                    value: fx,
                    iterations: iter,
                    converged: false,
                });
            }
            memory.clear();
            continue;
        };
        let yv: Vec<T> = gn.iter().zip(&g).map(|(a, b)| *a - *b).collect();
        let sy = dot(&s, &yv);
        if sy > T::epsilon() * dot(&yv, &yv) {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, yv, T::one() / sy));
        }
        let improvement = fx - fxn;
        x = xn;
        fx = fxn;
        g = gn;
        if improvement < f_tol {
            return Some(Minimum {
                x,
                value: fx,
                iterations: iter + 1,
                converged: true,
            });
        }
    }
    Some(Minimum {
        x,
        value: fx,
        iterations: opts.max_iters,
        converged: false,
    })
}

fn two_loop<T: Scalar>(g: &[T], memory: &VecDeque<(Vec<T>, Vec<T>, T)>) -> Vec<T> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = *rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi = *qi - a * *yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v = *v * gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = *rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi = *qi + (a - b) * *si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((v, g))
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let opts = LbfgsOptions {
            f_tol: 1e-14,
            ..Default::default()
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn respects_active_bound() {
        // minimum of (x-3)^2 + (y+1)^2 on [0,2]x[0,2] is (2,0)
        let f = |x: &[f64]| {
            Some((
                (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2),
                vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)],
            ))
        };
        let m = minimize(f, &[0.5, 1.5], &[0.0, 0.0], &[2.0, 2.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(m.x, vec![2.0, 0.0]);
        assert!(m.converged);
    }

    #[test]
    fn never_worse_than_start() {
        let start = [0.3, 0.9];
        let (f0, _) = rosenbrock(&start).unwrap();
        let opts = LbfgsOptions {
            max_iters: 3,
            ..Default::default()
        };
        let m = minimize(rosenbrock, &start, &[-2.0, -2.0], &[2.0, 2.0], &opts).unwrap();
        assert!(m.value <= f0);
    }
}
